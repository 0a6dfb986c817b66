#pragma once

// Local dataset catalog: one directory per (experiment, iteration) holding
// copied run outputs plus a manifest.json with checksums and extracted
// metadata. Manifests are the source of truth; index.json is a cache.

#include <fnmatch.h>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kiln/errors.hpp"
#include "kiln/fsutil.hpp"
#include "kiln/plots.hpp"
#include "kiln/run_spec.hpp"

namespace kiln::curation {

using MetaValue = std::variant<std::string, double>;
using Metadata = std::map<std::string, MetaValue>;

inline std::string to_string(const MetaValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  return std::get<std::string>(v);
}

inline Json to_json(const MetaValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

struct FileRecord {
  std::string path;  // relative to the dataset directory
  std::uint64_t size = 0;
  std::string sha256;
  friend bool operator==(const FileRecord&, const FileRecord&) = default;
};

struct DatasetManifest {
  std::string dataset_id;
  std::string experiment;
  std::uint32_t iteration = 0;
  std::vector<FileRecord> files;
  Metadata metadata;
  std::uint64_t created_tick = 0;
  std::vector<std::string> warnings;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline Json to_json(const DatasetManifest& m) {
  Json files = Json::array();
  for (const auto& f : m.files)
    files.push_back(Json{{"path", f.path}, {"size", f.size}, {"sha256", f.sha256}});
  Json meta = Json::object();
  for (const auto& [k, v] : m.metadata) meta[k] = to_json(v);
  return Json{{"dataset_id", m.dataset_id},
              {"experiment", m.experiment},
              {"iteration", m.iteration},
              {"files", std::move(files)},
              {"metadata", std::move(meta)},
              {"created_tick", m.created_tick},
              {"warnings", m.warnings}};
}

inline DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.experiment = j.at("experiment").get<std::string>();
  m.iteration = j.at("iteration").get<std::uint32_t>();
  for (const auto& f : j.at("files"))
    m.files.push_back({f.at("path").get<std::string>(), f.at("size").get<std::uint64_t>(),
                       f.at("sha256").get<std::string>()});
  for (const auto& [k, v] : j.at("metadata").items()) {
    if (v.is_number())
      m.metadata[k] = v.get<double>();
    else
      m.metadata[k] = v.get<std::string>();
  }
  m.created_tick = j.at("created_tick").get<std::uint64_t>();
  if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

// ---------------------------------------------------------------------------
// Metadata filters
// ---------------------------------------------------------------------------

/// Extracts metadata from files whose dataset-relative path matches
/// `file_pattern` (fnmatch with FNM_PATHNAME, so `*` stops at '/').
struct MetadataFilter {
  std::string name;
  std::string file_pattern;
  std::function<Metadata(std::string_view bytes)> extractor;

  bool matches(const std::string& relative_path) const {
    return ::fnmatch(file_pattern.c_str(), relative_path.c_str(), FNM_PATHNAME) == 0;
  }
};

inline constexpr std::string_view kHrmcMetricsFilter = "hrmc-metrics";

/// Built-in filter for payload output documents at the top of a dataset.
inline MetadataFilter hrmc_metrics_filter() {
  return {std::string(kHrmcMetricsFilter), "*.json", [](std::string_view bytes) {
            Metadata out;
            const Json doc = Json::parse(bytes);
            for (const char* key : {"best_cost", "chi2", "energy", "temperature", "task_index"}) {
              auto it = doc.find(key);
              if (it != doc.end() && it->is_number()) out[key] = it->get<double>();
            }
            return out;
          }};
}

/// Filters known by name.
class FilterRegistry {
public:
  FilterRegistry() { add(hrmc_metrics_filter()); }

  void add(MetadataFilter filter) {
    auto it = std::find_if(filters_.begin(), filters_.end(),
                           [&](const MetadataFilter& f) { return f.name == filter.name; });
    if (it != filters_.end())
      *it = std::move(filter);
    else
      filters_.push_back(std::move(filter));
  }

  const MetadataFilter* find(std::string_view name) const {
    for (const auto& f : filters_)
      if (f.name == name) return &f;
    return nullptr;
  }

  const std::vector<MetadataFilter>& all() const noexcept { return filters_; }

private:
  std::vector<MetadataFilter> filters_;
};

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

enum class CompareOp { Eq, Lt, Gt };

inline CompareOp parse_op(std::string_view op) {
  if (op == "=") return CompareOp::Eq;
  if (op == "<") return CompareOp::Lt;
  if (op == ">") return CompareOp::Gt;
  throw InputError("unknown operator '" + std::string(op) + "'");
}

struct Predicate {
  std::string key;
  CompareOp op = CompareOp::Eq;
  MetaValue value;
};

// Number if the whole token parses as one, otherwise a string.
inline MetaValue parse_value(std::string_view token) {
  double d = 0.0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), d);
  if (ec == std::errc{} && end == token.data() + token.size() && !token.empty()) return d;
  return std::string(token);
}

/// Parses `key<value`, `key>value` or `key=value`.
inline Predicate parse_predicate(std::string_view text) {
  const auto pos = text.find_first_of("=<>");
  if (pos == std::string_view::npos || pos == 0 || pos + 1 >= text.size())
    throw InputError("bad predicate '" + std::string(text) + "', expected key<op>value");
  const auto value = text.substr(pos + 1);
  if (value.find_first_of("=<>") != std::string_view::npos)
    throw InputError("bad predicate '" + std::string(text) + "'");
  return {std::string(text.substr(0, pos)), parse_op(text.substr(pos, 1)), parse_value(value)};
}

/// Numeric comparison when both sides are numbers; otherwise only `=` can
/// match, by string equality.
inline bool satisfies(const Metadata& meta, const Predicate& p) {
  auto it = meta.find(p.key);
  if (it == meta.end()) return false;
  const auto* lhs = std::get_if<double>(&it->second);
  const auto* rhs = std::get_if<double>(&p.value);
  if (lhs && rhs) {
    switch (p.op) {
      case CompareOp::Eq: return *lhs == *rhs;
      case CompareOp::Lt: return *lhs < *rhs;
      case CompareOp::Gt: return *lhs > *rhs;
    }
  }
  return p.op == CompareOp::Eq && to_string(it->second) == to_string(p.value);
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

class DuplicateDataset : public InputError {
public:
  using InputError::InputError;
};

inline std::string dataset_id_for(const std::string& experiment, std::uint32_t iteration) {
  return experiment + "/iter_" + pad4(iteration);
}

inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kIndexFile = "index.json";
inline constexpr std::string_view kPlotsDir = "plots";

/// Single-writer catalog rooted at a directory:
/// `<root>/<experiment>/iter_NNNN/{files..., manifest.json}`.
class Catalog {
public:
  /// Opens (creating if needed) the catalog. Loads index.json when present,
  /// otherwise rebuilds the index from manifests on disk.
  explicit Catalog(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (!fs::is_directory(root_)) throw IoError("catalog root " + root_.string() + " unusable");
    if (fs::exists(root_ / kIndexFile))
      load_index();
    else
      rebuild();
  }

  const fs::path& root() const noexcept { return root_; }

  /// Copies every file under `dir` into the catalog as dataset
  /// `<experiment>/iter_NNNN`, checksums them, and runs each filter over the
  /// files it matches. Later filters override earlier keys (with a warning).
  /// Unreadable files and failing filters become warnings; a duplicate
  /// dataset_id throws DuplicateDataset and leaves the catalog untouched.
  DatasetManifest ingest(const fs::path& dir, const std::string& experiment,
                         std::uint32_t iteration, const std::vector<MetadataFilter>& filters) {
    static const std::regex safe("[A-Za-z0-9_-]+");
    if (!std::regex_match(experiment, safe))
      throw InputError("experiment name '" + experiment + "' is not filesystem-safe");
    const std::string id = dataset_id_for(experiment, iteration);
    const fs::path dest = root_ / experiment / ("iter_" + pad4(iteration));
    if (datasets_.contains(id) || fs::exists(dest))
      throw DuplicateDataset("dataset " + id + " already exists");
    if (!fs::is_directory(dir)) throw IoError("cannot read run output directory " + dir.string());

    DatasetManifest m;
    m.dataset_id = id;
    m.experiment = experiment;
    m.iteration = iteration;
    m.metadata["experiment"] = experiment;
    m.metadata["iteration"] = static_cast<double>(iteration);

    fs::path partial = dest;
    partial += ".partial";
    std::error_code ec;
    fs::remove_all(partial, ec);
    fs::create_directories(partial);

    std::vector<std::pair<std::string, std::string>> contents;  // path, bytes
    for (const auto& rel : source_entries(dir)) {
      std::string bytes;
      try {
        bytes = read_file(dir / rel);
      } catch (const IoError& e) {
        m.warnings.push_back("unreadable file " + rel + ": " + e.what());
        continue;
      }
      write_file(partial / rel, bytes);
      m.files.push_back({rel, bytes.size(), sha256_hex(bytes)});
      contents.emplace_back(rel, std::move(bytes));
    }

    for (const auto& filter : filters) {
      for (const auto& [rel, bytes] : contents) {
        if (!filter.matches(rel)) continue;
        Metadata extracted;
        try {
          extracted = filter.extractor(bytes);
        } catch (const std::exception& e) {
          m.warnings.push_back("filter " + filter.name + " failed on " + rel + ": " + e.what());
          continue;
        }
        for (auto& [key, value] : extracted) {
          auto it = m.metadata.find(key);
          if (it != m.metadata.end() && it->second != value)
            m.warnings.push_back("metadata conflict on '" + key + "': " + filter.name + " (" +
                                 rel + ") overrides " + to_string(it->second));
          m.metadata[key] = std::move(value);
        }
      }
    }

    m.created_tick = next_tick_;
    write_file(partial / kManifestFile, to_json(m).dump(2) + "\n");
    fs::create_directories(dest.parent_path());
    fs::rename(partial, dest, ec);
    if (ec) throw IoError("cannot commit dataset " + id + ": " + ec.message());

    ++next_tick_;
    datasets_.emplace(id, m);
    save_index();
    return m;
  }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : datasets_) ids.push_back(id);
    return ids;
  }

  /// Ids whose metadata satisfies every predicate, sorted.
  std::vector<std::string> search(const std::vector<Predicate>& query) const {
    std::vector<std::string> ids;
    for (const auto& [id, m] : datasets_) {
      if (std::all_of(query.begin(), query.end(),
                      [&](const Predicate& p) { return satisfies(m.metadata, p); }))
        ids.push_back(id);
    }
    return ids;
  }

  const DatasetManifest* find(const std::string& id) const {
    auto it = datasets_.find(id);
    return it == datasets_.end() ? nullptr : &it->second;
  }

  std::vector<DatasetManifest> manifests() const {
    std::vector<DatasetManifest> out;
    for (const auto& [_, m] : datasets_) out.push_back(m);
    return out;
  }

  fs::path dataset_dir(const DatasetManifest& m) const {
    return root_ / m.experiment / ("iter_" + pad4(m.iteration));
  }

  /// Re-hashes every file of `m`; false on any missing file or mismatch.
  bool verify(const DatasetManifest& m) const {
    for (const auto& f : m.files) {
      try {
        const std::string bytes = read_file(dataset_dir(m) / f.path);
        if (bytes.size() != f.size || sha256_hex(bytes) != f.sha256) return false;
      } catch (const IoError&) {
        return false;
      }
    }
    return true;
  }

  /// Rebuilds the in-memory state and index.json from manifest files alone.
  void rebuild() {
    datasets_.clear();
    next_tick_ = 0;
    std::error_code ec;
    for (const auto& exp : fs::directory_iterator(root_, ec)) {
      if (!exp.is_directory()) continue;
      for (const auto& ds : fs::directory_iterator(exp.path(), ec)) {
        const fs::path manifest = ds.path() / kManifestFile;
        if (!ds.is_directory() || !fs::is_regular_file(manifest)) continue;
        add_loaded(manifest_from_json(Json::parse(read_file(manifest))));
      }
    }
    save_index();
  }

  /// Writes cost_vs_iteration.csv/.svg and points_iter_NNNN.csv for
  /// `experiment` into `<root>/<experiment>/plots/`. Datasets without
  /// best_cost metadata are skipped with a warning.
  std::vector<fs::path> emit_plots(const std::string& experiment,
                                   std::vector<std::string>* warnings = nullptr) const {
    std::vector<const DatasetManifest*> sets;
    for (const auto& [_, m] : datasets_)
      if (m.experiment == experiment) sets.push_back(&m);
    if (sets.empty()) throw InputError("experiment '" + experiment + "' has no datasets");
    std::sort(sets.begin(), sets.end(), [](auto* a, auto* b) { return a->iteration < b->iteration; });

    const auto warn = [&](std::string w) {
      if (warnings) warnings->push_back(std::move(w));
    };
    const fs::path out_dir = root_ / experiment / kPlotsDir;
    std::vector<fs::path> emitted;
    std::vector<std::pair<std::uint32_t, double>> series;

    for (const DatasetManifest* m : sets) {
      auto cost = m->metadata.find("best_cost");
      if (cost == m->metadata.end() || !std::holds_alternative<double>(cost->second)) {
        warn("dataset " + m->dataset_id + " has no best_cost metadata; skipped");
        continue;
      }
      const double best = std::get<double>(cost->second);
      series.emplace_back(m->iteration, best);

      std::optional<Json> doc;
      for (const auto& f : m->files) {
        if (f.path.find('/') != std::string::npos || !f.path.ends_with(".json")) continue;
        try {
          Json j = Json::parse(read_file(dataset_dir(*m) / f.path));
          if (j.contains("best_points")) {
            doc = std::move(j);
            break;
          }
        } catch (const std::exception&) {
        }
      }
      if (!doc) {
        warn("dataset " + m->dataset_id + " has no best_points document");
        continue;
      }
      std::vector<plots::Point3> pts;
      for (const auto& p : doc->at("best_points"))
        pts.push_back({p.at(0).get<double>(), p.at(1).get<double>(), best});
      const fs::path path = out_dir / ("points_iter_" + pad4(m->iteration) + ".csv");
      write_file(path, plots::points_csv(pts));
      emitted.push_back(path);
    }

    const fs::path csv_path = out_dir / "cost_vs_iteration.csv";
    write_file(csv_path, plots::cost_csv(series));
    std::vector<plots::Point2> line;
    for (const auto& [it, c] : series) line.push_back({static_cast<double>(it), c});
    const fs::path svg_path = out_dir / "cost_vs_iteration.svg";
    write_file(svg_path, plots::line_svg(line, experiment + ": best cost per iteration",
                                         "iteration", "best cost"));
    emitted.insert(emitted.begin(), {csv_path, svg_path});
    return emitted;
  }

private:
  // Regular files plus dangling symlinks (so they surface as unreadable).
  static std::vector<std::string> source_entries(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      const bool dangling = e.is_symlink() && !fs::exists(e.path());
      if (e.is_regular_file() || dangling)
        out.push_back(fs::relative(e.path(), dir).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void add_loaded(DatasetManifest m) {
    next_tick_ = std::max(next_tick_, m.created_tick + 1);
    const std::string id = m.dataset_id;
    datasets_.insert_or_assign(id, std::move(m));
  }

  void load_index() {
    const Json index = Json::parse(read_file(root_ / kIndexFile));
    for (const auto& entry : index.at("datasets")) {
      const fs::path manifest = root_ / entry.at("manifest").get<std::string>();
      add_loaded(manifest_from_json(Json::parse(read_file(manifest))));
    }
  }

  void save_index() const {
    Json entries = Json::array();
    for (const auto& [id, m] : datasets_)
      entries.push_back(Json{{"dataset_id", id},
                             {"manifest", m.experiment + "/iter_" + pad4(m.iteration) + "/" +
                                              std::string(kManifestFile)}});
    write_file_atomic(root_ / kIndexFile, Json{{"datasets", std::move(entries)}}.dump(2) + "\n");
  }

  fs::path root_;
  std::map<std::string, DatasetManifest> datasets_;
  std::uint64_t next_tick_ = 0;
};

}  // namespace kiln::curation
