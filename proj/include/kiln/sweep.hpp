#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kiln/connector.hpp"
#include "kiln/errors.hpp"
#include "kiln/platform.hpp"
#include "kiln/rng.hpp"
#include "kiln/run_spec.hpp"
#include "kiln/scheduler.hpp"

namespace kiln {

/// A base run plus ordered parameter ranges. Paths are dotted RunSpec field
/// paths such as "payload.w"; the first declared path varies slowest.
struct SweepSpec {
  RunSpec base;
  std::vector<std::pair<std::string, std::vector<Json>>> ranges;
};

struct SweepSpecResult {
  std::optional<SweepSpec> sweep;
  std::vector<FieldError> errors;
  bool ok() const noexcept { return sweep.has_value(); }
};

struct Combination {
  std::size_t index = 0;
  Json values;  // path -> swept value, in declaration order
  RunSpec spec;
};

inline constexpr std::string_view kSweepSummaryFile = "sweep_summary.json";

namespace detail {

inline Json::json_pointer to_pointer(const std::string& dotted) {
  std::string p;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const auto part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw InputError("malformed parameter path '" + dotted + "'");
    p += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return Json::json_pointer(p);
}

// Fields overwritten per combination; sweeping them would be meaningless.
inline bool reserved_path(const std::string& path) {
  return path == "name" || path == "output_location" || path == "master_seed";
}

inline Json combination_document(const RunSpec& base, std::size_t k,
                                 const std::vector<std::pair<std::string, const Json*>>& values) {
  Json doc = to_json(base);
  for (const auto& [path, value] : values) doc[to_pointer(path)] = *value;
  doc["name"] = base.name + "_" + std::to_string(k);
  doc["output_location"] = (base.output_location / ("run_" + std::to_string(k))).string();
  doc["master_seed"] =
      derive_task_seed(base.master_seed, kSweepSeedTag, static_cast<std::uint32_t>(k));
  return doc;
}

// Errors for one swept path, checked by substituting each value into base.
inline void check_range(const RunSpec& base, const std::string& path, const Json& values,
                        std::vector<FieldError>& errors) {
  const std::string where = "sweep." + path;
  if (reserved_path(path)) {
    errors.push_back({where, path + " cannot be swept"});
    return;
  }
  Json::json_pointer ptr;
  try {
    ptr = to_pointer(path);
  } catch (const InputError& e) {
    errors.push_back({where, e.what()});
    return;
  }
  const Json doc = to_json(base);
  if (!doc.contains(ptr) || doc.at(ptr).is_object()) {
    errors.push_back({where, "does not name a RunSpec field"});
    return;
  }
  if (!values.is_array() || values.empty()) {
    errors.push_back({where, "expected a non-empty list of values"});
    return;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (values[i] == values[j]) {
        errors.push_back({where, "duplicate value " + values[i].dump()});
        break;
      }
    Json probe = doc;
    probe[ptr] = values[i];
    for (auto& e : validate_run_spec(probe).errors)
      errors.push_back({where + "[" + std::to_string(i) + "]", e.to_string()});
  }
}

}  // namespace detail

/// Validates a sweep file: a RunSpec document plus a `sweep` object mapping
/// parameter paths to value lists.
inline SweepSpecResult validate_sweep_spec(const Json& raw) {
  if (!raw.is_object()) return {std::nullopt, {{"", "sweep spec must be a JSON object"}}};
  Json base_doc = raw;
  Json sweep = Json::object();
  if (auto it = base_doc.find("sweep"); it != base_doc.end()) {
    sweep = *it;
    base_doc.erase(it);
  }
  auto base = validate_run_spec(base_doc);
  if (!base.ok()) return {std::nullopt, std::move(base.errors)};
  if (!sweep.is_object()) return {std::nullopt, {{"sweep", "expected an object"}}};

  SweepSpec spec{*base.spec, {}};
  std::vector<FieldError> errors;
  for (const auto& [path, values] : sweep.items()) {
    detail::check_range(spec.base, path, values, errors);
    if (values.is_array()) spec.ranges.emplace_back(path, std::vector<Json>(values.begin(), values.end()));
  }
  if (!errors.empty()) return {std::nullopt, std::move(errors)};
  return {std::move(spec), {}};
}

/// Cross-product of the ranges in lexicographic order. Combination k is named
/// `<base>_k`, writes to `<output_location>/run_k`, and is seeded with
/// derive_task_seed(base.master_seed, 0xFFFF, k).
inline std::vector<Combination> expand_combinations(const SweepSpec& sweep) {
  for (const auto& [path, values] : sweep.ranges) {
    std::vector<FieldError> errors;
    detail::check_range(sweep.base, path, Json(values), errors);
    if (!errors.empty()) throw InputError(errors.front().to_string());
  }

  std::size_t total = 1;
  for (const auto& r : sweep.ranges) total *= r.second.size();

  std::vector<Combination> out;
  out.reserve(total);
  std::vector<std::size_t> digit(sweep.ranges.size(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    std::vector<std::pair<std::string, const Json*>> chosen;
    Json values = Json::object();
    for (std::size_t p = 0; p < sweep.ranges.size(); ++p) {
      const auto& [path, list] = sweep.ranges[p];
      chosen.emplace_back(path, &list[digit[p]]);
      values[path] = list[digit[p]];
    }
    auto validated = validate_run_spec(detail::combination_document(sweep.base, k, chosen));
    if (!validated.ok()) throw InputError(validated.errors.front().to_string());
    out.push_back({k, std::move(values), std::move(*validated.spec)});

    for (std::size_t p = sweep.ranges.size(); p-- > 0;) {
      if (++digit[p] < sweep.ranges[p].second.size()) break;
      digit[p] = 0;
    }
  }
  return out;
}

inline std::vector<RunSpec> expand(const SweepSpec& sweep) {
  std::vector<RunSpec> out;
  for (auto& c : expand_combinations(sweep)) out.push_back(std::move(c.spec));
  return out;
}

using PlatformFactory = std::function<std::unique_ptr<Platform>(const Combination&)>;
using ConnectorFactory = std::function<std::unique_ptr<Connector>(const RunSpec&)>;
using RunOptionsFactory = std::function<RunOptions(const RunSpec&)>;

inline std::unique_ptr<Platform> default_platform(const Combination& c) {
  return make_platform(c.spec);
}

inline std::unique_ptr<Connector> default_connector(const RunSpec& spec) {
  return std::make_unique<HrmcConnector>(spec);
}

inline Json sweep_summary(const std::vector<Combination>& combos,
                          const std::vector<RunReport>& reports) {
  Json summary = Json::array();
  for (std::size_t k = 0; k < reports.size(); ++k)
    summary.push_back(
        Json{{"combination", combos[k].index},
             {"values", combos[k].values},
             {"final_stage", to_string(reports[k].final_stage.stage)},
             {"best_cost", reports[k].best_metric ? Json(*reports[k].best_metric) : Json(nullptr)}});
  return summary;
}

/// Runs every combination sequentially, each on its own platform instance and
/// output directory; one combination failing does not stop the rest. Writes
/// sweep_summary.json into the base output location.
inline std::vector<RunReport> run_sweep(const SweepSpec& sweep,
                                        const PlatformFactory& platforms = default_platform,
                                        const ConnectorFactory& connectors = default_connector,
                                        const RunOptionsFactory& options = {}) {
  const auto combos = expand_combinations(sweep);
  std::vector<RunReport> reports;
  reports.reserve(combos.size());
  for (const auto& c : combos) {
    auto platform = platforms(c);
    auto connector = connectors(c.spec);
    reports.push_back(run(c.spec, *platform, *connector, options ? options(c.spec) : RunOptions{}));
  }
  std::error_code ec;
  fs::create_directories(sweep.base.output_location, ec);
  write_file_atomic(sweep.base.output_location / kSweepSummaryFile,
                    sweep_summary(combos, reports).dump(2) + "\n");
  return reports;
}

}  // namespace kiln
