#pragma once

// `kiln` command-line entry point. stdout carries only machine-parseable
// results (ids, stages, metrics); diagnostics go to stderr.

#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kiln/connector.hpp"
#include "kiln/curation.hpp"
#include "kiln/errors.hpp"
#include "kiln/platform.hpp"
#include "kiln/run_spec.hpp"
#include "kiln/scheduler.hpp"
#include "kiln/sweep.hpp"

namespace kiln::cli {

enum ExitStatus : int {
  kSuccess = 0,
  kRunFailed = 1,
  kValidationError = 2,
  kIoError = 3,
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline std::optional<Json> load_document(const fs::path& path, const Streams& io, int& status) {
  try {
    auto parsed = read_json_file(path);
    if (auto* err = std::get_if<FieldError>(&parsed)) {
      io.err << err->to_string() << "\n";
      status = kValidationError;
      return std::nullopt;
    }
    return std::get<Json>(std::move(parsed));
  } catch (const IoError& e) {
    io.err << "error: " << e.what() << "\n";
    status = kIoError;
    return std::nullopt;
  }
}

inline std::string metric(const RunReport& r) {
  return r.best_metric ? format_double(*r.best_metric) : "null";
}

inline RunOptions curation_options(const RunSpec& spec, curation::Catalog* catalog,
                                   const curation::FilterRegistry& filters) {
  RunOptions options;
  if (spec.curate && catalog) {
    options.on_iteration = [catalog, &filters, name = spec.name](std::uint32_t it,
                                                                 const fs::path& dir) {
      catalog->ingest(dir, name, it, filters.all());
    };
  }
  return options;
}

inline void emit_plots(const RunSpec& spec, const RunReport& report, curation::Catalog* catalog,
                       const Streams& io) {
  if (!spec.curate || !catalog || report.iterations_executed == 0) return;
  std::vector<std::string> warnings;
  for (const auto& path : catalog->emit_plots(spec.name, &warnings))
    io.err << "plot: " << path.string() << "\n";
  for (const auto& w : warnings) io.err << "warning: " << w << "\n";
}

}  // namespace detail

inline int cmd_validate(const fs::path& spec_file, const Streams& io) {
  int status = kSuccess;
  auto doc = detail::load_document(spec_file, io, status);
  if (!doc) return status;
  const auto result = validate_run_spec(*doc);
  if (!result.ok()) {
    for (const auto& e : result.errors) io.out << e.to_string() << "\n";
    return kValidationError;
  }
  io.out << "OK\n";
  return kSuccess;
}

inline int cmd_submit(const fs::path& spec_file, const fs::path& catalog_root,
                      std::optional<std::uint64_t> seed, const Streams& io) {
  int status = kSuccess;
  auto doc = detail::load_document(spec_file, io, status);
  if (!doc) return status;
  auto result = validate_run_spec(*doc);
  if (!result.ok()) {
    for (const auto& e : result.errors) io.err << e.to_string() << "\n";
    return kValidationError;
  }
  RunSpec spec = *result.spec;
  if (seed) spec.master_seed = *seed;

  try {
    std::optional<curation::Catalog> catalog;
    curation::FilterRegistry filters;
    if (spec.curate) catalog.emplace(catalog_root);
    auto platform = make_platform(spec);
    HrmcConnector connector(spec);
    const RunReport report = run(spec, *platform, connector,
                                 detail::curation_options(spec, catalog ? &*catalog : nullptr, filters));
    if (report.failure)
      io.err << "run failed: " << report.failure->kind << ": " << report.failure->detail << "\n";
    detail::emit_plots(spec, report, catalog ? &*catalog : nullptr, io);
    io.out << to_string(report.final_stage.stage) << " " << detail::metric(report) << "\n";
    return report.final_stage.stage == Stage::Complete ? kSuccess : kRunFailed;
  } catch (const IoError& e) {
    io.err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << "\n";
    return kIoError;
  }
}

inline int cmd_sweep(const fs::path& sweep_file, const fs::path& catalog_root,
                     std::optional<std::uint64_t> seed, const Streams& io) {
  int status = kSuccess;
  auto doc = detail::load_document(sweep_file, io, status);
  if (!doc) return status;
  auto result = validate_sweep_spec(*doc);
  if (!result.ok()) {
    for (const auto& e : result.errors) io.err << e.to_string() << "\n";
    return kValidationError;
  }
  SweepSpec sweep = *result.sweep;
  if (seed) sweep.base.master_seed = *seed;

  try {
    std::optional<curation::Catalog> catalog;
    curation::FilterRegistry filters;
    if (sweep.base.curate) catalog.emplace(catalog_root);
    curation::Catalog* cat = catalog ? &*catalog : nullptr;
    const auto combos = expand_combinations(sweep);
    const auto reports = run_sweep(sweep, default_platform, default_connector,
                                   [&](const RunSpec& spec) {
                                     return detail::curation_options(spec, cat, filters);
                                   });
    bool all_complete = true;
    for (std::size_t k = 0; k < reports.size(); ++k) {
      const auto& r = reports[k];
      if (r.failure)
        io.err << "run " << k << " failed: " << r.failure->kind << ": " << r.failure->detail << "\n";
      detail::emit_plots(combos[k].spec, r, cat, io);
      io.out << k << " " << to_string(r.final_stage.stage) << " " << detail::metric(r) << "\n";
      all_complete = all_complete && r.final_stage.stage == Stage::Complete;
    }
    return all_complete ? kSuccess : kRunFailed;
  } catch (const InputError& e) {
    io.err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const IoError& e) {
    io.err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << "\n";
    return kIoError;
  }
}

inline int cmd_datasets(const fs::path& catalog_root, const std::vector<std::string>* predicates,
                        const Streams& io) {
  std::vector<curation::Predicate> query;
  try {
    if (predicates)
      for (const auto& p : *predicates) query.push_back(curation::parse_predicate(p));
  } catch (const InputError& e) {
    io.err << "error: " << e.what() << "\n";
    return kValidationError;
  }
  if (!fs::is_directory(catalog_root)) {
    io.err << "error: catalog root " << catalog_root.string() << " does not exist\n";
    return kIoError;
  }
  try {
    const curation::Catalog catalog(catalog_root);
    for (const auto& id : catalog.search(query)) io.out << id << "\n";
    return kSuccess;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kIoError;
  }
}

/// Parses `args` (argv without the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string>& args, const Streams& io) {
  CLI::App app{"kiln: fault-tolerant iterative Monte Carlo runner", "kiln"};
  app.require_subcommand(1);

  std::string catalog_root = "./catalog";
  std::optional<std::uint64_t> seed;

  std::string spec_file;
  auto* validate = app.add_subcommand("validate", "Check a run-spec file");
  validate->add_option("spec", spec_file, "Run-spec JSON file")->required();

  auto* submit = app.add_subcommand("submit", "Run one connector execution");
  submit->add_option("spec", spec_file, "Run-spec JSON file")->required();
  submit->add_option("--catalog", catalog_root, "Catalog root directory");
  submit->add_option("--seed", seed, "Override the spec's master_seed");

  auto* sweep = app.add_subcommand("sweep", "Run every combination of a parameter sweep");
  sweep->add_option("spec", spec_file, "Sweep JSON file")->required();
  sweep->add_option("--catalog", catalog_root, "Catalog root directory");
  sweep->add_option("--seed", seed, "Override the base master_seed");

  auto* datasets = app.add_subcommand("datasets", "Query the curation catalog");
  datasets->require_subcommand(1);
  datasets->add_option("--catalog", catalog_root, "Catalog root directory");
  auto* list = datasets->add_subcommand("list", "List all dataset ids");
  list->add_option("--catalog", catalog_root, "Catalog root directory");
  std::vector<std::string> predicates;
  auto* search = datasets->add_subcommand("search", "Dataset ids matching every predicate");
  search->add_option("predicates", predicates, "key=value, key<number or key>number");
  search->add_option("--catalog", catalog_root, "Catalog root directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return kValidationError;
  }

  if (*validate) return cmd_validate(spec_file, io);
  if (*submit) return cmd_submit(spec_file, catalog_root, seed, io);
  if (*sweep) return cmd_sweep(spec_file, catalog_root, seed, io);
  if (*list) return cmd_datasets(catalog_root, nullptr, io);
  return cmd_datasets(catalog_root, &predicates, io);
}

}  // namespace kiln::cli
