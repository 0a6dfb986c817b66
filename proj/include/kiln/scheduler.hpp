#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kiln/connector.hpp"
#include "kiln/core_model.hpp"
#include "kiln/errors.hpp"
#include "kiln/fsutil.hpp"
#include "kiln/platform.hpp"
#include "kiln/run_spec.hpp"

namespace kiln {

struct QuorumCheck {
  bool proceed = false;
  std::uint32_t provisioned = 0;
  std::uint32_t minimal = 0;
};

inline QuorumCheck check_quorum(std::uint32_t provisioned, const ComputeSpec& compute) noexcept {
  return {provisioned >= compute.minimal_vms, provisioned, compute.minimal_vms};
}

/// Round-robin: ascending task_index over ascending VmId.
inline std::map<std::uint32_t, VmId> schedule_burst(std::span<const TaskRecord> tasks,
                                                    std::span<const VmHandle> vms) {
  if (vms.empty()) throw IllegalState("schedule_burst: no active VMs");
  if (tasks.empty()) throw ContractViolation("schedule_burst: empty burst");
  std::vector<VmId> ids;
  for (const auto& vm : vms) ids.push_back(vm.id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::uint32_t> order;
  for (const auto& t : tasks) order.push_back(t.task_index);
  std::sort(order.begin(), order.end());

  std::map<std::uint32_t, VmId> assignment;
  for (std::size_t i = 0; i < order.size(); ++i) assignment[order[i]] = ids[i % ids.size()];
  return assignment;
}

struct FailureAction {
  enum class Kind { Retry, Reschedule, MarkFailed };
  Kind kind = Kind::MarkFailed;
  std::optional<VmId> vm;  // target VM for Retry/Reschedule

  static FailureAction retry(VmId vm) { return {Kind::Retry, vm}; }
  static FailureAction reschedule(VmId vm) { return {Kind::Reschedule, vm}; }
  static FailureAction mark_failed() { return {Kind::MarkFailed, std::nullopt}; }
};

inline std::string_view to_string(FailureAction::Kind k) noexcept {
  switch (k) {
    case FailureAction::Kind::Retry: return "Retry";
    case FailureAction::Kind::Reschedule: return "Reschedule";
    case FailureAction::Kind::MarkFailed: return "MarkFailed";
  }
  return "?";
}

/// Decide what to do after `task`'s last attempt failed.
///
/// Retry on the same VM while attempts on it are ≤ max_retries and it is
/// still usable. Otherwise, if rescheduling is enabled and the task has not
/// moved yet, relocate it to the usable VM with the fewest unfinished tasks in
/// `burst` (lowest VmId on ties); the retry budget restarts there.
inline FailureAction handle_failure(const TaskRecord& task, FaultTag fault,
                                    const ReliabilitySpec& reliability,
                                    std::span<const VmHandle> vms,
                                    std::span<const TaskRecord> burst = {}) {
  const auto current = task.assigned_vm;
  const auto usable = [&](VmId id) {
    return std::any_of(vms.begin(), vms.end(),
                       [&](const VmHandle& vm) { return vm.id == id && vm.usable(); });
  };
  const bool alive = current && fault != FaultTag::VmLost && usable(*current);

  if (alive && task.attempts_on_current_vm() <= reliability.max_retries)
    return FailureAction::retry(*current);

  if (reliability.reschedule_failed && !task.rescheduled) {
    std::optional<VmId> best;
    std::size_t best_load = 0;
    for (const auto& vm : vms) {
      if (!vm.usable() || (current && vm.id == *current)) continue;
      const auto load = static_cast<std::size_t>(
          std::count_if(burst.begin(), burst.end(), [&](const TaskRecord& t) {
            return t.assigned_vm == vm.id &&
                   (t.status == TaskStatus::Pending || t.status == TaskStatus::Running);
          }));
      if (!best || load < best_load || (load == best_load && vm.id < *best)) {
        best = vm.id;
        best_load = load;
      }
    }
    if (best) return FailureAction::reschedule(*best);
  }
  return FailureAction::mark_failed();
}

struct VmEvent {
  std::string event;  // provisioned | configured | lost | destroyed
  VmId vm = 0;
  std::uint32_t iteration = 0;
};

struct ManifestEntry {
  std::string path;
  std::uint64_t size = 0;
  std::string sha256;
};

struct RunFailure {
  std::string kind;  // QuorumFailure | QuorumLost | TaskFailed | TransferFailed | Error
  std::string detail;
};

struct RunReport {
  std::string spec_name;
  StageState final_stage;
  std::uint32_t iterations_executed = 0;
  std::vector<TaskRecord> tasks;
  std::vector<VmEvent> vm_events;
  bool converged = false;
  std::optional<double> best_metric;
  std::vector<std::pair<std::uint32_t, double>> cost_trace;
  std::vector<ManifestEntry> output_manifest;
  std::optional<RunFailure> failure;
  std::uint64_t payload_executions = 0;

  std::size_t count_events(std::string_view kind) const {
    return static_cast<std::size_t>(std::count_if(
        vm_events.begin(), vm_events.end(), [&](const VmEvent& e) { return e.event == kind; }));
  }
};

inline Json to_json(const TaskRecord& t) {
  Json attempts = Json::array();
  for (const auto& a : t.attempts)
    attempts.push_back(Json{{"vm", a.vm},
                            {"outcome", a.fault ? std::string(to_string(*a.fault)) : "Success"},
                            {"ticks", a.ticks}});
  return Json{{"task_index", t.task_index},
              {"iteration", t.iteration},
              {"seed", t.seed},
              {"temperature", t.temperature},
              {"assigned_vm", t.assigned_vm ? Json(*t.assigned_vm) : Json(nullptr)},
              {"rescheduled", t.rescheduled},
              {"status", to_string(t.status)},
              {"attempts", std::move(attempts)}};
}

/// Stable field order; identical runs serialize byte-identically.
inline Json to_json(const RunReport& r) {
  Json trace = Json::array();
  for (const auto& [it, c] : r.cost_trace) trace.push_back(Json::array({it, c}));
  Json tasks = Json::array();
  for (const auto& t : r.tasks) tasks.push_back(to_json(t));
  Json events = Json::array();
  for (const auto& e : r.vm_events)
    events.push_back(Json{{"event", e.event}, {"vm", e.vm}, {"iteration", e.iteration}});
  Json manifest = Json::array();
  for (const auto& m : r.output_manifest)
    manifest.push_back(Json{{"path", m.path}, {"size", m.size}, {"sha256", m.sha256}});
  return Json{
      {"spec_name", r.spec_name},
      {"final_stage", {{"stage", to_string(r.final_stage.stage)}, {"iteration", r.final_stage.iteration}}},
      {"iterations_executed", r.iterations_executed},
      {"converged", r.converged},
      {"best_metric", r.best_metric ? Json(*r.best_metric) : Json(nullptr)},
      {"failure", r.failure ? Json{{"kind", r.failure->kind}, {"detail", r.failure->detail}}
                            : Json(nullptr)},
      {"payload_executions", r.payload_executions},
      {"cost_trace", std::move(trace)},
      {"tasks", std::move(tasks)},
      {"vm_events", std::move(events)},
      {"output_manifest", std::move(manifest)}};
}

/// Called after each reduce with the directory holding that iteration's
/// collected outputs. Throwing aborts the run.
using IterationHook = std::function<void(std::uint32_t iteration, const fs::path& dir)>;

struct RunOptions {
  IterationHook on_iteration;
  bool write_report = true;
};

inline constexpr std::string_view kStagingDir = ".staging";
inline constexpr std::string_view kOutputsDir = "outputs";
inline constexpr std::string_view kReportFile = "report.json";

namespace detail {

struct RunAbort {
  RunFailure failure;
};

inline std::string iteration_dir_name(std::uint32_t iteration) { return "iter_" + pad4(iteration); }

}  // namespace detail

/// Drive `spec` through the full stage graph on `platform`:
/// provision, quorum check, configure, then burst/collect/reduce until the
/// connector reports convergence, transfer outputs, and tear down. Every
/// provisioned VM is destroyed on every exit path.
inline RunReport run(const RunSpec& spec, Platform& platform, Connector& connector,
                     const RunOptions& options = {}) {
  RunReport report;
  report.spec_name = spec.name;
  StageState state;
  std::vector<VmHandle> fleet;
  const auto advance = [&](SchedulerEvent e) { state = stage_transition(state, e); };

  const fs::path out_dir = spec.output_location;
  const fs::path staging = out_dir / kStagingDir;

  try {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    fs::remove_all(staging, ec);

    fleet = platform.provision(spec.compute.desired_vms);
    for (const auto& vm : fleet) report.vm_events.push_back({"provisioned", vm.id, 0});

    const QuorumCheck quorum =
        check_quorum(static_cast<std::uint32_t>(fleet.size()), spec.compute);
    if (!quorum.proceed) {
      advance({EventKind::ProvisionQuorumFail});
      report.failure = RunFailure{"QuorumFailure", "provisioned " +
                                                       std::to_string(quorum.provisioned) +
                                                       " of " +
                                                       std::to_string(spec.compute.desired_vms) +
                                                       ", minimal " + std::to_string(quorum.minimal)};
    } else {
      advance({EventKind::ProvisionOk});
      const Json setup = connector.payload_setup();
      for (auto& vm : fleet) {
        vm = platform.configure(vm, setup);
        report.vm_events.push_back({"configured", vm.id, 0});
      }
      advance({EventKind::ConfigOk});
      advance({EventKind::BeginExecution});

      std::optional<ReducedResult> reduced;
      BurstInput burst = connector.first_burst();
      while (true) {
        const std::uint32_t iteration = burst.iteration;
        std::vector<VmHandle> active;
        for (const auto& vm : fleet)
          if (vm.usable()) active.push_back(vm);
        if (active.size() < spec.compute.minimal_vms)
          throw detail::RunAbort{{"QuorumLost", std::to_string(active.size()) +
                                                    " active VMs before iteration " +
                                                    std::to_string(iteration) + ", minimal " +
                                                    std::to_string(spec.compute.minimal_vms)}};

        std::vector<TaskRecord> tasks;
        for (const auto& bt : burst.tasks) {
          TaskRecord t;
          t.task_index = bt.task_index;
          t.iteration = iteration;
          t.seed = bt.seed;
          t.temperature = bt.temperature;
          tasks.push_back(std::move(t));
        }
        const auto assignment = schedule_burst(tasks, active);
        for (auto& t : tasks) t.assigned_vm = assignment.at(t.task_index);

        const PayloadFn payload = [&](const TaskRecord& t) { return connector.execute(burst, t); };
        std::vector<TaskOutcome> outcomes;
        std::optional<RunFailure> task_failure;
        for (auto& t : tasks) {
          while (true) {
            const auto vm_it = std::find_if(fleet.begin(), fleet.end(),
                                            [&](const VmHandle& v) { return v.id == *t.assigned_vm; });
            t.status = TaskStatus::Running;
            TaskOutcome outcome = platform.execute_task(*vm_it, t, payload);
            ++report.payload_executions;
            if (outcome.ok()) {
              t.attempts.push_back({vm_it->id, std::nullopt, outcome.ticks});
              t.status = TaskStatus::Succeeded;
              outcomes.push_back(std::move(outcome));
              break;
            }
            t.attempts.push_back({vm_it->id, outcome.fault(), outcome.ticks});
            const FailureAction action =
                handle_failure(t, outcome.fault(), spec.reliability, fleet, tasks);
            if (action.kind == FailureAction::Kind::Retry) continue;
            if (action.kind == FailureAction::Kind::Reschedule) {
              t.attempts_before_reschedule = static_cast<std::uint32_t>(t.attempts.size());
              t.rescheduled = true;
              t.assigned_vm = *action.vm;
              continue;
            }
            t.status = TaskStatus::Failed;
            task_failure = RunFailure{
                "TaskFailed", "task " + std::to_string(t.task_index) + " of iteration " +
                                  std::to_string(iteration) + " failed after " +
                                  std::to_string(t.attempts.size()) + " attempt(s)"};
            break;
          }
          if (task_failure) break;
        }
        report.tasks.insert(report.tasks.end(), tasks.begin(), tasks.end());
        if (task_failure) throw detail::RunAbort{*task_failure};

        fleet = platform.end_burst_vm_loss(std::move(fleet), iteration);
        for (const auto& vm : fleet)
          if (vm.state == VmState::Lost &&
              std::none_of(report.vm_events.begin(), report.vm_events.end(),
                           [&](const VmEvent& e) { return e.event == "lost" && e.vm == vm.id; }))
            report.vm_events.push_back({"lost", vm.id, iteration});
        advance({EventKind::BurstDone});

        const fs::path iter_dir = staging / detail::iteration_dir_name(iteration);
        for (const auto& o : outcomes)
          write_file(iter_dir / "tasks" / ("task_" + pad4(o.task_index) + ".json"),
                     o.document().dump(2) + "\n");
        advance({EventKind::Collected});

        reduced = connector.reduce(outcomes, reduced);
        write_file(iter_dir / "best_task.json", reduced->best_document.dump(2) + "\n");
        report.iterations_executed += 1;
        report.best_metric = reduced->best_cost;
        report.cost_trace = reduced->cost_trace;

        if (spec.curate && options.on_iteration) {
          try {
            options.on_iteration(iteration, iter_dir);
          } catch (const std::exception& e) {
            throw detail::RunAbort{{"CurationError", e.what()}};
          }
        }

        const bool done = connector.converged(*reduced);
        advance(SchedulerEvent::reduce_done(done));
        if (done) break;
        burst = connector.next_batch(*reduced);
      }

      Json result{{"iterations", report.iterations_executed},
                  {"best_iteration", reduced->best_iteration},
                  {"best_task_index", reduced->best_task_index},
                  {"best_cost", reduced->best_cost},
                  {"best_points", hrmc::points_to_json(reduced->best_configuration)}};
      write_file(staging / "result.json", result.dump(2) + "\n");

      FileSet artifact;
      for (const auto& rel : list_files(staging)) artifact.push_back({staging / rel, rel});
      const fs::path destination = out_dir / kOutputsDir;
      bool transferred = false;
      for (std::uint32_t attempt = 0; attempt <= spec.reliability.max_retries; ++attempt) {
        if (!platform.transfer(artifact, destination)) {
          transferred = true;
          break;
        }
      }
      if (!transferred)
        throw detail::RunAbort{{"TransferFailed",
                                "transfer timed out " +
                                    std::to_string(spec.reliability.max_retries + 1) + " time(s)"}};
      for (const auto& rel : list_files(destination)) {
        const std::string bytes = read_file(destination / rel);
        report.output_manifest.push_back({std::string(kOutputsDir) + "/" + rel, bytes.size(),
                                          sha256_hex(bytes)});
      }
      fs::remove_all(staging, ec);
      advance({EventKind::TransferOk});
      report.converged = true;
    }
  } catch (const detail::RunAbort& abort) {
    report.failure = abort.failure;
  } catch (const std::exception& e) {
    report.failure = RunFailure{"Error", e.what()};
  }
  if (!is_terminal(state.stage)) advance({EventKind::FatalError});

  for (auto& vm : fleet) {
    vm = platform.destroy(vm);
    report.vm_events.push_back({"destroyed", vm.id, state.iteration});
  }
  report.final_stage = state;

  if (options.write_report) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    write_file_atomic(out_dir / kReportFile, to_json(report).dump(2) + "\n");
  }
  return report;
}

}  // namespace kiln
