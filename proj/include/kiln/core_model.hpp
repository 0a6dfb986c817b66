#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kiln/errors.hpp"

namespace kiln {

using VmId = std::uint32_t;

enum class Stage {
  Created,
  Provisioned,
  Configured,
  Executing,
  Collecting,
  Reduced,
  Transferring,
  Complete,
  Failed,
};

inline constexpr std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Created: return "Created";
    case Stage::Provisioned: return "Provisioned";
    case Stage::Configured: return "Configured";
    case Stage::Executing: return "Executing";
    case Stage::Collecting: return "Collecting";
    case Stage::Reduced: return "Reduced";
    case Stage::Transferring: return "Transferring";
    case Stage::Complete: return "Complete";
    case Stage::Failed: return "Failed";
  }
  return "?";
}

inline constexpr bool is_terminal(Stage s) noexcept {
  return s == Stage::Complete || s == Stage::Failed;
}

struct StageState {
  Stage stage = Stage::Created;
  std::uint32_t iteration = 0;

  friend bool operator==(const StageState&, const StageState&) = default;
};

enum class EventKind {
  ProvisionOk,
  ProvisionQuorumFail,
  ConfigOk,
  BeginExecution,
  BurstDone,
  Collected,
  ReduceDone,
  TransferOk,
  FatalError,
};

inline constexpr std::string_view to_string(EventKind e) noexcept {
  switch (e) {
    case EventKind::ProvisionOk: return "ProvisionOk";
    case EventKind::ProvisionQuorumFail: return "ProvisionQuorumFail";
    case EventKind::ConfigOk: return "ConfigOk";
    case EventKind::BeginExecution: return "BeginExecution";
    case EventKind::BurstDone: return "BurstDone";
    case EventKind::Collected: return "Collected";
    case EventKind::ReduceDone: return "ReduceDone";
    case EventKind::TransferOk: return "TransferOk";
    case EventKind::FatalError: return "FatalError";
  }
  return "?";
}

struct SchedulerEvent {
  EventKind kind;
  bool converged = false;  // only meaningful for ReduceDone

  static constexpr SchedulerEvent reduce_done(bool converged) noexcept {
    return {EventKind::ReduceDone, converged};
  }
};

/// Successor of `state` under `event`. Pure.
///
/// Created -ProvisionOk-> Provisioned -ConfigOk-> Configured -BeginExecution->
/// Executing -BurstDone-> Collecting -Collected-> Reduced, then ReduceDone
/// loops back to Executing (iteration + 1) or moves on to Transferring, and
/// TransferOk ends in Complete. Created -ProvisionQuorumFail-> Failed, and
/// FatalError fails any non-terminal stage. Every other pair throws
/// ContractViolation.
inline StageState stage_transition(StageState state, SchedulerEvent event) {
  const auto edge = [&](Stage from, EventKind on) {
    return state.stage == from && event.kind == on;
  };

  if (event.kind == EventKind::FatalError && !is_terminal(state.stage))
    return {Stage::Failed, state.iteration};
  if (edge(Stage::Created, EventKind::ProvisionOk)) return {Stage::Provisioned, state.iteration};
  if (edge(Stage::Created, EventKind::ProvisionQuorumFail)) return {Stage::Failed, state.iteration};
  if (edge(Stage::Provisioned, EventKind::ConfigOk)) return {Stage::Configured, state.iteration};
  if (edge(Stage::Configured, EventKind::BeginExecution)) return {Stage::Executing, state.iteration};
  if (edge(Stage::Executing, EventKind::BurstDone)) return {Stage::Collecting, state.iteration};
  if (edge(Stage::Collecting, EventKind::Collected)) return {Stage::Reduced, state.iteration};
  if (edge(Stage::Reduced, EventKind::ReduceDone)) {
    if (event.converged) return {Stage::Transferring, state.iteration};
    return {Stage::Executing, state.iteration + 1};
  }
  if (edge(Stage::Transferring, EventKind::TransferOk)) return {Stage::Complete, state.iteration};

  throw ContractViolation("no stage edge from " + std::string(to_string(state.stage)) + " on " +
                          std::string(to_string(event.kind)));
}

enum class FaultTag { Crash, VmLost, TransferTimeout };

inline constexpr std::string_view to_string(FaultTag f) noexcept {
  switch (f) {
    case FaultTag::Crash: return "Crash";
    case FaultTag::VmLost: return "VmLost";
    case FaultTag::TransferTimeout: return "TransferTimeout";
  }
  return "?";
}

struct AttemptRecord {
  VmId vm = 0;
  std::optional<FaultTag> fault;  // empty means success
  std::uint64_t ticks = 0;

  bool succeeded() const noexcept { return !fault.has_value(); }
  friend bool operator==(const AttemptRecord&, const AttemptRecord&) = default;
};

enum class TaskStatus { Pending, Running, Succeeded, Failed };

inline constexpr std::string_view to_string(TaskStatus s) noexcept {
  switch (s) {
    case TaskStatus::Pending: return "Pending";
    case TaskStatus::Running: return "Running";
    case TaskStatus::Succeeded: return "Succeeded";
    case TaskStatus::Failed: return "Failed";
  }
  return "?";
}

/// One map task and everything that happened to it.
///
/// The payload parameters are the run's PayloadParams with `temperature`
/// substituted, so only the per-task temperature is stored here.
struct TaskRecord {
  std::uint32_t task_index = 0;
  std::uint32_t iteration = 0;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  std::optional<VmId> assigned_vm;
  std::vector<AttemptRecord> attempts;
  bool rescheduled = false;
  // Attempts made before the reschedule; the retry budget restarts after it.
  std::uint32_t attempts_before_reschedule = 0;
  TaskStatus status = TaskStatus::Pending;

  std::uint32_t attempts_on_current_vm() const noexcept {
    return static_cast<std::uint32_t>(attempts.size()) - attempts_before_reschedule;
  }

  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

}  // namespace kiln
