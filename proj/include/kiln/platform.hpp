#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "kiln/core_model.hpp"
#include "kiln/errors.hpp"
#include "kiln/fsutil.hpp"
#include "kiln/rng.hpp"
#include "kiln/run_spec.hpp"

namespace kiln {

// ---------------------------------------------------------------------------
// Fault sources
// ---------------------------------------------------------------------------

enum class FaultDraw : std::uint8_t { Provision, TaskCrash, VmLoss, Transfer };

/// Identity of one fault decision. `index` is the provision request ordinal,
/// the task index, or the VmId; `attempt` is the task attempt or the transfer
/// ordinal.
struct FaultEvent {
  FaultDraw kind = FaultDraw::Provision;
  std::uint32_t iteration = 0;
  std::uint32_t index = 0;
  std::uint32_t attempt = 0;

  friend auto operator<=>(const FaultEvent&, const FaultEvent&) = default;

  static FaultEvent provision(std::uint32_t request) { return {FaultDraw::Provision, 0, request, 0}; }
  static FaultEvent crash(std::uint32_t iteration, std::uint32_t task, std::uint32_t attempt) {
    return {FaultDraw::TaskCrash, iteration, task, attempt};
  }
  static FaultEvent vm_loss(std::uint32_t iteration, VmId vm) {
    return {FaultDraw::VmLoss, iteration, vm, 0};
  }
  static FaultEvent transfer(std::uint32_t attempt) { return {FaultDraw::Transfer, 0, 0, attempt}; }
};

/// Decides whether an injected fault fires. Every call is one "draw".
class FaultSource {
public:
  virtual ~FaultSource() = default;
  virtual bool draw(const FaultEvent& event, double probability) = 0;
};

/// The canonical source: one SplitMix64 stream consumed in call order; a draw
/// faults iff uniform() < probability. Keeps a log of every decision so a run
/// can be replayed under a different policy.
class StreamFaultSource final : public FaultSource {
public:
  explicit StreamFaultSource(std::uint64_t seed) : rng_(seed) {}

  bool draw(const FaultEvent& event, double probability) override {
    const bool fault = rng_.uniform() < probability;
    log_.emplace_back(event, fault);
    return fault;
  }

  const std::vector<std::pair<FaultEvent, bool>>& log() const noexcept { return log_; }

private:
  SplitMix64 rng_;
  std::vector<std::pair<FaultEvent, bool>> log_;
};

/// Keyed source: the decision for an event depends only on (seed, event), not
/// on how many draws came before. A fixed fault schedule for every possible
/// event, independent of the scheduler's retry policy.
class HashedFaultSource final : public FaultSource {
public:
  explicit HashedFaultSource(std::uint64_t seed) : seed_(seed) {}

  bool draw(const FaultEvent& e, double probability) override {
    std::uint64_t h = seed_;
    h = splitmix64(h ^ static_cast<std::uint64_t>(e.kind));
    h = splitmix64(h ^ e.iteration);
    h = splitmix64(h ^ e.index);
    h = splitmix64(h ^ e.attempt);
    return static_cast<double>(h >> 11) * 0x1.0p-53 < probability;
  }

private:
  std::uint64_t seed_;
};

/// Explicit schedule. Listed events fault (or not) exactly as given, whatever
/// the probability; unlisted events go to the fallback, or never fault.
class ScheduledFaultSource final : public FaultSource {
public:
  explicit ScheduledFaultSource(std::map<FaultEvent, bool> schedule,
                                std::unique_ptr<FaultSource> fallback = nullptr)
      : schedule_(std::move(schedule)), fallback_(std::move(fallback)) {}

  static ScheduledFaultSource replay(const std::vector<std::pair<FaultEvent, bool>>& log,
                                     std::unique_ptr<FaultSource> fallback = nullptr) {
    return ScheduledFaultSource(std::map<FaultEvent, bool>(log.begin(), log.end()),
                                std::move(fallback));
  }

  bool draw(const FaultEvent& event, double probability) override {
    if (auto it = schedule_.find(event); it != schedule_.end()) return it->second;
    return fallback_ ? fallback_->draw(event, probability) : false;
  }

private:
  std::map<FaultEvent, bool> schedule_;
  std::unique_ptr<FaultSource> fallback_;
};

// ---------------------------------------------------------------------------
// Resources and outcomes
// ---------------------------------------------------------------------------

enum class VmState { Requested, Active, Lost, Destroyed };

inline constexpr std::string_view to_string(VmState s) noexcept {
  switch (s) {
    case VmState::Requested: return "Requested";
    case VmState::Active: return "Active";
    case VmState::Lost: return "Lost";
    case VmState::Destroyed: return "Destroyed";
  }
  return "?";
}

struct VmHandle {
  VmId id = 0;
  VmState state = VmState::Requested;
  bool configured = false;

  bool usable() const noexcept { return state == VmState::Active && configured; }
  friend bool operator==(const VmHandle&, const VmHandle&) = default;
};

struct PayloadResult {
  Json document;
  std::uint64_t ticks = 1;  // simulated compute duration
};

using PayloadFn = std::function<PayloadResult(const TaskRecord&)>;

struct TaskOutcome {
  std::uint32_t task_index = 0;
  std::variant<Json, FaultTag> result;
  std::uint64_t ticks = 0;

  bool ok() const noexcept { return std::holds_alternative<Json>(result); }
  const Json& document() const { return std::get<Json>(result); }
  FaultTag fault() const { return std::get<FaultTag>(result); }
};

struct FileEntry {
  fs::path source;
  std::string relative;  // destination-relative path, '/' separated
};
using FileSet = std::vector<FileEntry>;

struct PlatformStats {
  std::uint64_t provision_requests = 0;
  std::uint64_t provisioned = 0;
  std::uint64_t destroyed = 0;
  std::uint64_t payload_invocations = 0;
  std::uint64_t executions = 0;
  std::uint64_t vm_loss_checks = 0;
  std::uint64_t transfers = 0;
  std::uint64_t fault_draws = 0;
};

// ---------------------------------------------------------------------------
// Platform interface
// ---------------------------------------------------------------------------

/// Compute-infrastructure abstraction the scheduler drives. Calls are made
/// from a single coordinator and are not thread-safe.
class Platform {
public:
  virtual ~Platform() = default;

  virtual std::string_view name() const noexcept = 0;

  // Partial success is normal: between 0 and `count` Active handles, ids
  // assigned densely in request order.
  virtual std::vector<VmHandle> provision(std::uint32_t count) = 0;
  virtual VmHandle configure(VmHandle vm, const Json& payload_setup) = 0;
  virtual TaskOutcome execute_task(const VmHandle& vm, const TaskRecord& task,
                                   const PayloadFn& payload) = 0;
  virtual std::vector<VmHandle> end_burst_vm_loss(std::vector<VmHandle> vms,
                                                  std::uint32_t iteration) = 0;
  // nullopt on success. Throws IoError when the destination is unwritable.
  virtual std::optional<FaultTag> transfer(const FileSet& artifact,
                                           const fs::path& destination) = 0;
  virtual VmHandle destroy(VmHandle vm) = 0;

  virtual VmState state_of(VmId id) const = 0;
  virtual const PlatformStats& stats() const noexcept = 0;
};

/// Simulated cloud with injected faults. Every fault decision goes through
/// one FaultSource, in the order the scheduler issues calls: provisioning,
/// then task crashes by task index, then VM losses by VmId, then transfers.
class SimulatedCloud : public Platform {
public:
  SimulatedCloud(FaultModel model, std::unique_ptr<FaultSource> source)
      : model_(model), source_(std::move(source)) {}

  explicit SimulatedCloud(FaultModel model)
      : SimulatedCloud(model, std::make_unique<StreamFaultSource>(model.fault_seed)) {}

  std::string_view name() const noexcept override { return "simulated-cloud"; }

  std::vector<VmHandle> provision(std::uint32_t count) override {
    if (count == 0) throw ContractViolation("provision: count must be ≥ 1");
    std::vector<VmHandle> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto request = static_cast<std::uint32_t>(stats_.provision_requests++);
      if (draw(FaultEvent::provision(request), model_.p_provision_fail)) continue;
      const auto id = static_cast<VmId>(states_.size());
      states_.push_back(VmState::Active);
      ++stats_.provisioned;
      out.push_back({id, VmState::Active, false});
    }
    return out;
  }

  VmHandle configure(VmHandle vm, const Json& payload_setup) override {
    const VmState state = state_of(vm.id);
    if (state != VmState::Active)
      throw IllegalState("configure: vm " + std::to_string(vm.id) + " is " +
                         std::string(to_string(state)));
    if (!configured_.contains(vm.id)) configured_.emplace(vm.id, payload_setup);
    return {vm.id, VmState::Active, true};
  }

  TaskOutcome execute_task(const VmHandle& vm, const TaskRecord& task,
                           const PayloadFn& payload) override {
    const VmState state = state_of(vm.id);
    if (state != VmState::Active || !configured_.contains(vm.id))
      throw IllegalState("execute_task: vm " + std::to_string(vm.id) + " is " +
                         std::string(to_string(state)) +
                         (configured_.contains(vm.id) ? "" : " (unconfigured)"));
    if (task.status != TaskStatus::Pending && task.status != TaskStatus::Running)
      throw ContractViolation("execute_task: task " + std::to_string(task.task_index) + " is " +
                              std::string(to_string(task.status)));

    ++stats_.executions;
    ++stats_.payload_invocations;
    PayloadResult result = payload(task);
    const auto attempt = static_cast<std::uint32_t>(task.attempts.size());
    if (draw(FaultEvent::crash(task.iteration, task.task_index, attempt), model_.p_task_crash))
      return {task.task_index, FaultTag::Crash, result.ticks};
    return {task.task_index, std::move(result.document), result.ticks};
  }

  std::vector<VmHandle> end_burst_vm_loss(std::vector<VmHandle> vms,
                                          std::uint32_t iteration) override {
    std::vector<std::size_t> order(vms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return vms[a].id < vms[b].id; });
    for (std::size_t i : order) {
      VmHandle& vm = vms[i];
      vm.state = state_of(vm.id);
      if (vm.state != VmState::Active) continue;
      ++stats_.vm_loss_checks;
      if (draw(FaultEvent::vm_loss(iteration, vm.id), model_.p_vm_loss_per_burst)) {
        states_[vm.id] = VmState::Lost;
        vm.state = VmState::Lost;
      }
    }
    return vms;
  }

  std::optional<FaultTag> transfer(const FileSet& artifact, const fs::path& destination) override {
    for (const auto& f : artifact)
      if (!fs::is_regular_file(f.source))
        throw ContractViolation("transfer: missing artifact " + f.source.string());

    const auto attempt = static_cast<std::uint32_t>(stats_.transfers++);
    if (draw(FaultEvent::transfer(attempt), model_.p_transfer_timeout))
      return FaultTag::TransferTimeout;

    fs::path partial = destination;
    partial += ".partial";
    std::error_code ec;
    fs::remove_all(partial, ec);
    try {
      fs::create_directories(partial);
      for (const auto& f : artifact) {
        const fs::path target = partial / fs::path(f.relative);
        fs::create_directories(target.parent_path());
        fs::copy_file(f.source, target, fs::copy_options::overwrite_existing);
      }
      fs::remove_all(destination);
      fs::rename(partial, destination);
    } catch (const fs::filesystem_error& e) {
      fs::remove_all(partial, ec);
      throw IoError(std::string("transfer to ") + destination.string() + " failed: " + e.what());
    }
    return std::nullopt;
  }

  VmHandle destroy(VmHandle vm) override {
    if (vm.id < states_.size() && states_[vm.id] != VmState::Destroyed) {
      states_[vm.id] = VmState::Destroyed;
      ++stats_.destroyed;
    }
    return {vm.id, VmState::Destroyed, vm.configured};
  }

  VmState state_of(VmId id) const override {
    if (id >= states_.size()) throw IllegalState("unknown vm " + std::to_string(id));
    return states_[id];
  }

  const PlatformStats& stats() const noexcept override { return stats_; }

  const FaultModel& fault_model() const noexcept { return model_; }

  // payload_setup documents recorded by configure, for audit.
  const std::map<VmId, Json>& setups() const noexcept { return configured_; }

protected:
  bool draw(const FaultEvent& event, double probability) {
    if (!source_) return false;
    ++stats_.fault_draws;
    return source_->draw(event, probability);
  }

private:
  FaultModel model_;
  std::unique_ptr<FaultSource> source_;
  std::vector<VmState> states_;
  std::map<VmId, Json> configured_;
  PlatformStats stats_;
};

/// Runs payloads in-process. Never faults and never consumes fault draws.
class LocalProcess final : public SimulatedCloud {
public:
  LocalProcess() : SimulatedCloud(FaultModel{}, nullptr) {}
  std::string_view name() const noexcept override { return "local-process"; }
};

inline std::unique_ptr<Platform> make_platform(const RunSpec& spec) {
  if (spec.platform == PlatformKind::LocalProcess) return std::make_unique<LocalProcess>();
  return std::make_unique<SimulatedCloud>(spec.faults);
}

}  // namespace kiln
