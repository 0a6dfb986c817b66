#pragma once

// Iterative MapReduce connector: fan a burst of annealing chains out from
// the incumbent configuration, reduce to the best result (with elitism),
// test convergence, and regenerate the next burst.

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "kiln/core_model.hpp"
#include "kiln/errors.hpp"
#include "kiln/hrmc.hpp"
#include "kiln/platform.hpp"
#include "kiln/rng.hpp"
#include "kiln/run_spec.hpp"

namespace kiln {

struct BurstTask {
  std::uint32_t task_index = 0;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  friend bool operator==(const BurstTask&, const BurstTask&) = default;
};

/// One iteration's map input. Every task starts from the same incumbent.
struct BurstInput {
  std::uint32_t iteration = 0;
  hrmc::Configuration start;
  std::vector<BurstTask> tasks;
};

struct ReducedResult {
  std::uint32_t iteration = 0;
  std::uint32_t best_task_index = 0;
  std::uint32_t best_iteration = 0;  // iteration that produced the incumbent
  double best_cost = 0.0;
  hrmc::Configuration best_configuration;
  Json best_document;  // payload output of the incumbent task
  std::vector<std::pair<std::uint32_t, double>> cost_trace;
};

/// Geometric cooling: t_initial * (t_final / t_initial)^(iteration / max_iterations).
inline double schedule_temperature(const AnnealingSchedule& s, std::uint32_t iteration,
                                   std::uint32_t max_iterations) {
  const double frac = static_cast<double>(iteration) / static_cast<double>(max_iterations);
  return s.t_initial * std::pow(s.t_final / s.t_initial, frac);
}

/// Task k of n sits at T(iteration) * spread^((k - (n-1)/2) / max(n-1, 1)),
/// symmetric in log-space around the schedule temperature.
inline double task_temperature(const AnnealingSchedule& s, std::uint32_t iteration,
                               std::uint32_t max_iterations, std::uint32_t k, std::uint32_t n) {
  const double base = schedule_temperature(s, iteration, max_iterations);
  const double centre = (static_cast<double>(n) - 1.0) / 2.0;
  const double span = std::max(static_cast<double>(n) - 1.0, 1.0);
  return base * std::pow(s.spread_factor, (static_cast<double>(k) - centre) / span);
}

inline BurstInput map_phase(std::uint32_t iteration, const hrmc::Configuration& incumbent,
                            const RunSpec& spec, const AnnealingSchedule& schedule) {
  const std::uint32_t n = spec.compute.tasks_per_burst;
  const std::uint32_t max_it = spec.payload.convergence.max_iterations;
  BurstInput burst{iteration, incumbent, {}};
  burst.tasks.reserve(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    const double t = task_temperature(schedule, iteration, max_it, k, n);
    if (!(t > 0)) throw ContractViolation("map_phase: non-positive temperature");
    burst.tasks.push_back({k, derive_task_seed(spec.master_seed, iteration, k), t});
  }
  return burst;
}

/// Argmin over the burst's reported best costs (lowest task_index on ties).
/// The previous incumbent survives when it is strictly better. Iteration
/// numbering follows `previous`: 0 without one, previous + 1 otherwise.
inline ReducedResult reduce_phase(const std::vector<TaskOutcome>& outcomes,
                                  const std::optional<ReducedResult>& previous) {
  if (outcomes.empty()) throw ContractViolation("reduce_phase: empty outcome list");
  const TaskOutcome* best = nullptr;
  double best_cost = 0.0;
  for (const auto& o : outcomes) {
    if (!o.ok())
      throw ContractViolation("reduce_phase: task " + std::to_string(o.task_index) + " failed");
    const double c = o.document().at("best_cost").get<double>();
    if (!best || c < best_cost || (c == best_cost && o.task_index < best->task_index)) {
      best = &o;
      best_cost = c;
    }
  }

  ReducedResult out;
  out.iteration = previous ? previous->iteration + 1 : 0;
  if (previous) out.cost_trace = previous->cost_trace;

  if (previous && previous->best_cost < best_cost) {
    out.best_task_index = previous->best_task_index;
    out.best_iteration = previous->best_iteration;
    out.best_cost = previous->best_cost;
    out.best_configuration = previous->best_configuration;
    out.best_document = previous->best_document;
  } else {
    out.best_task_index = best->task_index;
    out.best_iteration = out.iteration;
    out.best_cost = best_cost;
    out.best_document = best->document();
    out.best_configuration = hrmc::points_from_json(out.best_document.at("best_points"));
  }
  out.cost_trace.emplace_back(out.iteration, out.best_cost);
  return out;
}

inline bool converged(const ReducedResult& r, const ConvergenceCriterion& c) noexcept {
  return r.best_cost <= c.cost_threshold || r.iteration + 1 >= c.max_iterations;
}

inline BurstInput next_batch(const ReducedResult& result, std::uint32_t iteration,
                             const RunSpec& spec, const AnnealingSchedule& schedule) {
  if (converged(result, spec.payload.convergence))
    throw ContractViolation("next_batch called after convergence");
  return map_phase(iteration + 1, result.best_configuration, spec, schedule);
}

/// What the scheduler needs from a connector.
class Connector {
public:
  virtual ~Connector() = default;

  virtual Json payload_setup() const = 0;
  virtual BurstInput first_burst() = 0;
  virtual BurstInput next_batch(const ReducedResult& result) = 0;
  virtual PayloadResult execute(const BurstInput& burst, const TaskRecord& task) const = 0;
  virtual ReducedResult reduce(const std::vector<TaskOutcome>& outcomes,
                               const std::optional<ReducedResult>& previous) = 0;
  virtual bool converged(const ReducedResult& result) const = 0;
};

/// MapReduce connector running the hidden-target structure-fitting payload.
class HrmcConnector final : public Connector {
public:
  explicit HrmcConnector(RunSpec spec)
      : spec_(std::move(spec)), instance_(hrmc::make_instance(spec_.payload)) {}

  const hrmc::Instance& instance() const noexcept { return instance_; }

  Json payload_setup() const override {
    return Json{{"payload", "hrmc-toy"},
                {"n_points", spec_.payload.n_points},
                {"instance_seed", spec_.payload.instance_seed}};
  }

  BurstInput first_burst() override {
    return map_phase(0, instance_.initial, spec_, spec_.payload.annealing);
  }

  BurstInput next_batch(const ReducedResult& result) override {
    return kiln::next_batch(result, result.iteration, spec_, spec_.payload.annealing);
  }

  PayloadResult execute(const BurstInput& burst, const TaskRecord& task) const override {
    const auto& inst = instance_;
    auto chain = hrmc::run_chain(burst.start, task.temperature, spec_.payload.steps, task.seed,
                                 spec_.payload.sigma,
                                 [&inst](const hrmc::Configuration& c) { return inst.total_cost(c); });
    const hrmc::CostBreakdown best = inst.evaluate(chain.best);
    return {hrmc::task_output(task.task_index, task.seed, task.temperature, chain, best),
            spec_.payload.steps};
  }

  ReducedResult reduce(const std::vector<TaskOutcome>& outcomes,
                       const std::optional<ReducedResult>& previous) override {
    return reduce_phase(outcomes, previous);
  }

  bool converged(const ReducedResult& result) const override {
    return kiln::converged(result, spec_.payload.convergence);
  }

private:
  RunSpec spec_;
  hrmc::Instance instance_;
};

}  // namespace kiln
