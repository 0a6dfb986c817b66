#pragma once

// Desk-scale analogue of a Hybrid Reverse Monte Carlo payload: move 2-D
// points so their pair-distance histogram matches a target histogram, while a
// soft-core energy term penalizes close contacts. The functional forms are
// analogues chosen for speed; none of this is real materials physics.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "kiln/errors.hpp"
#include "kiln/rng.hpp"
#include "kiln/run_spec.hpp"

namespace kiln::hrmc {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Point set in the unit box [0,1]^2.
struct Configuration {
  std::vector<Point> points;
  friend bool operator==(const Configuration&, const Configuration&) = default;
};

inline Configuration random_configuration(std::size_t n, SplitMix64& rng) {
  Configuration c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    c.points.push_back({x, y});
  }
  return c;
}

inline double distance(const Point& a, const Point& b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct PairHistogram {
  std::vector<std::uint64_t> bins;
  double r_max = 1.0;

  double bin_width() const noexcept { return r_max / static_cast<double>(bins.size()); }
  std::uint64_t total() const noexcept {
    std::uint64_t s = 0;
    for (auto b : bins) s += b;
    return s;
  }
  friend bool operator==(const PairHistogram&, const PairHistogram&) = default;
};

/// Histogram of unordered pair distances over half-open bins [lo, hi) of
/// width r_max / bins; pairs at r ≥ r_max are dropped.
inline PairHistogram pair_histogram(const Configuration& config, std::size_t bins, double r_max) {
  if (bins == 0 || !(r_max > 0)) throw ContractViolation("pair_histogram: need bins ≥ 1, r_max > 0");
  PairHistogram h{std::vector<std::uint64_t>(bins, 0), r_max};
  const double width = h.bin_width();
  const auto& p = config.points;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double r = distance(p[i], p[j]);
      if (r >= r_max) continue;
      auto b = static_cast<std::size_t>(std::floor(r / width));
      h.bins[std::min(b, bins - 1)] += 1;
    }
  }
  return h;
}

/// Soft-core repulsion: sum over pairs of (r0 / max(r, r_floor))^12.
inline double energy(const Configuration& config, double r0, double r_floor) {
  double e = 0.0;
  const auto& p = config.points;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double q = r0 / std::max(distance(p[i], p[j]), r_floor);
      const double q2 = q * q;
      const double q4 = q2 * q2;
      e += q4 * q4 * q4;
    }
  }
  return e;
}

struct CostParams {
  std::size_t bins = 20;
  double r_max = 1.5;
  double w = 0.0;
  double r0 = 0.1;
  double r_floor = 1e-3;

  static CostParams from(const PayloadParams& p) {
    return {p.bins, p.r_max, p.w, p.r0, p.r_floor};
  }
};

struct CostBreakdown {
  double chi2 = 0.0;
  double energy = 0.0;
  double w = 0.0;
  double total = 0.0;
};

/// chi2 = sum_b (h_b - t_b)^2 / max(t_b, 1); total = chi2 + w * energy.
inline CostBreakdown cost(const Configuration& config, const PairHistogram& target,
                          const CostParams& params) {
  if (target.bins.size() != params.bins)
    throw ContractViolation("cost: target has " + std::to_string(target.bins.size()) +
                            " bins, expected " + std::to_string(params.bins));
  const PairHistogram h = pair_histogram(config, params.bins, params.r_max);
  double chi2 = 0.0;
  for (std::size_t b = 0; b < params.bins; ++b) {
    const double d = static_cast<double>(h.bins[b]) - static_cast<double>(target.bins[b]);
    chi2 += d * d / std::max(static_cast<double>(target.bins[b]), 1.0);
  }
  const double e = energy(config, params.r0, params.r_floor);
  return {chi2, e, params.w, params.w == 0.0 ? chi2 : chi2 + params.w * e};
}

template <class F>
concept CostFunction = std::invocable<F, const Configuration&> &&
                       std::convertible_to<std::invoke_result_t<F, const Configuration&>, double>;

struct StepResult {
  Configuration config;
  double cost = 0.0;
  bool accepted = false;
};

/// One Metropolis move. Draw order: point index, two uniforms for the
/// Box-Muller pair, then the acceptance uniform (only when the move raises
/// the cost). Coordinates are clamped to [0, 1].
template <CostFunction F>
StepResult metropolis_step(const Configuration& config, double current_cost, F&& cost_fn,
                           double temperature, double sigma, SplitMix64& rng) {
  StepResult out{config, current_cost, false};
  if (config.points.empty()) return out;

  const std::size_t k = rng.index(config.points.size());
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double angle = 2.0 * std::numbers::pi * u2;

  Configuration proposal = config;
  Point& p = proposal.points[k];
  p.x = std::clamp(p.x + sigma * radius * std::cos(angle), 0.0, 1.0);
  p.y = std::clamp(p.y + sigma * radius * std::sin(angle), 0.0, 1.0);

  const double proposed_cost = cost_fn(std::as_const(proposal));
  const double delta = proposed_cost - current_cost;
  bool accept = delta <= 0.0;
  if (!accept) accept = rng.uniform() < std::exp(-delta / temperature);
  if (accept) {
    out.config = std::move(proposal);
    out.cost = proposed_cost;
    out.accepted = true;
  }
  return out;
}

template <CostFunction F>
StepResult metropolis_step(const Configuration& config, F&& cost_fn, double temperature,
                           double sigma, SplitMix64& rng) {
  const double current = cost_fn(config);
  return metropolis_step(config, current, std::forward<F>(cost_fn), temperature, sigma, rng);
}

struct ChainResult {
  Configuration best;
  double best_cost = 0.0;
  // (step, cost) at step 0 and at every accepted move.
  std::vector<std::pair<std::uint32_t, double>> trace;
  std::uint32_t accepted = 0;
};

/// `steps` Metropolis moves from `initial` on a stream seeded with `seed`.
/// Returns the best configuration ever visited, not the last one.
template <CostFunction F>
ChainResult run_chain(const Configuration& initial, double temperature, std::uint32_t steps,
                      std::uint64_t seed, double sigma, F&& cost_fn) {
  SplitMix64 rng(seed);
  Configuration current = initial;
  double current_cost = cost_fn(std::as_const(current));
  ChainResult out{current, current_cost, {{0u, current_cost}}, 0};
  for (std::uint32_t step = 1; step <= steps; ++step) {
    StepResult r = metropolis_step(current, current_cost, cost_fn, temperature, sigma, rng);
    if (!r.accepted) continue;
    current = std::move(r.config);
    current_cost = r.cost;
    ++out.accepted;
    out.trace.emplace_back(step, current_cost);
    if (current_cost < out.best_cost) {
      out.best = current;
      out.best_cost = current_cost;
    }
  }
  return out;
}

/// Hidden-target problem: the target histogram comes from a reference
/// configuration, so a zero-chi2 solution always exists.
struct Instance {
  PairHistogram target;
  Configuration reference;
  Configuration initial;
  CostParams params;

  CostBreakdown evaluate(const Configuration& c) const { return cost(c, target, params); }
  double total_cost(const Configuration& c) const { return evaluate(c).total; }
};

/// Reference points come from SplitMix64(instance_seed); the starting
/// configuration from the independent stream
/// derive_task_seed(instance_seed, 0xFFFE, 0).
inline Instance make_instance(const PayloadParams& p) {
  Instance inst;
  inst.params = CostParams::from(p);
  SplitMix64 ref_rng(p.instance_seed);
  inst.reference = random_configuration(p.n_points, ref_rng);
  inst.target = pair_histogram(inst.reference, p.bins, p.r_max);
  SplitMix64 init_rng(derive_task_seed(p.instance_seed, kInitialConfigTag, 0));
  inst.initial = random_configuration(p.n_points, init_rng);
  return inst;
}

inline Json points_to_json(const Configuration& c) {
  Json arr = Json::array();
  for (const auto& p : c.points) arr.push_back(Json::array({p.x, p.y}));
  return arr;
}

inline Configuration points_from_json(const Json& arr) {
  Configuration c;
  for (const auto& p : arr) c.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return c;
}

/// Payload output document for one map task.
inline Json task_output(std::uint32_t task_index, std::uint64_t seed, double temperature,
                        const ChainResult& chain, const CostBreakdown& best) {
  Json trace = Json::array();
  for (const auto& [step, c] : chain.trace) trace.push_back(Json::array({step, c}));
  return Json{{"task_index", task_index},
              {"seed", seed},
              {"temperature", temperature},
              {"best_cost", best.total},
              {"chi2", best.chi2},
              {"energy", best.energy},
              {"best_points", points_to_json(chain.best)},
              {"trace", std::move(trace)}};
}

}  // namespace kiln::hrmc
