#include <gtest/gtest.h>

#include <set>

#include "kiln/connector.hpp"
#include "test_support.hpp"

namespace {

using namespace kiln;
using kiln::testing::TempDir;

TaskOutcome outcome(std::uint32_t index, double best_cost) {
  Json doc{{"task_index", index},
           {"best_cost", best_cost},
           {"best_points", Json::array({Json::array({0.1 * index, 0.5})})}};
  return {index, std::move(doc), 1};
}

std::vector<TaskOutcome> outcomes(std::initializer_list<double> costs) {
  std::vector<TaskOutcome> out;
  std::uint32_t k = 0;
  for (double c : costs) out.push_back(outcome(k++, c));
  return out;
}

class MapPhase : public ::testing::Test {
protected:
  TempDir dir;
  RunSpec spec = kiln::testing::small_spec(dir.path());
  AnnealingSchedule schedule{1.0, 0.01, 2.0};
  hrmc::Configuration incumbent{{{0.3, 0.4}, {0.6, 0.7}}};
};

TEST_F(MapPhase, TasksSeedsAndTemperatures) {
  spec.compute.tasks_per_burst = 5;
  spec.payload.convergence.max_iterations = 10;
  const auto burst = map_phase(3, incumbent, spec, schedule);
  ASSERT_EQ(burst.tasks.size(), 5u);
  EXPECT_EQ(burst.iteration, 3u);
  EXPECT_EQ(burst.start, incumbent);
  const double base = 1.0 * std::pow(0.01, 0.3);
  for (std::uint32_t k = 0; k < 5; ++k) {
    EXPECT_EQ(burst.tasks[k].task_index, k);
    EXPECT_EQ(burst.tasks[k].seed, derive_task_seed(42, 3, k));
    EXPECT_NEAR(burst.tasks[k].temperature, base * std::pow(2.0, (k - 2.0) / 4.0), 1e-15);
  }
  // Symmetric in log-space around the schedule temperature.
  EXPECT_NEAR(burst.tasks[0].temperature * burst.tasks[4].temperature, base * base, 1e-15);
  EXPECT_NEAR(burst.tasks[2].temperature, base, 1e-15);
}

TEST_F(MapPhase, SingleTaskSitsAtScheduleTemperature) {
  spec.compute.tasks_per_burst = 1;
  spec.payload.convergence.max_iterations = 20;
  const auto burst = map_phase(5, incumbent, spec, schedule);
  ASSERT_EQ(burst.tasks.size(), 1u);
  EXPECT_DOUBLE_EQ(burst.tasks[0].temperature, schedule_temperature(schedule, 5, 20));
}

TEST_F(MapPhase, UnitSpreadGivesEqualTemperatures) {
  spec.compute.tasks_per_burst = 4;
  schedule.spread_factor = 1.0;
  const auto burst = map_phase(1, incumbent, spec, schedule);
  for (const auto& t : burst.tasks)
    EXPECT_DOUBLE_EQ(t.temperature, schedule_temperature(schedule, 1, spec.payload.convergence.max_iterations));
}

TEST(Schedule, EndpointIsFinalTemperature) {
  const AnnealingSchedule s{2.0, 0.05, 1.0};
  EXPECT_DOUBLE_EQ(schedule_temperature(s, 0, 20), 2.0);
  EXPECT_NEAR(schedule_temperature(s, 20, 20), 0.05, 1e-15);
}

TEST_F(MapPhase, CoolingLowersEveryTemperature) {
  spec.compute.tasks_per_burst = 6;
  spec.payload.convergence.max_iterations = 20;
  schedule.spread_factor = 1.0;
  const auto first = map_phase(0, incumbent, spec, schedule);
  for (std::uint32_t it = 1; it < 20; ++it) {
    const auto later = map_phase(it, incumbent, spec, schedule);
    for (std::size_t k = 0; k < later.tasks.size(); ++k)
      EXPECT_LT(later.tasks[k].temperature, first.tasks[k].temperature);
  }
}

TEST(ReducePhase, Argmin) {
  const auto r = reduce_phase(outcomes({3.0, 1.5, 2.0}), std::nullopt);
  EXPECT_EQ(r.best_task_index, 1u);
  EXPECT_EQ(r.best_cost, 1.5);
  EXPECT_EQ(r.iteration, 0u);
  EXPECT_EQ(r.best_iteration, 0u);
  EXPECT_EQ(r.best_configuration.points.at(0).x, 0.1);
  EXPECT_EQ(r.cost_trace, (std::vector<std::pair<std::uint32_t, double>>{{0, 1.5}}));
}

TEST(ReducePhase, TieGoesToLowestIndex) {
  EXPECT_EQ(reduce_phase(outcomes({2.0, 2.0}), std::nullopt).best_task_index, 0u);
  // Order of the outcome list does not matter.
  std::vector<TaskOutcome> reversed{outcome(1, 2.0), outcome(0, 2.0)};
  EXPECT_EQ(reduce_phase(reversed, std::nullopt).best_task_index, 0u);
}

TEST(ReducePhase, ElitismRetainsIncumbent) {
  const auto first = reduce_phase(outcomes({1.2, 4.0}), std::nullopt);
  const auto second = reduce_phase(outcomes({3.0, 1.5, 2.0}), first);
  EXPECT_EQ(second.best_cost, 1.2);
  EXPECT_EQ(second.best_task_index, 0u);
  EXPECT_EQ(second.best_iteration, 0u);
  EXPECT_EQ(second.iteration, 1u);
  EXPECT_EQ(second.best_configuration, first.best_configuration);
  EXPECT_EQ(second.cost_trace, (std::vector<std::pair<std::uint32_t, double>>{{0, 1.2}, {1, 1.2}}));
}

TEST(ReducePhase, EqualCandidateReplacesIncumbent) {
  const auto first = reduce_phase(outcomes({1.2}), std::nullopt);
  const auto second = reduce_phase({outcome(3, 1.2)}, first);
  EXPECT_EQ(second.best_task_index, 3u);
  EXPECT_EQ(second.best_iteration, 1u);
}

TEST(ReducePhase, EmptyOrFailedIsContractViolation) {
  EXPECT_THROW(reduce_phase({}, std::nullopt), ContractViolation);
  std::vector<TaskOutcome> bad{outcome(0, 1.0), {1, FaultTag::Crash, 1}};
  EXPECT_THROW(reduce_phase(bad, std::nullopt), ContractViolation);
}

TEST(Converged, Examples) {
  const ConvergenceCriterion c{0.05, 20};
  ReducedResult r;
  r.best_cost = 0.04;
  EXPECT_TRUE(converged(r, c));
  r.best_cost = 0.06;
  r.iteration = 0;
  EXPECT_FALSE(converged(r, c));
  r.iteration = 19;
  r.best_cost = 1e9;
  EXPECT_TRUE(converged(r, c));
  r.best_cost = 0.05;
  r.iteration = 0;
  EXPECT_TRUE(converged(r, c));
}

TEST_F(MapPhase, NextBatchPropagatesIncumbent) {
  spec.payload.convergence = {0.05, 20};
  const auto r = reduce_phase(outcomes({3.0, 1.5}), std::nullopt);
  const auto next = next_batch(r, 0, spec, schedule);
  EXPECT_EQ(next.iteration, 1u);
  EXPECT_EQ(next.start, r.best_configuration);
  for (const auto& t : next.tasks) EXPECT_EQ(t.seed, derive_task_seed(spec.master_seed, 1, t.task_index));
}

TEST_F(MapPhase, NextBatchAfterConvergenceIsContractViolation) {
  spec.payload.convergence = {0.05, 20};
  const auto r = reduce_phase(outcomes({0.01}), std::nullopt);
  EXPECT_THROW(next_batch(r, 0, spec, schedule), ContractViolation);
}

// Drives the connector in-process without a platform.
std::vector<ReducedResult> drive(HrmcConnector& c, const RunSpec& spec, std::set<std::uint64_t>* seeds) {
  std::vector<ReducedResult> results;
  std::optional<ReducedResult> prev;
  BurstInput burst = c.first_burst();
  while (true) {
    std::vector<TaskOutcome> outs;
    for (const auto& t : burst.tasks) {
      if (seeds) EXPECT_TRUE(seeds->insert(t.seed).second) << "seed reused";
      TaskRecord rec;
      rec.task_index = t.task_index;
      rec.iteration = burst.iteration;
      rec.seed = t.seed;
      rec.temperature = t.temperature;
      auto res = c.execute(burst, rec);
      EXPECT_EQ(res.ticks, spec.payload.steps);
      outs.push_back({t.task_index, std::move(res.document), res.ticks});
    }
    prev = c.reduce(outs, prev);
    results.push_back(*prev);
    if (c.converged(*prev)) break;
    burst = c.next_batch(*prev);
  }
  return results;
}

// Elitism property over seeds, plus seed uniqueness and convergence monotonicity.
TEST(HrmcConnector, BestCostNonIncreasingAcrossSeeds) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto spec = kiln::testing::small_spec(dir.path());
    spec.master_seed = seed;
    spec.payload.convergence = {1e-9, 6};
    HrmcConnector c(spec);
    std::set<std::uint64_t> seeds;
    const auto results = drive(c, spec, &seeds);
    ASSERT_EQ(results.size(), 6u);
    EXPECT_EQ(seeds.size(), 6u * spec.compute.tasks_per_burst);
    for (std::size_t i = 1; i < results.size(); ++i) {
      EXPECT_LE(results[i].best_cost, results[i - 1].best_cost);
      EXPECT_EQ(results[i].iteration, i);
    }
    bool seen = false;
    for (const auto& r : results) {
      const bool now = c.converged(r);
      EXPECT_TRUE(!seen || now);
      seen = seen || now;
    }
    EXPECT_EQ(results.back().cost_trace.size(), 6u);
  }
}

TEST(HrmcConnector, StopsAtThreshold) {
  TempDir dir;
  auto spec = kiln::testing::small_spec(dir.path());
  spec.payload.convergence = {1e9, 20};
  HrmcConnector c(spec);
  EXPECT_EQ(drive(c, spec, nullptr).size(), 1u);
}

TEST(HrmcConnector, DeterministicPayload) {
  TempDir dir;
  const auto spec = kiln::testing::small_spec(dir.path());
  HrmcConnector a(spec), b(spec);
  const auto ra = drive(a, spec, nullptr);
  const auto rb = drive(b, spec, nullptr);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].best_cost, rb[i].best_cost);
    EXPECT_EQ(ra[i].best_document, rb[i].best_document);
  }
  EXPECT_EQ(a.payload_setup()["payload"], "hrmc-toy");
}

}  // namespace
