#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "dmine/benchmark.hpp"

using namespace dmine;

namespace {

BenchmarkPlan small_plan() {
  BenchmarkPlan p = BenchmarkPlan::defaults();
  p.grid = {{2, 2}, {6, 8}};
  p.landscapes_per_config = 2;
  p.runs_per_landscape = 3;
  p.budget = 120;
  p.checkpoints = {40, 120};
  p.base_seed = 11;
  return p;
}

}  // namespace

TEST(Benchmark, InitOnlyBudgetReportsBestInitialCascade) {
  BenchmarkPlan p = small_plan();
  p.budget = 5;
  p.checkpoints = {5};
  p.keep_trajectories = true;
  const auto r = run_benchmark(p);
  GeneticConfig<BinaryEncoding> genetic;
  for (const auto& g : r.groups) {
    for (const auto& run : g.runs) {
      LandscapeParams params;
      params.k = g.k;
      params.c = g.c;
      params.seed = run.landscape_seed;
      const Landscape land = Landscape::generate(params);
      SimulatedEvaluator ev(land);
      RunState<BitGenome> state;
      state.rng = Rng(run.run_seed);
      auto prop = propose(state, g.strategy, genetic, 4, 5);
      double best = -1.0;
      for (const auto& cas : prop.cascades) best = std::max(best, land.cascade_fitness(cas));
      EXPECT_EQ(run.at_checkpoint[0], best);
      EXPECT_EQ(run.trajectory.size(), 5u);
    }
  }
}

TEST(Benchmark, FlatLandscapeGivesExactlyTwo) {
  BenchmarkPlan p = small_plan();
  p.table = [](std::size_t, std::size_t, std::uint64_t) { return 0.5; };
  const auto r = run_benchmark(p);
  for (const auto& row : significance_table(r, versus_one_plus_four)) {
    EXPECT_EQ(row.mean, 2.0);
    EXPECT_FALSE(row.significant);
  }
}

TEST(Benchmark, PairedSeedsAndMonotoneCheckpoints) {
  const auto r = run_benchmark(small_plan());
  ASSERT_EQ(r.groups.size(), 12u);
  for (const auto& g : r.groups) {
    ASSERT_EQ(g.runs.size(), 6u);
    const auto& ref = r.group(g.k, g.c, "1p4");
    for (std::size_t i = 0; i < g.runs.size(); ++i) {
      EXPECT_EQ(g.runs[i].landscape_seed, ref.runs[i].landscape_seed);
      EXPECT_EQ(g.runs[i].run_seed, ref.runs[i].run_seed);
      EXPECT_LE(g.runs[i].at_checkpoint[0], g.runs[i].at_checkpoint[1]);
    }
    EXPECT_EQ(g.mean_trajectory.size(), 120u);
    for (std::size_t e = 1; e < g.mean_trajectory.size(); ++e)
      EXPECT_LE(g.mean_trajectory[e - 1], g.mean_trajectory[e]);
  }
  std::set<std::uint64_t> landscapes;
  for (const auto& run : r.group(2, 2, "1p4").runs) landscapes.insert(run.landscape_seed);
  EXPECT_EQ(landscapes.size(), 2u);
}

TEST(Benchmark, WorkerCountDoesNotChangeResults) {
  BenchmarkPlan a = small_plan();
  BenchmarkPlan b = small_plan();
  b.workers = 3;
  EXPECT_EQ(results_csv(run_benchmark(a)), results_csv(run_benchmark(b)));
}

TEST(Benchmark, ResumeReusesFinishedGroups) {
  const auto dir = std::filesystem::temp_directory_path() / "dmine_bench_resume";
  std::filesystem::remove_all(dir);
  BenchmarkPlan p = small_plan();
  p.resume_dir = dir;
  int fresh = 0, resumed = 0;
  auto count = [&](const GroupResult&, bool from_disk) { ++(from_disk ? resumed : fresh); };
  const auto first = run_benchmark(p, count);
  EXPECT_EQ(fresh, 12);
  const auto second = run_benchmark(p, count);
  EXPECT_EQ(resumed, 12);
  EXPECT_EQ(results_csv(first), results_csv(second));
  EXPECT_EQ(trajectory_csv(first), trajectory_csv(second));
  // A different plan does not pick up stale groups.
  p.base_seed = 12;
  resumed = 0;
  run_benchmark(p, count);
  EXPECT_EQ(resumed, 0);
  std::filesystem::remove_all(dir);
}

TEST(Benchmark, BaselineAgainstItselfIsNeverFlagged) {
  const auto r = run_benchmark(small_plan());
  for (const auto& row : significance_table(r, [](const std::string& s) { return s; })) {
    EXPECT_FALSE(row.significant);
    EXPECT_EQ(row.p_value, 1.0);
  }
  for (const auto& row : significance_table(r, versus_fixed)) {
    if (!row.strategy.starts_with("50P-")) EXPECT_FALSE(row.significant);
    EXPECT_EQ(row.baseline, versus_fixed(row.strategy));
  }
}

TEST(Benchmark, ResultsCsvRoundTrip) {
  const auto r = run_benchmark(small_plan());
  std::istringstream in(results_csv(r));
  const auto back = parse_results_csv(in);
  EXPECT_EQ(back.checkpoints, r.checkpoints);
  EXPECT_EQ(summary_csv(significance_table(back, versus_one_plus_four)),
            summary_csv(significance_table(r, versus_one_plus_four)));
  std::istringstream bad("k,c\n1,2\n");
  EXPECT_THROW(parse_results_csv(bad), ValidationError);
}

TEST(Benchmark, PlanValidation) {
  BenchmarkPlan p = small_plan();
  p.checkpoints = {500};
  EXPECT_THROW(run_benchmark(p), ValidationError);
  p = small_plan();
  p.strategies.clear();
  EXPECT_THROW(run_benchmark(p), ValidationError);
}
