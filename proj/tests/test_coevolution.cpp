#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "dmine/coevolution.hpp"
#include "fixtures.hpp"

using namespace dmine;
using dmine::testing::constant_landscape;
using dmine::testing::small_params;

namespace {

Strategy make(StrategyKind kind, PopulationMode mode = PopulationMode::fixed) {
  Strategy s;
  s.kind = kind;
  s.population = mode;
  return s;
}

GeneticConfig<BinaryEncoding> binary(std::size_t n) {
  GeneticConfig<BinaryEncoding> g;
  g.encoding.n = n;
  return g;
}

const StrategyKind kAllKinds[] = {StrategyKind::one_plus_four, StrategyKind::one_plus_one_per_species,
                                  StrategyKind::one_plus_four_off};

// The (1+4) loop written out directly: sequential species, four offspring each
// partnered with the other species' elites. Uses the same draw order as the
// engine (init cascades cascade-major, then per-offspring mutation).
double reference_one_plus_four(const Landscape& l, std::uint64_t budget, std::uint64_t seed) {
  const std::size_t S = l.species_count();
  const std::size_t n = l.genes();
  Rng rng(seed);
  std::vector<CascadeConfig> init;
  std::vector<double> init_fit;
  for (int c = 0; c < 5; ++c) {
    CascadeConfig cfg;
    for (std::size_t s = 0; s < S; ++s) {
      BitGenome g(n);
      for (std::size_t i = 0; i < n; ++i) g.set(i, rng.below(2) == 1);
      cfg.push_back(g);
    }
    init.push_back(cfg);
    init_fit.push_back(l.cascade_fitness(cfg));
  }
  const std::size_t first_best =
      static_cast<std::size_t>(std::max_element(init_fit.begin(), init_fit.end()) - init_fit.begin());
  CascadeConfig elites = init[first_best];
  std::vector<double> elite_fit(S, init_fit[first_best]);
  double best = init_fit[first_best];
  std::uint64_t evals = 5;
  while (evals < budget) {
    for (std::size_t s = 0; s < S && evals < budget; ++s) {
      std::vector<BitGenome> kids;
      std::vector<double> fit;
      for (int j = 0; j < 4; ++j) kids.push_back(mutate_binary(elites[s], 0.05, rng));
      const std::size_t count = std::min<std::uint64_t>(4, budget - evals);
      for (std::size_t j = 0; j < count; ++j) {
        CascadeConfig cfg = elites;
        cfg[s] = kids[j];
        fit.push_back(l.cascade_fitness(cfg));
      }
      const std::size_t w =
          static_cast<std::size_t>(std::max_element(fit.begin(), fit.end()) - fit.begin());
      const double top = fit[w];
      for (std::size_t r = 0; r < S; ++r)
        if (r != s) elite_fit[r] = std::max(elite_fit[r], top);
      if (top > elite_fit[s]) {
        elites[s] = kids[w];
        elite_fit[s] = top;
      }
      evals += count;
      best = std::max(best, top);
    }
  }
  return best;
}

}  // namespace

TEST(Coevolution, InitOnFlatLandscape) {
  const Landscape flat = constant_landscape(20, 2, 2, 4);
  SimulatedEvaluator ev(flat);
  for (auto kind : kAllKinds) {
    auto state = init_run(ev, make(kind), binary(20), 1);
    ASSERT_EQ(state.best_history.size(), 1u);
    EXPECT_EQ(state.best_history[0], (HistoryPoint{5, 2.0}));
    EXPECT_EQ(state.evaluations_used, 5u);
    ASSERT_EQ(state.species.size(), 4u);
    for (const auto& sp : state.species) {
      EXPECT_EQ(sp.population.size(), 1u);
      EXPECT_EQ(sp.elite_member().fitness, 2.0);
    }
  }
}

TEST(Coevolution, InitPicksBestCascadeAndFillsExpandingPopulations) {
  const Landscape l = Landscape::generate(small_params(3, 20, 2, 2, 4));
  SimulatedEvaluator ev(l);
  auto fixed = init_run(ev, make(StrategyKind::one_plus_four), binary(20), 9);
  auto again = init_run(ev, make(StrategyKind::one_plus_four), binary(20), 9);
  EXPECT_EQ(fixed.elite_cascade(), again.elite_cascade());
  EXPECT_EQ(l.cascade_fitness(fixed.elite_cascade()), fixed.best_fitness);
  EXPECT_EQ(fixed.best_cascade, fixed.elite_cascade());

  auto grow = init_run(ev, make(StrategyKind::one_plus_four, PopulationMode::expanding), binary(20), 9);
  for (const auto& sp : grow.species) EXPECT_EQ(sp.population.size(), 5u);
  EXPECT_EQ(grow.elite_cascade(), fixed.elite_cascade());
}

TEST(Coevolution, FlatLandscapeNeverMovesElites) {
  const Landscape flat = constant_landscape(20, 2, 2, 4);
  SimulatedEvaluator ev(flat);
  for (auto kind : kAllKinds) {
    auto out = run(ev, make(kind), binary(20), 200, 4);
    auto init = init_run(ev, make(kind), binary(20), 4);
    EXPECT_EQ(out.state.elite_cascade(), init.elite_cascade());
    for (double v : out.trajectory) EXPECT_EQ(v, 2.0);
  }
}

TEST(Coevolution, OffspringAndEvaluationAccounting) {
  const Landscape l = Landscape::generate(small_params(5, 20, 2, 2, 4));
  SimulatedEvaluator ev(l);
  const auto g = binary(20);

  auto off = init_run(ev, make(StrategyKind::one_plus_four_off), g, 1);
  for (int i = 0; i < 10; ++i) {
    auto p = propose(off, make(StrategyKind::one_plus_four_off), g, 4, 1000);
    EXPECT_EQ(p.offspring_created, 16u);
    EXPECT_EQ(p.cascades.size(), 4u);
    apply(off, make(StrategyKind::one_plus_four_off), p, ev.evaluate(p.request()));
    EXPECT_EQ(off.evaluations_used, 5u + 4u * static_cast<unsigned>(i + 1));
  }

  auto one = init_run(ev, make(StrategyKind::one_plus_one_per_species), g, 1);
  for (int i = 0; i < 10; ++i) step(one, ev, make(StrategyKind::one_plus_one_per_species), g);
  EXPECT_EQ(one.evaluations_used, 5u + 4u * 10u);

  auto seq = init_run(ev, make(StrategyKind::one_plus_four), g, 1);
  for (int i = 0; i < 3; ++i) step(seq, ev, make(StrategyKind::one_plus_four), g);
  EXPECT_EQ(seq.evaluations_used, 5u + 4u * 4u * 3u);
  EXPECT_EQ(seq.best_history.size(), 1u + 12u);
}

TEST(Coevolution, BudgetTruncatesFinalBatch) {
  const Landscape l = Landscape::generate(small_params(5, 20, 2, 2, 4));
  SimulatedEvaluator ev(l);
  for (auto kind : kAllKinds) {
    for (std::uint64_t budget : {5u, 6u, 17u, 400u, 403u}) {
      auto out = run(ev, make(kind), binary(20), budget, 2);
      EXPECT_EQ(out.state.evaluations_used, budget);
      ASSERT_EQ(out.trajectory.size(), budget);
      EXPECT_TRUE(std::is_sorted(out.trajectory.begin(), out.trajectory.end()));
      EXPECT_EQ(out.trajectory.back(), out.state.best_fitness);
    }
    auto init_only = run(ev, make(kind), binary(20), 5, 2);
    for (double v : init_only.trajectory) EXPECT_EQ(v, init_only.state.best_history[0].best_fitness);
  }
  EXPECT_THROW(run(ev, make(StrategyKind::one_plus_four), binary(20), 4, 2), ValidationError);
}

TEST(Coevolution, MatchesDirectLoop) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Landscape l = Landscape::generate(small_params(seed + 100));
    SimulatedEvaluator ev(l);
    const auto out = run(ev, make(StrategyKind::one_plus_four), binary(4), 400, seed);
    EXPECT_EQ(out.state.best_fitness, reference_one_plus_four(l, 400, seed)) << "seed " << seed;
  }
}

TEST(Coevolution, ElitesNonDecreasingAndBestIsEvaluated) {
  const Landscape l = Landscape::generate(small_params(8, 20, 6, 8, 4));
  SimulatedEvaluator ev(l);
  for (auto kind : kAllKinds) {
    for (auto mode : {PopulationMode::fixed, PopulationMode::expanding}) {
      const auto strat = make(kind, mode);
      auto state = init_run(ev, strat, binary(20), 17);
      std::vector<double> last(4);
      for (std::size_t s = 0; s < 4; ++s) last[s] = state.species[s].elite_member().fitness;
      while (state.evaluations_used < 1000) {
        step(state, ev, strat, binary(20), 1000);
        for (std::size_t s = 0; s < 4; ++s) {
          const auto& sp = state.species[s];
          EXPECT_GE(sp.elite_member().fitness, last[s]);
          last[s] = sp.elite_member().fitness;
          EXPECT_LE(sp.population.size(), 50u);
          if (mode == PopulationMode::fixed) EXPECT_EQ(sp.population.size(), 1u);
        }
      }
      EXPECT_EQ(l.cascade_fitness(state.best_cascade), state.best_fitness);
      if (kind == StrategyKind::one_plus_four || kind == StrategyKind::one_plus_four_off) {
        // These strategies keep the composed elites a jointly evaluated cascade.
        EXPECT_EQ(l.cascade_fitness(state.elite_cascade()), state.best_fitness);
      }
      if (mode == PopulationMode::expanding)
        for (const auto& sp : state.species) EXPECT_EQ(sp.population.size(), 50u);
    }
  }
}

TEST(Coevolution, ReplayDeterminism) {
  const Landscape l = Landscape::generate(small_params(8, 20, 2, 8, 4));
  SimulatedEvaluator ev(l);
  for (auto kind : kAllKinds) {
    auto a = run(ev, make(kind, PopulationMode::expanding), binary(20), 500, 31);
    auto b = run(ev, make(kind, PopulationMode::expanding), binary(20), 500, 31);
    EXPECT_EQ(a.trajectory, b.trajectory);
    EXPECT_EQ(a.state.elite_cascade(), b.state.elite_cascade());
    EXPECT_TRUE(a.state.rng == b.state.rng);
  }
}

TEST(Coevolution, FrozenSpeciesNeverChange) {
  const Landscape l = Landscape::generate(small_params(2, 20, 2, 2, 4));
  for (auto kind : kAllKinds) {
    std::vector<CascadeConfig> seen;
    FunctionEvaluator<BitGenome> ev(4, [&](const CascadeConfig& c) {
      seen.push_back(c);
      return l.cascade_fitness(c);
    });
    const auto strat = make(kind);
    auto state = init_run(ev, strat, binary(20), 5);
    const auto frozen_elites = state.elite_cascade();
    state.frozen = {true, true, true, false};
    seen.clear();
    for (int i = 0; i < 30; ++i) step(state, ev, strat, binary(20));
    for (const auto& c : seen)
      for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(c[s], frozen_elites[s]);
    for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(state.elite_cascade()[s], frozen_elites[s]);
    EXPECT_NE(state.elite_cascade()[3], frozen_elites[3]);
  }
}

TEST(Coevolution, TieBrokenBySecondaryMetric) {
  // Equal primary fitness everywhere; the secondary metric is the insert's
  // gene sum at the last position, so elites drift toward larger sums.
  FunctionEvaluator<InsertGenome> ev(
      2, [](const Cascade<InsertGenome>&) { return 1.0; },
      [](const Cascade<InsertGenome>& c) { return std::optional<double>(c[1].sum()); });
  GeneticConfig<InsertEncoding> g;
  const auto strat = make(StrategyKind::one_plus_four);
  auto state = init_run(ev, strat, g, 3);
  const int start = state.elite_cascade()[1].sum();
  for (int i = 0; i < 20; ++i) step(state, ev, strat, g);
  EXPECT_GT(state.elite_cascade()[1].sum(), start);

  // Without a secondary metric the incumbent is kept.
  FunctionEvaluator<InsertGenome> flat(2, [](const Cascade<InsertGenome>&) { return 1.0; });
  auto s2 = init_run(flat, strat, g, 3);
  const auto before = s2.elite_cascade();
  for (int i = 0; i < 20; ++i) step(s2, flat, strat, g);
  EXPECT_EQ(s2.elite_cascade(), before);
}

TEST(Coevolution, ChampionRerun) {
  const Landscape l = Landscape::generate(small_params(2, 20, 2, 2, 4));
  SimulatedEvaluator sim(l);
  Strategy strat = make(StrategyKind::one_plus_one_per_species);
  strat.rerun_champion = true;
  auto state = init_run(sim, strat, binary(20), 5);
  const double recorded = state.species[0].elite_member().fitness;
  auto p = propose(state, strat, binary(20), 4, 100);
  ASSERT_TRUE(p.champion_included);
  ASSERT_EQ(p.cascades.size(), 5u);
  EXPECT_EQ(p.cascades.back(), state.elite_cascade());
  auto r = sim.evaluate(p.request());
  EXPECT_EQ(r.outcomes.back().fitness, recorded);
  apply(state, strat, p, r);
  EXPECT_EQ(state.evaluations_used, 9u);  // re-run is free in simulation

  // A lower re-run value becomes the bar offspring must clear.
  Strategy counted = strat;
  counted.champion_counts = true;
  auto s2 = init_run(sim, counted, binary(20), 5);
  auto p2 = propose(s2, counted, binary(20), 4, 100);
  auto r2 = sim.evaluate(p2.request());
  r2.outcomes.back().fitness = 0.1;
  for (std::size_t c = 0; c + 1 < r2.outcomes.size(); ++c) r2.outcomes[c].fitness = 0.2;
  apply(s2, counted, p2, r2);
  EXPECT_EQ(s2.evaluations_used, 10u);
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(s2.species[s].elite_member().genome, p2.cascades[s][s]);
    EXPECT_EQ(s2.species[s].elite_member().fitness, 0.2);
  }
}

TEST(Coevolution, RejectsStaleOrShortResults) {
  const Landscape l = Landscape::generate(small_params(2, 20, 2, 2, 4));
  SimulatedEvaluator sim(l);
  const auto strat = make(StrategyKind::one_plus_one_per_species);
  auto state = init_run(sim, strat, binary(20), 5);
  auto p = propose(state, strat, binary(20), 4, 100);
  auto r = sim.evaluate(p.request());
  r.batch_id += 1;
  EXPECT_THROW(apply(state, strat, p, r), StaleBatchError);
  r.batch_id -= 1;
  r.outcomes.pop_back();
  EXPECT_THROW(apply(state, strat, p, r), MalformedResultError);
}

TEST(Coevolution, RandomMatchingIsAPermutation) {
  const Landscape l = Landscape::generate(small_params(2, 20, 2, 2, 4));
  SimulatedEvaluator sim(l);
  Strategy strat = make(StrategyKind::one_plus_four_off);
  strat.matching = OffspringMatching::random;
  auto state = init_run(sim, strat, binary(20), 5);
  auto p = propose(state, strat, binary(20), 4, 100);
  EXPECT_EQ(p.offspring.size(), 16u);
  std::vector<int> per_cascade(4, 0);
  for (const auto& o : p.offspring) {
    ++per_cascade[o.cascade];
    EXPECT_EQ(p.cascades[o.cascade][o.species], o.genome);
  }
  for (int c : per_cascade) EXPECT_EQ(c, 4);
}

TEST(Coevolution, RejectsCrossover) {
  const Landscape l = Landscape::generate(small_params(2));
  SimulatedEvaluator sim(l);
  auto g = binary(4);
  g.crossover_rate = 0.1;
  EXPECT_THROW(init_run(sim, make(StrategyKind::one_plus_four), g, 1), ValidationError);
}
