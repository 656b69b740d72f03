#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "dmine/operators.hpp"

using namespace dmine;

TEST(MutateBinary, ZeroRateIsIdentity) {
  Rng rng(1);
  const BitGenome g = BitGenome::parse("10110011100011110000");
  EXPECT_EQ(mutate_binary(g, 0.0, rng), g);
}

TEST(MutateBinary, UnitRateIsComplement) {
  Rng rng(1);
  const BitGenome g = BitGenome::parse("10110011100011110000");
  const BitGenome m = mutate_binary(g, 1.0, rng);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NE(m[i], g[i]);
  EXPECT_EQ(g.str(), "10110011100011110000");
}

TEST(MutateBinary, MeanFlipCount) {
  // Binomial(20, 0.05) has mean 1.0; 10^5 trials give a standard error of ~0.003.
  Rng rng(77);
  const BitGenome g(20);
  constexpr int kTrials = 100000;
  double flips = 0;
  for (int t = 0; t < kTrials; ++t) flips += static_cast<double>(mutate_binary(g, 0.05, rng).count());
  EXPECT_NEAR(flips / kTrials, 1.0, 0.03);
  EXPECT_THROW(mutate_binary(g, 1.5, rng), ValidationError);
}

TEST(MutateInsert, LowerBoundForcesIncrement) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const InsertGenome m = mutate_insert(InsertGenome{}, rng);
    int ones = 0;
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_TRUE(m[i] == 0 || m[i] == 1);
      ones += m[i];
    }
    EXPECT_EQ(ones, 2);
  }
}

TEST(MutateInsert, UpperBoundForcesDecrement) {
  Rng rng(4);
  const InsertGenome top{3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3};
  for (int t = 0; t < 100; ++t) {
    const InsertGenome m = mutate_insert(top, rng);
    int twos = 0;
    for (std::size_t i = 0; i < 12; ++i) twos += m[i] == 2;
    EXPECT_EQ(twos, 2);
    EXPECT_EQ(m.sum(), 34);
  }
}

TEST(MutateInsert, PositionAndDirectionFrequencies) {
  // Each position is hit with probability 2/12; interior genes step either way
  // with probability 1/2.
  Rng rng(5);
  const InsertGenome mid{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  constexpr int kTrials = 10000;
  std::array<int, 12> hits{};
  int up = 0;
  int changes = 0;
  for (int t = 0; t < kTrials; ++t) {
    const InsertGenome m = mutate_insert(mid, rng);
    int altered = 0;
    for (std::size_t i = 0; i < 12; ++i) {
      if (m[i] != 1) {
        ++hits[i];
        ++altered;
        ++changes;
        up += m[i] == 2;
        EXPECT_EQ(std::abs(m[i] - 1), 1);
      }
    }
    EXPECT_EQ(altered, 2);
  }
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / kTrials, 2.0 / 12.0, 0.02);
  EXPECT_NEAR(static_cast<double>(up) / changes, 0.5, 0.02);
}

TEST(Tournament, SizeRounding) {
  EXPECT_EQ(tournament_size(10, 0.8), 8u);
  EXPECT_EQ(tournament_size(5, 0.8), 4u);
  EXPECT_EQ(tournament_size(6, 0.8), 5u);  // ceil(4.8)
  EXPECT_EQ(tournament_size(1, 0.8), 1u);
  EXPECT_EQ(tournament_size(50, 0.8), 40u);
}

TEST(Tournament, Singleton) {
  Rng rng(1);
  const std::vector<double> f{0.3};
  EXPECT_EQ(tournament_select(f, 0.8, rng), 0u);
  EXPECT_EQ(tournament_select(f, 0.8, rng, TournamentMode::worst), 0u);
}

TEST(Tournament, FullTournamentPicksExtremes) {
  Rng rng(2);
  const std::vector<double> f{0.3, 0.9, 0.1, 0.5, 0.7};
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(tournament_select(f, 1.0, rng), 1u);
    EXPECT_EQ(tournament_select(f, 1.0, rng, TournamentMode::worst), 2u);
  }
}

TEST(Tournament, TopRankWinFrequency) {
  // The best of 10 wins iff it is among the 8 sampled: C(9,7)/C(10,8) = 0.8.
  Rng rng(9);
  std::vector<double> f(10);
  for (std::size_t i = 0; i < 10; ++i) f[i] = static_cast<double>(i) * 0.1;
  constexpr int kDraws = 10000;
  int wins = 0;
  for (int i = 0; i < kDraws; ++i) wins += tournament_select(f, 0.8, rng) == 9;
  EXPECT_NEAR(static_cast<double>(wins) / kDraws, 0.8, 0.02);
}

TEST(Tournament, TiesBrokenUniformly) {
  Rng rng(12);
  const std::vector<double> f{1.0, 1.0, 1.0, 1.0};
  std::array<int, 4> counts{};
  for (int i = 0; i < 8000; ++i) ++counts[tournament_select(f, 1.0, rng)];
  for (int c : counts) EXPECT_NEAR(c / 8000.0, 0.25, 0.03);
}

TEST(Tournament, CandidateSubset) {
  Rng rng(1);
  const std::vector<double> f{0.0, 5.0, 1.0, 2.0};
  const std::vector<std::size_t> cand{0, 2, 3};
  for (int i = 0; i < 50; ++i) EXPECT_NE(tournament_select(f, cand, 1.0, rng, TournamentMode::best), 1u);
  EXPECT_THROW(tournament_select(std::vector<double>{}, 0.8, rng), ValidationError);
}

TEST(Rng, SaveRestore) {
  Rng a(123);
  for (int i = 0; i < 10; ++i) a();
  Rng b;
  b.restore(a.save());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a(), b());
  EXPECT_THROW(b.restore("garbage"), std::invalid_argument);
}

TEST(Rng, BelowIsInRange) {
  Rng r(4);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform01();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
