#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dmine/random.hpp"
#include "dmine/stats.hpp"

using namespace dmine;

namespace {

// Brute-force oracle: enumerate every relabelling of the pooled values.
double brute_force_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t N = pooled.size();
  const std::size_t na = a.size();
  // U counts pairs (x in A, y in B) with x > y, plus half for ties.
  auto u_of = [&](unsigned mask) {
    double u = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      if (!(mask >> i & 1u)) continue;
      for (std::size_t j = 0; j < N; ++j) {
        if (mask >> j & 1u) continue;
        u += pooled[i] > pooled[j] ? 1.0 : pooled[i] == pooled[j] ? 0.5 : 0.0;
      }
    }
    return u;
  };
  const double mu = static_cast<double>(na * b.size()) / 2.0;
  const double obs = std::abs(u_of((1u << na) - 1u) - mu);
  double hit = 0.0;
  double all = 0.0;
  for (unsigned mask = 0; mask < (1u << N); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
    all += 1.0;
    if (std::abs(u_of(mask) - mu) >= obs - 1e-9) hit += 1.0;
  }
  return hit / all;
}

}  // namespace

TEST(MannWhitney, SeparatedTriples) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{4, 5, 6};
  const auto r = mann_whitney_u(a, b);
  EXPECT_DOUBLE_EQ(r.u, 0.0);
  EXPECT_TRUE(r.exact);
  EXPECT_NEAR(r.p_two_sided, 0.1, 1e-12);
}

TEST(MannWhitney, ExactMatchesBruteForce) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t na = 1 + rng.below(8);
    const std::size_t nb = 1 + rng.below(8);
    std::vector<double> a(na);
    std::vector<double> b(nb);
    // Coarse values force plenty of ties.
    for (auto& v : a) v = static_cast<double>(rng.below(5));
    for (auto& v : b) v = static_cast<double>(rng.below(5)) + (trial % 3 == 0 ? 1.0 : 0.0);
    const auto r = mann_whitney_u(a, b);
    ASSERT_TRUE(r.exact);
    EXPECT_NEAR(r.p_two_sided, brute_force_p(a, b), 1e-9) << "trial " << trial;
  }
}

TEST(MannWhitney, UStatisticsSumToProduct) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(3 + rng.below(30));
    std::vector<double> b(3 + rng.below(30));
    for (auto& v : a) v = std::floor(rng.uniform01() * 10);
    for (auto& v : b) v = std::floor(rng.uniform01() * 10);
    const auto ab = mann_whitney_u(a, b);
    const auto ba = mann_whitney_u(b, a);
    EXPECT_NEAR(ab.u + ba.u, static_cast<double>(a.size() * b.size()), 1e-9);
    EXPECT_NEAR(ab.p_two_sided, ba.p_two_sided, 1e-12);
  }
}

TEST(MannWhitney, AllTiedGivesOne) {
  const std::vector<double> a(30, 2.5);
  const std::vector<double> b(40, 2.5);
  EXPECT_DOUBLE_EQ(mann_whitney_u(a, b).p_two_sided, 1.0);
  const std::vector<double> c(3, 1.0);
  EXPECT_DOUBLE_EQ(mann_whitney_u(c, c).p_two_sided, 1.0);
}

TEST(MannWhitney, NormalApproximationCalibration) {
  // Under the null the rejection rate at 0.05 should be near 0.05.
  Rng rng(99);
  constexpr int kTrials = 2000;
  int rejections = 0;
  for (int t = 0; t < kTrials; ++t) {
    std::vector<double> a(100);
    std::vector<double> b(100);
    for (auto& v : a) v = rng.uniform01();
    for (auto& v : b) v = rng.uniform01();
    const auto r = mann_whitney_u(a, b);
    ASSERT_FALSE(r.exact);
    rejections += r.p_two_sided < 0.05;
  }
  EXPECT_NEAR(static_cast<double>(rejections) / kTrials, 0.05, 0.02);
}

TEST(MannWhitney, ExactCalibration) {
  Rng rng(100);
  constexpr int kTrials = 2000;
  int rejections = 0;
  for (int t = 0; t < kTrials; ++t) {
    std::vector<double> a(20);
    std::vector<double> b(20);
    for (auto& v : a) v = rng.uniform01();
    for (auto& v : b) v = rng.uniform01();
    rejections += mann_whitney_u(a, b).p_two_sided < 0.05;
  }
  EXPECT_NEAR(static_cast<double>(rejections) / kTrials, 0.05, 0.02);
}

TEST(MannWhitney, RejectsEmpty) {
  const std::vector<double> a{1.0};
  EXPECT_THROW(mann_whitney_u(a, std::vector<double>{}), ValidationError);
}
