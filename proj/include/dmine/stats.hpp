#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "dmine/error.hpp"

namespace dmine {

struct MannWhitneyResult {
  double u = 0.0;            // U statistic of the first sample
  double p_two_sided = 1.0;
  bool exact = false;
};

// Sample sizes with n_a * n_b at or below this use the exact permutation
// distribution; larger ones use the normal approximation.
inline constexpr std::size_t kExactMannWhitneyLimit = 400;

namespace detail {

// Midranks (1-based) of the pooled values, in input order.
inline std::vector<double> midranks(std::span<const double> pooled, double* tie_term = nullptr) {
  const std::size_t N = pooled.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(N);
  double ties = 0.0;
  for (std::size_t i = 0; i < N;) {
    std::size_t j = i;
    while (j + 1 < N && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    const double len = static_cast<double>(j - i + 1);
    ties += len * len * len - len;
    i = j + 1;
  }
  if (tie_term) *tie_term = ties;
  return rank;
}

// Exact two-sided p: the fraction of size-m subsets of the pooled midranks
// whose rank sum lies at least as far from its mean as the observed one.
// Works in doubled ranks so every midrank is an integer.
inline double exact_p(const std::vector<double>& ranks, std::size_t m, double observed_rank_sum) {
  const std::size_t N = ranks.size();
  std::vector<std::int64_t> r2(N);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < N; ++i) {
    r2[i] = std::llround(2.0 * ranks[i]);
    total += r2[i];
  }
  std::int64_t max_sum = 0;
  {
    std::vector<std::int64_t> sorted = r2;
    std::sort(sorted.rbegin(), sorted.rend());
    for (std::size_t i = 0; i < m; ++i) max_sum += sorted[i];
  }
  const std::size_t W = static_cast<std::size_t>(max_sum) + 1;
  // ways[j][w]: subsets of size j with doubled rank sum w.
  std::vector<std::vector<double>> ways(m + 1, std::vector<double>(W, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t v = static_cast<std::size_t>(r2[i]);
    for (std::size_t j = std::min(m, i + 1); j >= 1; --j)
      for (std::size_t w = W; w-- > v;) ways[j][w] += ways[j - 1][w - v];
  }
  // 2 * E[rank sum] * N = 2 * m * total / N; compare N-scaled integers.
  const std::int64_t mean_scaled = static_cast<std::int64_t>(m) * total;  // = N * E[2R]
  const std::int64_t obs = std::llround(2.0 * observed_rank_sum);
  const std::int64_t nN = static_cast<std::int64_t>(N);
  const std::int64_t obs_dev = std::llabs(obs * nN - mean_scaled);
  double hit = 0.0;
  double all = 0.0;
  for (std::size_t w = 0; w < W; ++w) {
    const double c = ways[m][w];
    if (c == 0.0) continue;
    all += c;
    if (std::llabs(static_cast<std::int64_t>(w) * nN - mean_scaled) >= obs_dev) hit += c;
  }
  return std::min(1.0, hit / all);
}

}  // namespace detail

// Two-sided Mann-Whitney U test with midranks for ties. Exact permutation p
// for small samples; otherwise the normal approximation with tie-corrected
// variance and a 0.5 continuity correction. A pooled sample of identical
// values gives p = 1.
inline MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("Mann-Whitney U needs two non-empty samples");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t N = na + nb;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  double tie_term = 0.0;
  const std::vector<double> rank = detail::midranks(pooled, &tie_term);
  double ra = 0.0;
  for (std::size_t i = 0; i < na; ++i) ra += rank[i];

  MannWhitneyResult out;
  out.u = ra - static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;

  const bool all_tied = std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled[0]; });
  if (all_tied) {
    out.p_two_sided = 1.0;
    out.exact = na * nb <= kExactMannWhitneyLimit;
    return out;
  }

  if (na * nb <= kExactMannWhitneyLimit) {
    out.exact = true;
    // Enumerate over the smaller sample; the two-sided p is symmetric.
    if (na <= nb) {
      out.p_two_sided = detail::exact_p(rank, na, ra);
    } else {
      std::vector<double> swapped(rank.begin() + static_cast<std::ptrdiff_t>(na), rank.end());
      swapped.insert(swapped.end(), rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(na));
      const double rb = std::accumulate(rank.begin() + static_cast<std::ptrdiff_t>(na), rank.end(), 0.0);
      out.p_two_sided = detail::exact_p(swapped, nb, rb);
    }
    return out;
  }

  const double dna = static_cast<double>(na);
  const double dnb = static_cast<double>(nb);
  const double dN = static_cast<double>(N);
  const double mu = dna * dnb / 2.0;
  const double var = dna * dnb / 12.0 * ((dN + 1.0) - tie_term / (dN * (dN - 1.0)));
  if (var <= 0.0) {
    out.p_two_sided = 1.0;
    return out;
  }
  const double z = std::max(0.0, std::abs(out.u - mu) - 0.5) / std::sqrt(var);
  out.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace dmine
