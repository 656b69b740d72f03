#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "dmine/error.hpp"
#include "dmine/genome.hpp"
#include "dmine/random.hpp"

namespace dmine {

// Flips each allele independently with probability `rate`.
inline BitGenome mutate_binary(const BitGenome& genome, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("mutation rate must lie in [0,1]");
  BitGenome out = genome;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (rng.bernoulli(rate)) out.flip(i);
  return out;
}

// Steps two distinct genes by +1 or -1. A gene sitting on a bound moves
// inward.
inline InsertGenome mutate_insert(const InsertGenome& genome, Rng& rng) {
  InsertGenome out = genome;
  const std::size_t first = rng.below(InsertGenome::kGenes);
  std::size_t second = rng.below(InsertGenome::kGenes - 1);
  if (second >= first) ++second;
  for (std::size_t pos : {first, second}) {
    const int v = out[pos];
    int delta;
    if (v == 0)
      delta = 1;
    else if (v == InsertGenome::kMaxAllele)
      delta = -1;
    else
      delta = rng.bernoulli(0.5) ? 1 : -1;
    out.set(pos, v + delta);
  }
  return out;
}

enum class TournamentMode { best, worst };

// Tournament size for a population, rounded up and clamped to [1, size].
inline std::size_t tournament_size(std::size_t population, double fraction) {
  const double raw = std::ceil(fraction * static_cast<double>(population) - 1e-9);
  std::size_t m = raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
  return m > population ? population : m;
}

// Samples ceil(fraction * |candidates|) members without replacement and
// returns the index (into `fitness`) of the fittest or least fit one. Ties are
// broken uniformly at random.
inline std::size_t tournament_select(std::span<const double> fitness,
                                     std::span<const std::size_t> candidates, double fraction,
                                     Rng& rng, TournamentMode mode = TournamentMode::best) {
  if (candidates.empty()) throw ValidationError("tournament over an empty population");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ValidationError("tournament fraction must lie in (0,1]");
  std::vector<std::size_t> pool(candidates.begin(), candidates.end());
  const std::size_t m = tournament_size(pool.size(), fraction);
  std::size_t winner = 0;
  std::size_t ties = 0;
  for (std::size_t j = 0; j < m; ++j) {
    std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
    const std::size_t cand = pool[j];
    if (j == 0) {
      winner = cand;
      ties = 1;
      continue;
    }
    const double a = fitness[cand];
    const double b = fitness[winner];
    const bool better = mode == TournamentMode::best ? a > b : a < b;
    if (better) {
      winner = cand;
      ties = 1;
    } else if (a == b) {
      ++ties;
      if (rng.below(ties) == 0) winner = cand;
    }
  }
  return winner;
}

inline std::size_t tournament_select(std::span<const double> fitness, double fraction, Rng& rng,
                                     TournamentMode mode = TournamentMode::best) {
  std::vector<std::size_t> all(fitness.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return tournament_select(fitness, all, fraction, rng, mode);
}

}  // namespace dmine
