#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dmine/error.hpp"
#include "dmine/genome.hpp"
#include "dmine/landscape.hpp"

namespace dmine {

template <class G>
struct EvaluationRequest {
  std::uint64_t batch_id = 0;
  std::vector<Cascade<G>> cascades;
  // When set, the last cascade is the composed-elite champion re-run.
  bool include_champion = false;
  std::size_t duplicates = 1;
};

struct CascadeOutcome {
  double fitness = 0.0;
  std::optional<double> secondary_metric;
  std::vector<double> raw_replicates;
};

struct EvaluationResult {
  std::uint64_t batch_id = 0;
  std::vector<CascadeOutcome> outcomes;
};

// Anything that scores a batch of cascades.
template <class E, class G>
concept Evaluator = requires(E& e, const EvaluationRequest<G>& request) {
  { e.evaluate(request) } -> std::same_as<EvaluationResult>;
  { e.species_count() } -> std::convertible_to<std::size_t>;
};

enum class Normalization { none, divide_by_baseline };

// Insert-free output of each unit, measured before inserts go in.
struct BaselineRecord {
  Normalization mode = Normalization::none;
  std::vector<double> unit_baselines;

  void validate() const {
    if (mode == Normalization::none) return;
    if (unit_baselines.empty()) throw ValidationError("baseline normalization needs baselines");
    for (double b : unit_baselines)
      if (!(b > 0.0) || !std::isfinite(b))
        throw ValidationError("baselines must be strictly positive when normalization is enabled");
  }

  // Scalar replicates are divided by the mean unit baseline.
  double divisor() const {
    if (mode == Normalization::none) return 1.0;
    return std::accumulate(unit_baselines.begin(), unit_baselines.end(), 0.0) /
           static_cast<double>(unit_baselines.size());
  }
};

// Normalizes each replicate, then averages. Replicates are summed in sorted
// order so the mean does not depend on the order they were reported in.
inline CascadeOutcome reduce_replicates(std::vector<double> raw, std::optional<double> secondary,
                                        const BaselineRecord& baseline = {}) {
  if (raw.empty()) throw ReplicateCountError("cascade reported no replicates");
  for (double v : raw)
    if (!std::isfinite(v)) throw NonFiniteValueError("non-finite replicate value");
  if (secondary && !std::isfinite(*secondary))
    throw NonFiniteValueError("non-finite secondary metric");
  const double div = baseline.divisor();
  std::vector<double> scaled = raw;
  if (div != 1.0)
    for (double& v : scaled) v /= div;
  std::vector<double> sorted = scaled;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  CascadeOutcome out;
  out.fitness = sum / static_cast<double>(sorted.size());
  out.secondary_metric = secondary;
  out.raw_replicates = std::move(raw);
  return out;
}

// Scores cascades with a deterministic function. Duplicates are copies of
// the same value; fitness is that value exactly.
template <class G>
class FunctionEvaluator {
public:
  using Score = std::function<double(const Cascade<G>&)>;
  using Secondary = std::function<std::optional<double>(const Cascade<G>&)>;

  FunctionEvaluator(std::size_t species, Score score, Secondary secondary = {})
      : species_(species), score_(std::move(score)), secondary_(std::move(secondary)) {}

  std::size_t species_count() const noexcept { return species_; }

  EvaluationResult evaluate(const EvaluationRequest<G>& request) {
    if (request.duplicates < 1) throw ValidationError("duplicates must be >= 1");
    EvaluationResult result;
    result.batch_id = request.batch_id;
    result.outcomes.reserve(request.cascades.size());
    for (const auto& cascade : request.cascades) {
      CascadeOutcome o;
      o.fitness = score_(cascade);
      if (secondary_) o.secondary_metric = secondary_(cascade);
      o.raw_replicates.assign(request.duplicates, o.fitness);
      result.outcomes.push_back(std::move(o));
    }
    ++batches_;
    return result;
  }

  std::uint64_t batches() const noexcept { return batches_; }

private:
  std::size_t species_;
  Score score_;
  Secondary secondary_;
  std::uint64_t batches_ = 0;
};

// NKCS cascade fitness as the evaluator.
class SimulatedEvaluator {
public:
  explicit SimulatedEvaluator(const Landscape& landscape) : landscape_(&landscape) {}

  std::size_t species_count() const noexcept { return landscape_->species_count(); }
  const Landscape& landscape() const noexcept { return *landscape_; }

  EvaluationResult evaluate(const EvaluationRequest<BitGenome>& request) {
    if (request.duplicates < 1) throw ValidationError("duplicates must be >= 1");
    EvaluationResult result;
    result.batch_id = request.batch_id;
    result.outcomes.resize(request.cascades.size());
    for (std::size_t i = 0; i < request.cascades.size(); ++i) {
      auto& o = result.outcomes[i];
      o.fitness = landscape_->cascade_fitness(request.cascades[i]);
      o.raw_replicates.assign(request.duplicates, o.fitness);
    }
    return result;
  }

private:
  const Landscape* landscape_;
};

}  // namespace dmine
