#pragma once

// Parallel coevolution of S species, one per cascade position.
//
// The engine is a batch-level state machine: `propose` performs every random
// draw for the next batch (so results never depend on how a batch is
// scheduled), and `apply` folds the batch outcome back into the run state.
// Both halves are plain data in, plain data out, which lets the same engine
// run against the in-process NKCS evaluator or pause for days while a lab
// measures a batch.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <type_traits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmine/error.hpp"
#include "dmine/evaluation.hpp"
#include "dmine/genome.hpp"
#include "dmine/operators.hpp"
#include "dmine/random.hpp"

namespace dmine {

enum class StrategyKind { one_plus_four, one_plus_one_per_species, one_plus_four_off };
enum class PopulationMode { fixed, expanding };
enum class OffspringMatching { by_index, random };

struct Strategy {
  StrategyKind kind = StrategyKind::one_plus_four;
  PopulationMode population = PopulationMode::fixed;
  std::size_t max_population = 50;
  double tournament_fraction = 0.8;
  std::size_t offspring = 4;         // lambda for the (1+4) variants
  std::size_t initial_cascades = 5;
  OffspringMatching matching = OffspringMatching::by_index;
  // Re-evaluate the composed-elite cascade alongside every batch.
  bool rerun_champion = false;
  // Whether that re-run consumes evaluation budget.
  bool champion_counts = false;

  void validate() const {
    if (!(tournament_fraction > 0.0 && tournament_fraction <= 1.0))
      throw ValidationError("tournament fraction must lie in (0,1]");
    if (max_population < 1) throw ValidationError("max population must be >= 1");
    if (offspring < 1) throw ValidationError("offspring count must be >= 1");
    if (initial_cascades < 1) throw ValidationError("initial cascade count must be >= 1");
  }
};

inline std::string_view kind_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::one_plus_four: return "1p4";
    case StrategyKind::one_plus_one_per_species: return "1p1xS";
    case StrategyKind::one_plus_four_off: return "1p4off";
  }
  return "?";
}

inline std::string_view mode_name(PopulationMode m) {
  return m == PopulationMode::fixed ? "fixed" : "expanding";
}

inline StrategyKind parse_kind(std::string_view name) {
  if (name == "1p4" || name == "one_plus_four") return StrategyKind::one_plus_four;
  if (name == "1p1xS" || name == "1p1x4" || name == "one_plus_one_per_species")
    return StrategyKind::one_plus_one_per_species;
  if (name == "1p4off" || name == "1p4-off" || name == "one_plus_four_off")
    return StrategyKind::one_plus_four_off;
  throw ValidationError("unknown strategy '" + std::string(name) + "' (expected 1p4, 1p1xS, 1p4off)");
}

inline PopulationMode parse_mode(std::string_view name) {
  if (name == "fixed") return PopulationMode::fixed;
  if (name == "expanding" || name == "50P") return PopulationMode::expanding;
  throw ValidationError("unknown population mode '" + std::string(name) + "'");
}

// Binary NKCS genomes with per-allele flips.
struct BinaryEncoding {
  using genome_type = BitGenome;
  std::size_t n = 20;
  double mutation_rate = 0.05;

  BitGenome random(Rng& rng) const {
    BitGenome g(n);
    for (std::size_t i = 0; i < n; ++i) g.set(i, rng.below(2) == 1);
    return g;
  }
  BitGenome mutate(const BitGenome& parent, Rng& rng) const {
    return mutate_binary(parent, mutation_rate, rng);
  }
  std::string format(const BitGenome& g) const { return g.str(); }
  BitGenome parse(std::string_view s) const { return BitGenome::parse(s, n); }
};

// 12-gene insert genomes with the two-gene step mutation.
struct InsertEncoding {
  using genome_type = InsertGenome;

  InsertGenome random(Rng& rng) const {
    InsertGenome g;
    for (std::size_t i = 0; i < InsertGenome::kGenes; ++i)
      g.set(i, static_cast<int>(rng.below(InsertGenome::kMaxAllele + 1)));
    return g;
  }
  InsertGenome mutate(const InsertGenome& parent, Rng& rng) const { return mutate_insert(parent, rng); }
  std::string format(const InsertGenome& g) const { return g.str(); }
  InsertGenome parse(std::string_view s) const { return InsertGenome::parse(s); }
};

template <class Enc>
struct GeneticConfig {
  Enc encoding{};
  double crossover_rate = 0.0;

  void validate() const {
    if (crossover_rate != 0.0) throw ValidationError("crossover is not supported; rate must be 0");
  }
};

template <class G>
struct Individual {
  G genome;
  // Best cascade fitness this individual has taken part in.
  double fitness = -std::numeric_limits<double>::infinity();
  std::optional<double> secondary_metric;
};

template <class G>
struct SpeciesState {
  std::vector<Individual<G>> population;
  std::size_t elite = 0;

  const Individual<G>& elite_member() const { return population.at(elite); }
  Individual<G>& elite_member() { return population.at(elite); }
};

struct HistoryPoint {
  std::uint64_t evaluation = 0;
  double best_fitness = 0.0;

  friend bool operator==(const HistoryPoint&, const HistoryPoint&) = default;
};

template <class G>
struct RunState {
  std::vector<SpeciesState<G>> species;
  std::uint64_t evaluations_used = 0;
  std::vector<HistoryPoint> best_history;
  double best_fitness = -std::numeric_limits<double>::infinity();
  Cascade<G> best_cascade;
  Rng rng;
  std::vector<bool> frozen;
  // Next species to visit in the sequential (1+4) loop.
  std::size_t cursor = 0;
  std::uint64_t next_batch_id = 0;
  std::uint64_t batches_applied = 0;
  bool initialized = false;

  std::size_t species_count() const noexcept { return species.size(); }

  Cascade<G> elite_cascade() const {
    Cascade<G> c;
    c.reserve(species.size());
    for (const auto& s : species) c.push_back(s.elite_member().genome);
    return c;
  }

  bool is_frozen(std::size_t s) const { return s < frozen.size() && frozen[s]; }
};

template <class G>
struct OffspringSlot {
  std::size_t species = 0;
  std::size_t cascade = 0;
  G genome;
};

template <class G>
struct Proposal {
  std::uint64_t batch_id = 0;
  bool initial = false;
  std::vector<Cascade<G>> cascades;
  std::vector<OffspringSlot<G>> offspring;
  bool champion_included = false;
  std::size_t species_visited = 0;  // (1+4) only
  std::size_t offspring_created = 0;

  std::size_t design_cascades() const { return cascades.size() - (champion_included ? 1 : 0); }

  EvaluationRequest<G> request(std::size_t duplicates = 1) const {
    return EvaluationRequest<G>{batch_id, cascades, champion_included, duplicates};
  }
};

namespace detail {

template <class G>
bool outranks(double fa, const std::optional<double>& sa, double fb, const std::optional<double>& sb) {
  if (fa != fb) return fa > fb;
  return sa && sb && *sa > *sb;
}

inline std::optional<std::size_t> next_unfrozen(const std::vector<bool>& frozen, std::size_t S,
                                                std::size_t from) {
  for (std::size_t s = from; s < S; ++s)
    if (!(s < frozen.size() && frozen[s])) return s;
  return std::nullopt;
}

template <class G, class Enc>
G make_child(RunState<G>& state, std::size_t s, const Strategy& strategy, const Enc& enc) {
  const auto& sp = state.species[s];
  if (strategy.population == PopulationMode::expanding && sp.population.size() > 1) {
    std::vector<double> fit(sp.population.size());
    for (std::size_t i = 0; i < fit.size(); ++i) fit[i] = sp.population[i].fitness;
    const std::size_t parent = tournament_select(fit, strategy.tournament_fraction, state.rng);
    return enc.mutate(sp.population[parent].genome, state.rng);
  }
  return enc.mutate(sp.elite_member().genome, state.rng);
}

}  // namespace detail

// Draws the next batch. `remaining` caps the number of budget-consuming
// evaluations; the batch is truncated to fit.
template <class G, class Enc>
Proposal<G> propose(RunState<G>& state, const Strategy& strategy, const GeneticConfig<Enc>& genetic,
                    std::size_t species_count, std::uint64_t remaining) {
  static_assert(std::is_same_v<typename Enc::genome_type, G>);
  const Enc& enc = genetic.encoding;
  const std::size_t S = state.initialized ? state.species_count() : species_count;
  if (S == 0) throw ValidationError("no species");
  Proposal<G> p;
  p.batch_id = state.next_batch_id++;

  if (!state.initialized) {
    p.initial = true;
    for (std::size_t c = 0; c < strategy.initial_cascades; ++c) {
      Cascade<G> cascade;
      for (std::size_t s = 0; s < S; ++s) cascade.push_back(enc.random(state.rng));
      p.cascades.push_back(std::move(cascade));
    }
    return p;
  }

  if (!detail::next_unfrozen(state.frozen, S, 0)) throw ValidationError("every species is frozen");
  const Cascade<G> elites = state.elite_cascade();

  switch (strategy.kind) {
    case StrategyKind::one_plus_four: {
      std::size_t s = detail::next_unfrozen(state.frozen, S, state.cursor).value_or(S);
      if (s == S) s = *detail::next_unfrozen(state.frozen, S, 0);
      p.species_visited = s;
      for (std::size_t j = 0; j < strategy.offspring; ++j) {
        G child = detail::make_child(state, s, strategy, enc);
        Cascade<G> cascade = elites;
        cascade[s] = child;
        p.cascades.push_back(std::move(cascade));
        p.offspring.push_back({s, j, std::move(child)});
      }
      break;
    }
    case StrategyKind::one_plus_one_per_species: {
      for (std::size_t s = 0; s < S; ++s) {
        if (state.is_frozen(s)) continue;
        G child = detail::make_child(state, s, strategy, enc);
        Cascade<G> cascade = elites;
        cascade[s] = child;
        p.offspring.push_back({s, p.cascades.size(), std::move(child)});
        p.cascades.push_back(std::move(cascade));
      }
      break;
    }
    case StrategyKind::one_plus_four_off: {
      const std::size_t lambda = strategy.offspring;
      std::vector<std::vector<G>> children(S);
      for (std::size_t s = 0; s < S; ++s) {
        if (state.is_frozen(s)) continue;
        for (std::size_t j = 0; j < lambda; ++j)
          children[s].push_back(detail::make_child(state, s, strategy, enc));
      }
      std::vector<std::vector<std::size_t>> order(S);
      for (std::size_t s = 0; s < S; ++s) {
        order[s].resize(children[s].size());
        for (std::size_t j = 0; j < order[s].size(); ++j) order[s][j] = j;
        if (strategy.matching == OffspringMatching::random)
          for (std::size_t j = order[s].size(); j > 1; --j)
            std::swap(order[s][j - 1], order[s][state.rng.below(j)]);
      }
      for (std::size_t j = 0; j < lambda; ++j) {
        Cascade<G> cascade = elites;
        for (std::size_t s = 0; s < S; ++s) {
          if (state.is_frozen(s)) continue;
          cascade[s] = children[s][order[s][j]];
          p.offspring.push_back({s, j, cascade[s]});
        }
        p.cascades.push_back(std::move(cascade));
      }
      break;
    }
  }
  p.offspring_created = p.offspring.size();

  bool champion = strategy.rerun_champion;
  std::uint64_t limit = remaining;
  if (champion && strategy.champion_counts) {
    if (remaining < 2)
      champion = false;
    else
      limit = remaining - 1;
  }
  if (p.cascades.size() > limit) {
    p.cascades.resize(static_cast<std::size_t>(limit));
    std::erase_if(p.offspring, [&](const OffspringSlot<G>& o) { return o.cascade >= limit; });
  }
  if (champion) {
    p.cascades.push_back(elites);
    p.champion_included = true;
  }
  return p;
}

namespace detail {

template <class G>
void record_best(RunState<G>& state, const Cascade<G>& cascade, double fitness) {
  if (fitness > state.best_fitness) {
    state.best_fitness = fitness;
    state.best_cascade = cascade;
  }
}

template <class G>
void insert_member(SpeciesState<G>& sp, Individual<G> member, const Strategy& strategy, Rng& rng) {
  if (sp.population.size() >= strategy.max_population) {
    std::vector<double> fit(sp.population.size());
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < sp.population.size(); ++i) {
      fit[i] = sp.population[i].fitness;
      if (i != sp.elite) candidates.push_back(i);
    }
    if (candidates.empty()) return;
    const std::size_t victim =
        tournament_select(fit, candidates, strategy.tournament_fraction, rng, TournamentMode::worst);
    sp.population.erase(sp.population.begin() + static_cast<std::ptrdiff_t>(victim));
    if (victim < sp.elite) --sp.elite;
  }
  sp.population.push_back(std::move(member));
}

}  // namespace detail

// Folds an evaluated batch into the run state.
template <class G>
void apply(RunState<G>& state, const Strategy& strategy, const Proposal<G>& p,
           const EvaluationResult& result) {
  if (result.batch_id != p.batch_id)
    throw StaleBatchError("result for batch " + std::to_string(result.batch_id) +
                          " does not match pending batch " + std::to_string(p.batch_id));
  if (result.outcomes.size() != p.cascades.size())
    throw MalformedResultError("batch " + std::to_string(p.batch_id) + " expects " +
                               std::to_string(p.cascades.size()) + " results, got " +
                               std::to_string(result.outcomes.size()));
  const auto& out = result.outcomes;

  if (p.initial) {
    const std::size_t S = p.cascades.front().size();
    std::size_t best = 0;
    for (std::size_t c = 1; c < out.size(); ++c)
      if (detail::outranks<G>(out[c].fitness, out[c].secondary_metric, out[best].fitness,
                              out[best].secondary_metric))
        best = c;
    state.species.assign(S, {});
    for (std::size_t s = 0; s < S; ++s) {
      auto& sp = state.species[s];
      if (strategy.population == PopulationMode::expanding) {
        for (std::size_t c = 0; c < p.cascades.size(); ++c)
          sp.population.push_back({p.cascades[c][s], out[c].fitness, out[c].secondary_metric});
        sp.elite = best;
      } else {
        sp.population.push_back({p.cascades[best][s], out[best].fitness, out[best].secondary_metric});
        sp.elite = 0;
      }
    }
    if (state.frozen.size() < S) state.frozen.resize(S, false);
    state.evaluations_used += p.cascades.size();
    for (std::size_t c = 0; c < p.cascades.size(); ++c)
      detail::record_best(state, p.cascades[c], out[c].fitness);
    state.best_history.push_back({state.evaluations_used, state.best_fitness});
    state.initialized = true;
    ++state.batches_applied;
    return;
  }

  const std::size_t S = state.species_count();
  const std::size_t designs = p.design_cascades();

  if (p.champion_included) {
    const auto& champ = out.back();
    for (auto& sp : state.species) {
      sp.elite_member().fitness = champ.fitness;
      sp.elite_member().secondary_metric = champ.secondary_metric;
    }
    detail::record_best(state, p.cascades.back(), champ.fitness);
  }

  // Which cascades each species' elite took part in.
  std::vector<std::vector<bool>> offspring_at(S, std::vector<bool>(designs, false));
  for (const auto& o : p.offspring) offspring_at[o.species][o.cascade] = true;

  std::vector<std::optional<std::size_t>> winner(S);
  for (std::size_t i = 0; i < p.offspring.size(); ++i) {
    const auto& o = p.offspring[i];
    auto& w = winner[o.species];
    const auto& oc = out[o.cascade];
    if (!w || detail::outranks<G>(oc.fitness, oc.secondary_metric, out[p.offspring[*w].cascade].fitness,
                                  out[p.offspring[*w].cascade].secondary_metric))
      w = i;
  }

  std::vector<bool> replaced(S, false);
  for (std::size_t s = 0; s < S; ++s) {
    if (!winner[s]) continue;
    const auto& oc = out[p.offspring[*winner[s]].cascade];
    const auto& elite = state.species[s].elite_member();
    replaced[s] = detail::outranks<G>(oc.fitness, oc.secondary_metric, elite.fitness,
                                      elite.secondary_metric);
  }

  // Retained elites inherit the best cascade they were just part of.
  for (std::size_t s = 0; s < S; ++s) {
    if (replaced[s]) continue;
    auto& elite = state.species[s].elite_member();
    for (std::size_t c = 0; c < designs; ++c) {
      if (offspring_at[s][c]) continue;
      if (detail::outranks<G>(out[c].fitness, out[c].secondary_metric, elite.fitness,
                              elite.secondary_metric)) {
        elite.fitness = out[c].fitness;
        elite.secondary_metric = out[c].secondary_metric;
      }
    }
  }

  for (std::size_t i = 0; i < p.offspring.size(); ++i) {
    const auto& o = p.offspring[i];
    auto& sp = state.species[o.species];
    Individual<G> member{o.genome, out[o.cascade].fitness, out[o.cascade].secondary_metric};
    const bool wins = replaced[o.species] && winner[o.species] == i;
    if (strategy.population == PopulationMode::expanding) {
      detail::insert_member(sp, std::move(member), strategy, state.rng);
      if (wins) sp.elite = sp.population.size() - 1;
    } else if (wins) {
      sp.population[sp.elite] = std::move(member);
    }
  }

  state.evaluations_used += designs;
  if (p.champion_included && strategy.champion_counts) state.evaluations_used += 1;
  for (std::size_t c = 0; c < designs; ++c) detail::record_best(state, p.cascades[c], out[c].fitness);
  state.best_history.push_back({state.evaluations_used, state.best_fitness});
  if (strategy.kind == StrategyKind::one_plus_four) state.cursor = p.species_visited + 1;
  ++state.batches_applied;
}

template <class G, class Enc, class E>
  requires Evaluator<E, G>
void run_batch(RunState<G>& state, E& evaluator, const Strategy& strategy,
               const GeneticConfig<Enc>& genetic, std::uint64_t remaining, std::size_t duplicates = 1) {
  Proposal<G> p = propose(state, strategy, genetic, evaluator.species_count(), remaining);
  EvaluationResult r = evaluator.evaluate(p.request(duplicates));
  apply(state, strategy, p, r);
}

template <class E, class Enc>
  requires Evaluator<E, typename Enc::genome_type>
RunState<typename Enc::genome_type> init_run(E& evaluator, const Strategy& strategy,
                                             const GeneticConfig<Enc>& genetic, std::uint64_t seed) {
  strategy.validate();
  genetic.validate();
  RunState<typename Enc::genome_type> state;
  state.rng = Rng(seed);
  state.frozen.assign(evaluator.species_count(), false);
  run_batch(state, evaluator, strategy, genetic, strategy.initial_cascades);
  return state;
}

// One full cycle: every unfrozen species once for (1+4), one batch otherwise.
// Stops early, after the last completed batch, when the budget runs out.
template <class G, class Enc, class E>
  requires Evaluator<E, G>
void step(RunState<G>& state, E& evaluator, const Strategy& strategy, const GeneticConfig<Enc>& genetic,
          std::uint64_t budget = std::numeric_limits<std::uint64_t>::max()) {
  const std::size_t S = state.species_count();
  do {
    if (state.evaluations_used >= budget) return;
    run_batch(state, evaluator, strategy, genetic, budget - state.evaluations_used);
  } while (strategy.kind == StrategyKind::one_plus_four &&
           detail::next_unfrozen(state.frozen, S, state.cursor).has_value());
  if (strategy.kind == StrategyKind::one_plus_four) state.cursor = 0;
}

// Best-so-far per evaluation index 1..evaluations_used. Every evaluation in a
// batch carries the batch's running maximum, since the batch completes as a
// unit.
template <class G>
std::vector<double> densify(const RunState<G>& state) {
  std::vector<double> out;
  out.reserve(state.evaluations_used);
  for (const auto& h : state.best_history)
    while (out.size() < h.evaluation) out.push_back(h.best_fitness);
  return out;
}

template <class G>
struct RunOutcome {
  RunState<G> state;
  std::vector<double> trajectory;
};

template <class E, class Enc>
  requires Evaluator<E, typename Enc::genome_type>
RunOutcome<typename Enc::genome_type> run(E& evaluator, const Strategy& strategy,
                                          const GeneticConfig<Enc>& genetic, std::uint64_t budget,
                                          std::uint64_t seed) {
  if (budget < strategy.initial_cascades)
    throw ValidationError("budget must cover the initial cascades");
  auto state = init_run(evaluator, strategy, genetic, seed);
  while (state.evaluations_used < budget) step(state, evaluator, strategy, genetic, budget);
  auto trajectory = densify(state);
  return {std::move(state), std::move(trajectory)};
}

}  // namespace dmine
