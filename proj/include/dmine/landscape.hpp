#pragma once

// NKCS coupled fitness landscapes.
//
// Each species owns n binary genes. Gene g of species i reads its own allele,
// k other alleles of the same genome and c alleles of every partner species
// (X_i partners). Those 1 + k + X_i*c bits, most-significant first in the
// order (own, local links, partner links in topology order), index a table of
// uniform random contributions. The tables are virtual: every cell comes from
// a counter-based PRF keyed on (seed, species, gene, row).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmine/error.hpp"
#include "dmine/genome.hpp"
#include "dmine/random.hpp"

namespace dmine {

struct Topology {
  // partners[i] lists the species that species i is coupled to.
  std::vector<std::vector<std::size_t>> partners;

  std::size_t species_count() const noexcept { return partners.size(); }

  // Cascade flow: every species is coupled to its neighbours.
  static Topology chain(std::size_t species) {
    Topology t;
    t.partners.resize(species);
    for (std::size_t i = 0; i < species; ++i) {
      if (i > 0) t.partners[i].push_back(i - 1);
      if (i + 1 < species) t.partners[i].push_back(i + 1);
    }
    return t;
  }

  void validate() const {
    if (partners.empty()) throw ValidationError("topology needs at least one species");
    for (std::size_t i = 0; i < partners.size(); ++i) {
      for (std::size_t p : partners[i]) {
        if (p >= partners.size())
          throw ValidationError("topology: species " + std::to_string(i) + " lists partner " +
                                std::to_string(p) + " outside [0," +
                                std::to_string(partners.size()) + ")");
        if (p == i)
          throw ValidationError("topology: species " + std::to_string(i) + " lists itself");
      }
    }
  }

  friend bool operator==(const Topology&, const Topology&) = default;
};

struct LandscapeParams {
  std::size_t n = 20;
  std::size_t k = 2;
  std::size_t c = 2;
  Topology topology = Topology::chain(4);
  std::uint64_t seed = 0;

  std::size_t species_count() const noexcept { return topology.species_count(); }

  // Width of the lookup index for species i: k + X_i*c + 1.
  std::size_t row_bits(std::size_t species) const {
    return k + topology.partners.at(species).size() * c + 1;
  }

  void validate() const {
    topology.validate();
    if (n == 0) throw ValidationError("n must be at least 1");
    if (k >= n) throw ValidationError("k must be < n (k=" + std::to_string(k) +
                                      ", n=" + std::to_string(n) + ")");
    if (c > n) throw ValidationError("c must be <= n (c=" + std::to_string(c) +
                                     ", n=" + std::to_string(n) + ")");
    for (std::size_t i = 0; i < species_count(); ++i)
      if (row_bits(i) > 63)
        throw ValidationError("species " + std::to_string(i) + " needs a " +
                              std::to_string(row_bits(i)) + "-bit table index; limit is 63");
  }

  friend bool operator==(const LandscapeParams&, const LandscapeParams&) = default;
};

struct GeneLinks {
  std::vector<std::size_t> local;                  // k genes of the same genome
  std::vector<std::vector<std::size_t>> external;  // per partner (topology order), c genes

  friend bool operator==(const GeneLinks&, const GeneLinks&) = default;
};

// epistasis[species][gene]
using EpistasisMap = std::vector<std::vector<GeneLinks>>;

// Replacement table source, used for hand-built fixtures.
using TableFn = std::function<double(std::size_t species, std::size_t gene, std::uint64_t row)>;

// Draws the link structure. Local links: k distinct genes other than the
// gene itself. External links: c distinct genes of each partner, drawn
// independently per gene and per partner.
inline EpistasisMap draw_epistasis(const LandscapeParams& params) {
  Rng rng(derive_seed(params.seed, {0x65706973ULL}));  // "epis"
  const std::size_t n = params.n;
  EpistasisMap map(params.species_count(), std::vector<GeneLinks>(n));
  std::vector<std::size_t> pool(n);
  auto sample = [&](std::size_t count, std::size_t exclude) {
    pool.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != exclude) pool.push_back(j);
    for (std::size_t j = 0; j < count; ++j) {
      std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
    }
    return std::vector<std::size_t>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  };
  for (std::size_t s = 0; s < params.species_count(); ++s) {
    for (std::size_t g = 0; g < n; ++g) {
      GeneLinks& links = map[s][g];
      links.local = sample(params.k, g);
      for (std::size_t p = 0; p < params.topology.partners[s].size(); ++p)
        links.external.push_back(sample(params.c, n));
    }
  }
  return map;
}

class Landscape {
public:
  // Builds a landscape with PRF tables and a freshly drawn epistasis map.
  static Landscape generate(const LandscapeParams& params) {
    params.validate();
    return Landscape(params, draw_epistasis(params));
  }

  // Explicit link structure; `table` replaces the PRF when non-empty.
  Landscape(LandscapeParams params, EpistasisMap epistasis, TableFn table = {})
      : params_(std::move(params)), epistasis_(std::move(epistasis)), override_(std::move(table)) {
    params_.validate();
    check_map();
    compile();
  }

  const LandscapeParams& params() const noexcept { return params_; }
  const EpistasisMap& epistasis() const noexcept { return epistasis_; }
  std::size_t species_count() const noexcept { return params_.species_count(); }
  std::size_t genes() const noexcept { return params_.n; }
  std::size_t row_bits(std::size_t species) const { return params_.row_bits(species); }

  double table(std::size_t species, std::size_t gene, std::uint64_t row) const {
    if (override_) return override_(species, gene, row);
    return table_value(keys_[species * params_.n + gene], row);
  }

  std::uint64_t row_index(std::size_t species, std::size_t gene, const CascadeConfig& config) const {
    const std::size_t width = widths_[species];
    const Source* src = sources_[species].data() + gene * width;
    std::uint64_t row = 0;
    for (std::size_t b = 0; b < width; ++b)
      row = (row << 1) | config[src[b].species][src[b].gene];
    return row;
  }

  // Mean of the n gene contributions; in [0, 1).
  double species_fitness(std::size_t species, const CascadeConfig& config) const {
    const std::size_t n = params_.n;
    double sum = 0.0;
    if (override_) {
      for (std::size_t g = 0; g < n; ++g) sum += override_(species, g, row_index(species, g, config));
    } else {
      const std::uint64_t* keys = keys_.data() + species * n;
      for (std::size_t g = 0; g < n; ++g) sum += table_value(keys[g], row_index(species, g, config));
    }
    return sum / static_cast<double>(n);
  }

  // Sum of species fitnesses; in [0, S).
  double cascade_fitness(const CascadeConfig& config) const {
    double total = 0.0;
    for (std::size_t s = 0; s < species_count(); ++s) total += species_fitness(s, config);
    return total;
  }

  void check_config(const CascadeConfig& config) const {
    if (config.size() != species_count())
      throw ValidationError("cascade has " + std::to_string(config.size()) + " genomes, expected " +
                            std::to_string(species_count()));
    for (std::size_t s = 0; s < config.size(); ++s)
      if (config[s].size() != params_.n)
        throw ValidationError("genome for species " + std::to_string(s) + " has length " +
                              std::to_string(config[s].size()) + ", expected length " +
                              std::to_string(params_.n));
  }

private:
  struct Source {
    std::uint32_t species;
    std::uint32_t gene;
  };

  void check_map() const {
    const std::size_t S = species_count();
    if (epistasis_.size() != S) throw ValidationError("epistasis map species count mismatch");
    for (std::size_t s = 0; s < S; ++s) {
      if (epistasis_[s].size() != params_.n) throw ValidationError("epistasis map gene count mismatch");
      for (std::size_t g = 0; g < params_.n; ++g) {
        const GeneLinks& l = epistasis_[s][g];
        if (l.local.size() != params_.k) throw ValidationError("local link count != k");
        for (std::size_t a = 0; a < l.local.size(); ++a) {
          if (l.local[a] >= params_.n || l.local[a] == g)
            throw ValidationError("invalid local link");
          for (std::size_t b = 0; b < a; ++b)
            if (l.local[a] == l.local[b]) throw ValidationError("duplicate local link");
        }
        if (l.external.size() != params_.topology.partners[s].size())
          throw ValidationError("external link partner count mismatch");
        for (const auto& ext : l.external) {
          if (ext.size() != params_.c) throw ValidationError("external link count != c");
          for (std::size_t e : ext)
            if (e >= params_.n) throw ValidationError("external link out of range");
        }
      }
    }
  }

  void compile() {
    const std::size_t S = species_count();
    const std::size_t n = params_.n;
    widths_.resize(S);
    sources_.assign(S, {});
    keys_.resize(S * n);
    for (std::size_t s = 0; s < S; ++s) {
      widths_[s] = params_.row_bits(s);
      auto& out = sources_[s];
      out.reserve(widths_[s] * n);
      for (std::size_t g = 0; g < n; ++g) {
        const GeneLinks& l = epistasis_[s][g];
        out.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(g)});
        for (std::size_t j : l.local)
          out.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(j)});
        const auto& partners = params_.topology.partners[s];
        for (std::size_t p = 0; p < partners.size(); ++p)
          for (std::size_t j : l.external[p])
            out.push_back({static_cast<std::uint32_t>(partners[p]), static_cast<std::uint32_t>(j)});
        keys_[s * n + g] = table_key(params_.seed, s, g);
      }
    }
  }

  LandscapeParams params_;
  EpistasisMap epistasis_;
  TableFn override_;
  std::vector<std::size_t> widths_;
  std::vector<std::vector<Source>> sources_;
  std::vector<std::uint64_t> keys_;
};

// Exhaustive search over all 2^(S*n) configurations. Patterns are visited in
// increasing order with species 0 gene 0 as the most significant bit, and the
// first maximum wins.
inline constexpr std::size_t kEnumerationLimit = 24;

inline std::pair<CascadeConfig, double> enumerate_optimum(const Landscape& landscape) {
  const std::size_t S = landscape.species_count();
  const std::size_t n = landscape.genes();
  const std::size_t bits = S * n;
  if (bits > kEnumerationLimit)
    throw ValidationError("enumerate_optimum: S*n = " + std::to_string(bits) + " exceeds " +
                          std::to_string(kEnumerationLimit));
  CascadeConfig config(S, BitGenome(n));
  CascadeConfig best = config;
  double best_value = -1.0;
  const std::uint64_t total = std::uint64_t{1} << bits;
  for (std::uint64_t pattern = 0; pattern < total; ++pattern) {
    for (std::size_t b = 0; b < bits; ++b)
      config[b / n].set(b % n, (pattern >> (bits - 1 - b)) & 1U);
    const double v = landscape.cascade_fitness(config);
    if (v > best_value) {
      best_value = v;
      best = config;
    }
  }
  return {best, best_value};
}

// Persistence: parameters only; maps and tables are regenerated.
inline nlohmann::json to_json(const LandscapeParams& p) {
  nlohmann::json j;
  j["n"] = p.n;
  j["k"] = p.k;
  j["c"] = p.c;
  j["s"] = p.species_count();
  j["topology"] = p.topology.partners;
  j["seed"] = p.seed;
  return j;
}

inline LandscapeParams landscape_params_from_json(const nlohmann::json& j) {
  LandscapeParams p;
  try {
    p.n = j.at("n").get<std::size_t>();
    p.k = j.at("k").get<std::size_t>();
    p.c = j.at("c").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.topology.partners = j.at("topology").get<std::vector<std::vector<std::size_t>>>();
    if (j.contains("s") && j.at("s").get<std::size_t>() != p.topology.species_count())
      throw ValidationError("landscape document: s disagrees with topology length");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("landscape document: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace dmine
