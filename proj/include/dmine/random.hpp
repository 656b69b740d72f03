#pragma once

// Portable randomness.
//
// Two independent facilities live here:
//
//  * a counter-based pseudo-random function (PRF) used for virtual NKCS
//    fitness tables. A table cell is a pure function of
//    (seed, species, gene, row), so tables of 2^23 rows never need to exist
//    in memory. The construction is frozen under the identifier below; any
//    change to it must bump the identifier, since landscapes are persisted
//    as parameters only.
//
//  * a sequential generator (Rng) for evolutionary operators. It wraps
//    std::mt19937_64, whose output sequence is fixed by the standard, and
//    implements its own distributions because the std:: distributions are
//    implementation-defined.

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <stdexcept>
#include <sstream>
#include <string>
#include <string_view>

namespace dmine {

inline constexpr std::string_view kPrfId = "splitmix64-nkcs-v1";

// splitmix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// Top 53 bits of a word mapped onto [0, 1).
constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Folds a list of tags into a seed. Used to derive landscape and run seeds
// from a base seed so that every unit of work can be recomputed in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(base + kGolden);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + kGolden));
  return h;
}

// Key of one virtual table: (seed, species, gene).
constexpr std::uint64_t table_key(std::uint64_t seed, std::uint64_t species,
                                  std::uint64_t gene) noexcept {
  std::uint64_t h = mix64(seed ^ 0x6e6b6373'7072'6631ULL);  // "nkcsprf1"
  h = mix64(h + (species + 1) * kGolden);
  h = mix64(h + (gene + 1) * 0xd1b54a32d192ed03ULL);
  return h;
}

// Value of row `row` in the table identified by `key`, uniform on [0, 1).
constexpr double table_value(std::uint64_t key, std::uint64_t row) noexcept {
  return unit_interval(mix64(key ^ mix64(row + kGolden)));
}

class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double uniform01() { return unit_interval(engine_()); }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform01() < p;
  }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= threshold) return x % n;
    }
  }

  std::string save() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw std::invalid_argument("corrupt rng state");
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
  std::mt19937_64 engine_;
};

}  // namespace dmine
