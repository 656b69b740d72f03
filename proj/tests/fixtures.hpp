#pragma once

#include <array>
#include <cstdint>

#include "dmine/landscape.hpp"
#include "dmine/worked_example.hpp"

namespace dmine::testing {

inline Landscape constant_landscape(std::size_t n, std::size_t k, std::size_t c, std::size_t species,
                                    double value = 0.5, std::uint64_t seed = 1) {
  LandscapeParams p;
  p.n = n;
  p.k = k;
  p.c = c;
  p.topology = Topology::chain(species);
  p.seed = seed;
  return Landscape(p, draw_epistasis(p), [value](std::size_t, std::size_t, std::uint64_t) { return value; });
}

inline LandscapeParams small_params(std::uint64_t seed, std::size_t n = 4, std::size_t k = 1,
                                    std::size_t c = 1, std::size_t species = 2) {
  LandscapeParams p;
  p.n = n;
  p.k = k;
  p.c = c;
  p.topology = Topology::chain(species);
  p.seed = seed;
  return p;
}

}  // namespace dmine::testing
