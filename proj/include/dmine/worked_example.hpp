#pragma once

#include <array>

#include "dmine/landscape.hpp"

namespace dmine {

// Hand-built N=3, K=1, C=1, S=2 landscape with fixed tables for species 0.
// Species 1's tables are all 0.5.
inline Landscape worked_example_landscape() {
  LandscapeParams p;
  p.n = 3;
  p.k = 1;
  p.c = 1;
  p.topology = Topology::chain(2);
  p.seed = 0;
  EpistasisMap map(2, std::vector<GeneLinks>(3));
  // s1: n1 <- (s1n3, s2n1); n2 <- (s1n1, s2n3); n3 <- (s1n2, s2n3)
  map[0][0] = {{2}, {{0}}};
  map[0][1] = {{0}, {{2}}};
  map[0][2] = {{1}, {{2}}};
  // s2: n1 <- (s2n2, s1n2); n2 <- (s2n1, s1n1); n3 <- (s2n2, s1n3)
  map[1][0] = {{1}, {{1}}};
  map[1][1] = {{0}, {{0}}};
  map[1][2] = {{1}, {{2}}};
  static constexpr std::array<std::array<double, 8>, 3> s1 = {{
      {0.57, 0.12, 0.09, 0.16, 0.44, 0.66, 0.33, 0.44},
      {0.11, 0.32, 0.68, 0.30, 0.19, 0.77, 0.21, 0.23},
      {0.75, 0.42, 0.25, 0.28, 0.13, 0.58, 0.66, 0.91},
  }};
  return Landscape(p, map, [](std::size_t species, std::size_t gene, std::uint64_t row) {
    return species == 0 ? s1.at(gene).at(row) : 0.5;
  });
}

}  // namespace dmine
