#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "dmine/error.hpp"
#include "dmine/genome.hpp"

namespace dmine {

struct SectionSpec {
  double inner_radius = 14.5;  // mm
  double hole_diameter = 0.0;  // mm, 0 = no holes
  double hole_spacing = 1.0;   // mm, edge to edge
  double height = 10.0;        // mm

  bool operator==(const SectionSpec&) const = default;
};

struct InsertConstants {
  double outer_radius = 19.5;
  double total_height = 40.0;
  double section_height = 10.0;
  double base_thickness = 2.0;
  double base_hole_diameter = 6.0;
  double cutout_width = 8.0;
  double container_volume_ml = 44.0;  // anolyte held by the empty chamber
};

// Rectangular opening through the wall: |y| < width/2 on the side of the x
// axis given by `side` (+1 or -1), for z in [z_lo, z_hi].
struct Cutout {
  int side = 1;
  double half_width = 4.0;
  double z_lo = 0.0;
  double z_hi = 0.0;
};

struct InsertSpec {
  InsertGenome genome;
  std::array<SectionSpec, 4> sections{};
  InsertConstants constants{};
  Cutout inlet{};
  Cutout outlet{};

  // z range of section i that holes may occupy; the bottom section excludes
  // the base plate.
  std::pair<double, double> hole_band(std::size_t i) const {
    const double z0 = static_cast<double>(i) * constants.section_height;
    const double lo = i == 0 ? std::max(z0, constants.base_thickness) : z0;
    return {lo, z0 + constants.section_height};
  }
};

inline InsertSpec decode(const InsertGenome& genome) {
  InsertSpec spec;
  spec.genome = genome;
  for (std::size_t i = 0; i < 4; ++i) {
    SectionSpec& s = spec.sections[i];
    s.inner_radius = 14.5 + genome[3 * i];
    s.hole_diameter = 0.0 + genome[3 * i + 1];
    s.hole_spacing = 1.0 + genome[3 * i + 2];
    s.height = spec.constants.section_height;
  }
  const auto& c = spec.constants;
  const double half = c.total_height / 2.0;
  // Inlet: bottom half above the base plate. Outlet: opposite side, top half;
  // the box runs past the top face so the two never coincide.
  spec.inlet = Cutout{+1, c.cutout_width / 2.0, c.base_thickness, half};
  spec.outlet = Cutout{-1, c.cutout_width / 2.0, half, c.total_height + 1.0};
  return spec;
}

struct HolePlacement {
  std::size_t section = 0;
  std::size_t row = 0;
  std::size_t column = 0;
  double theta = 0.0;      // bore axis angle, radians
  double z = 0.0;          // bore axis height
  double diameter = 0.0;
  double inner_radius = 0.0;

  double x() const { return inner_radius * std::cos(theta); }
  double y() const { return inner_radius * std::sin(theta); }
};

struct RowLayout {
  std::size_t rows = 0;
  std::size_t columns = 0;  // positions around the circumference
  double step = 0.0;        // angular pitch
  double first_z = 0.0;     // centre of the lowest row
};

// Rows stacked with `spacing` between them and equal margins in [z_lo, z_hi];
// columns on the inner circle with chord >= diameter + spacing.
inline RowLayout row_layout(const SectionSpec& s, double z_lo, double z_hi) {
  RowLayout out;
  const double d = s.hole_diameter;
  const double sp = s.hole_spacing;
  if (d <= 0.0) return out;
  const double avail = z_hi - z_lo;
  const double fit = std::floor((avail - sp) / (d + sp) + 1e-9);
  if (fit < 1.0) return out;
  out.rows = static_cast<std::size_t>(fit);
  const double used = static_cast<double>(out.rows) * d + static_cast<double>(out.rows - 1) * sp;
  out.first_z = z_lo + (avail - used) / 2.0 + d / 2.0;
  const double q = (d + sp) / (2.0 * s.inner_radius);
  if (q >= 1.0) return RowLayout{};
  out.columns = static_cast<std::size_t>(std::floor(std::numbers::pi / std::asin(q) + 1e-9));
  if (out.columns < 1) return RowLayout{};
  out.step = 2.0 * std::numbers::pi / static_cast<double>(out.columns);
  return out;
}

namespace detail {

inline double angle_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  return d > std::numbers::pi ? 2.0 * std::numbers::pi - d : d;
}

inline bool hole_hits_cutout(double theta, double z, double d, double r, const Cutout& c) {
  if (!(z + d / 2.0 > c.z_lo - 1e-9 && z - d / 2.0 < c.z_hi + 1e-9)) return false;
  const double centre = c.side > 0 ? 0.0 : std::numbers::pi;
  // The strip and the bore are both widest in angle at the inner radius.
  const double reach = std::asin(std::min(1.0, c.half_width / r)) + std::asin(std::min(1.0, d / (2.0 * r)));
  return angle_gap(theta, centre) <= reach + 1e-9;
}

}  // namespace detail

inline std::vector<HolePlacement> hole_layout(const SectionSpec& s, double z_lo, double z_hi,
                                              std::span<const Cutout> cutouts, std::size_t section = 0) {
  std::vector<HolePlacement> out;
  const RowLayout L = row_layout(s, z_lo, z_hi);
  for (std::size_t r = 0; r < L.rows; ++r) {
    const double z = L.first_z + static_cast<double>(r) * (s.hole_diameter + s.hole_spacing);
    for (std::size_t k = 0; k < L.columns; ++k) {
      const double theta = (static_cast<double>(k) + 0.5) * L.step;
      bool blocked = false;
      for (const Cutout& c : cutouts)
        blocked = blocked || detail::hole_hits_cutout(theta, z, s.hole_diameter, s.inner_radius, c);
      if (blocked) continue;
      out.push_back(HolePlacement{section, r, k, theta, z, s.hole_diameter, s.inner_radius});
    }
  }
  return out;
}

inline std::vector<HolePlacement> hole_layout(const InsertSpec& spec, std::size_t section) {
  if (section >= spec.sections.size()) throw ValidationError("section index out of range");
  const auto [lo, hi] = spec.hole_band(section);
  const std::array<Cutout, 2> cuts{spec.inlet, spec.outlet};
  return hole_layout(spec.sections[section], lo, hi, cuts, section);
}

inline std::vector<HolePlacement> hole_layout(const InsertSpec& spec) {
  std::vector<HolePlacement> all;
  for (std::size_t i = 0; i < spec.sections.size(); ++i) {
    auto h = hole_layout(spec, i);
    all.insert(all.end(), h.begin(), h.end());
  }
  return all;
}

struct GeometryMetrics {
  double solid_volume = 0.0;    // mL
  double anolyte_volume = 0.0;  // mL
  double surface_area = 0.0;    // cm^2
  double voxel_resolution = 0.0;
  double mesh_volume = 0.0;     // mL, divergence theorem on the surface mesh
};

inline nlohmann::json design_document(const InsertSpec& spec, const std::optional<GeometryMetrics>& m = std::nullopt) {
  nlohmann::json doc;
  std::vector<int> genes;
  for (std::size_t i = 0; i < InsertGenome::kGenes; ++i) genes.push_back(spec.genome[i]);
  doc["genome"] = genes;
  doc["sections"] = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.sections.size(); ++i) {
    const auto& s = spec.sections[i];
    doc["sections"].push_back({{"inner_radius_mm", s.inner_radius},
                               {"hole_diameter_mm", s.hole_diameter},
                               {"hole_spacing_mm", s.hole_spacing},
                               {"height_mm", s.height},
                               {"holes", hole_layout(spec, i).size()}});
  }
  const auto& c = spec.constants;
  doc["constants"] = {{"outer_radius_mm", c.outer_radius},
                      {"total_height_mm", c.total_height},
                      {"base_thickness_mm", c.base_thickness},
                      {"base_hole_diameter_mm", c.base_hole_diameter},
                      {"cutout_width_mm", c.cutout_width},
                      {"inlet_z_mm", {spec.inlet.z_lo, spec.inlet.z_hi}},
                      {"outlet_z_mm", {spec.outlet.z_lo, c.total_height}}};
  if (m) {
    doc["metrics"] = {{"solid_volume_ml", m->solid_volume},
                      {"anolyte_volume_ml", m->anolyte_volume},
                      {"surface_area_cm2", m->surface_area},
                      {"voxel_resolution_mm", m->voxel_resolution}};
  }
  return doc;
}

}  // namespace dmine
