#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <iterator>
#include <tuple>
#include <vector>

#include "dmine/error.hpp"
#include "dmine/insert_design.hpp"

namespace dmine {

using Vec3f = std::array<float, 3>;
using Triangle = std::array<Vec3f, 3>;

struct Box {
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
};

// Solids are implicit fields: positive inside, negative outside, roughly a
// distance near the surface (1-Lipschitz). Values further than a band from
// the surface may be approximated as long as their sign is right.
// (For InsertField the band is a constructor argument.)
template <class F>
concept SolidField = requires(const F& f, double x, double y, double z) {
  { f(x, y, z) } -> std::convertible_to<double>;
  { f.bounds() } -> std::convertible_to<Box>;
};

struct AnnulusField {
  double inner = 17.5;
  double outer = 19.5;
  double height = 10.0;

  double operator()(double x, double y, double z) const {
    const double r = std::sqrt(x * x + y * y);
    return std::min({r - inner, outer - r, z, height - z});
  }
  Box bounds() const { return {{-outer, -outer, 0.0}, {outer, outer, height}}; }
};

class InsertField {
public:
  // band must exceed the longest lattice edge (sqrt(3) * pitch).
  explicit InsertField(const InsertSpec& spec, double band = 1.0) : spec_(spec), band_(band) {
    for (std::size_t i = 0; i < spec.sections.size(); ++i) {
      Rows& rows = rows_[i];
      const SectionSpec& s = spec.sections[i];
      const auto [lo, hi] = spec.hole_band(i);
      rows.layout = row_layout(s, lo, hi);
      rows.radius = s.hole_diameter / 2.0;
      rows.bore_start = s.inner_radius - 2.0;
      rows.present.assign(rows.layout.rows * rows.layout.columns, 0);
      for (const HolePlacement& h : hole_layout(spec, i)) rows.present[h.row * rows.layout.columns + h.column] = 1;
      rows.pitch = s.hole_diameter + s.hole_spacing;
      for (std::size_t k = 0; k < rows.layout.columns; ++k) {
        const double theta = (static_cast<double>(k) + 0.5) * rows.layout.step;
        rows.axis.push_back({std::cos(theta), std::sin(theta)});
      }
    }
  }

  Box bounds() const {
    const double R = spec_.constants.outer_radius;
    return {{-R, -R, 0.0}, {R, R, spec_.constants.total_height}};
  }

  double operator()(double x, double y, double z) const {
    const auto& c = spec_.constants;
    const double r = std::sqrt(x * x + y * y);
    const double R = c.outer_radius;
    double f = std::min({r - c.base_hole_diameter / 2.0, R - r, z, c.base_thickness - z});
    for (std::size_t i = 0; i < spec_.sections.size(); ++i) {
      const double z0 = static_cast<double>(i) * c.section_height;
      f = std::max(f, std::min({r - spec_.sections[i].inner_radius, R - r, z - z0, z0 + c.section_height - z}));
    }
    if (f < -band_) return f;
    f = std::min(f, -cutout(spec_.inlet, x, y, z));
    f = std::min(f, -cutout(spec_.outlet, x, y, z));

    const double zs = std::floor(z / c.section_height);
    if (zs < 0.0 || zs >= static_cast<double>(spec_.sections.size())) return f;
    const Rows& rows = rows_[static_cast<std::size_t>(zs)];
    const RowLayout& L = rows.layout;
    if (L.rows == 0 || L.columns == 0) return f;
    double phi = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t j = 0; j < L.rows; ++j) {
      const double dz = z - (L.first_z + static_cast<double>(j) * rows.pitch);
      if (std::abs(dz) > rows.radius + band_) continue;
      if (std::isnan(phi)) phi = std::atan2(y, x);
      const long nearest = std::lround(phi / L.step - 0.5);
      const long n = static_cast<long>(L.columns);
      for (long dk = -1; dk <= 1; ++dk) {
        const long k = ((nearest + dk) % n + n) % n;
        if (!rows.present[j * L.columns + static_cast<std::size_t>(k)]) continue;
        const auto [ct, st] = rows.axis[static_cast<std::size_t>(k)];
        const double t = x * ct + y * st;
        const double w = -x * st + y * ct;
        const double bore = std::min(rows.radius - std::sqrt(w * w + dz * dz), t - rows.bore_start);
        f = std::min(f, -bore);
      }
    }
    return f;
  }

private:
  struct Rows {
    RowLayout layout;
    std::vector<std::uint8_t> present;
    std::vector<std::pair<double, double>> axis;  // cos, sin per column
    double radius = 0.0;
    double bore_start = 0.0;
    double pitch = 0.0;
  };

  static double cutout(const Cutout& c, double x, double y, double z) {
    return std::min({c.half_width - std::abs(y), static_cast<double>(c.side) * x, z - c.z_lo, c.z_hi - z});
  }

  InsertSpec spec_;
  double band_;
  std::array<Rows, 4> rows_{};
};

// Lattice pitch is the requested resolution times this factor so that no
// lattice node lands exactly on the round-number surfaces of the insert.
inline constexpr double kPitchNudge = 1.0007;

struct MarchStats {
  std::uint64_t inside_nodes = 0;
  double pitch = 0.0;
};

namespace detail {

inline int parity(const std::array<int, 4>& order) {
  int inv = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) inv += order[i] > order[j];
  return inv & 1;
}

}  // namespace detail

// Marching tetrahedra over a lattice with x, y nodes at k*pitch and z nodes
// at (k+1/2)*pitch; each cube splits into the six Kuhn tetrahedra. Every
// emitted triangle is wound counter-clockwise seen from outside. Vertices on
// a lattice edge are interpolated from its lower-indexed node, so shared
// vertices are bit-identical and the surface is closed. Nodes are also the
// voxel centres: inside_nodes * pitch^3 is the rasterized volume.
template <SolidField F, class Emit>
MarchStats march(const F& field, double pitch, Emit&& emit) {
  if (!(pitch > 0.0)) throw ValidationError("lattice pitch must be positive");
  const Box b = field.bounds();
  const long x0 = static_cast<long>(std::floor(b.lo[0] / pitch)) - 1;
  const long x1 = static_cast<long>(std::ceil(b.hi[0] / pitch)) + 1;
  const long y0 = static_cast<long>(std::floor(b.lo[1] / pitch)) - 1;
  const long y1 = static_cast<long>(std::ceil(b.hi[1] / pitch)) + 1;
  const long z0 = static_cast<long>(std::floor(b.lo[2] / pitch - 0.5)) - 1;
  const long z1 = static_cast<long>(std::ceil(b.hi[2] / pitch - 0.5)) + 1;
  const std::size_t nx = static_cast<std::size_t>(x1 - x0 + 1);
  const std::size_t ny = static_cast<std::size_t>(y1 - y0 + 1);
  const double eps = 1e-3 * pitch;

  MarchStats stats;
  stats.pitch = pitch;
  auto fill = [&](std::vector<double>& layer, long kz) {
    const double z = (static_cast<double>(kz) + 0.5) * pitch;
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const double y = static_cast<double>(y0 + static_cast<long>(iy)) * pitch;
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double x = static_cast<double>(x0 + static_cast<long>(ix)) * pitch;
        double v = field(x, y, z);
        if (std::abs(v) < eps) v = -eps;
        layer[iy * nx + ix] = v;
        stats.inside_nodes += v > 0.0;
      }
    }
  };

  // Kuhn tetrahedra: corner bits x=1, y=2, z=4; one per axis order.
  std::array<std::array<int, 4>, 6> tets{};
  {
    std::array<int, 3> axes{0, 1, 2};
    std::size_t t = 0;
    do {
      const int a = 1 << axes[0];
      const int b = a | (1 << axes[1]);
      std::array<int, 4> tet{0, a, b, 7};
      const int sign = (axes[0] > axes[1]) + (axes[0] > axes[2]) + (axes[1] > axes[2]);
      if (sign & 1) std::swap(tet[2], tet[3]);
      tets[t++] = tet;
    } while (std::next_permutation(axes.begin(), axes.end()));
  }

  std::vector<double> lower(nx * ny);
  std::vector<double> upper(nx * ny);
  fill(lower, z0);
  for (long kz = z0; kz < z1; ++kz) {
    fill(upper, kz + 1);
    for (std::size_t iy = 0; iy + 1 < ny; ++iy) {
      for (std::size_t ix = 0; ix + 1 < nx; ++ix) {
        std::array<double, 8> v{};
        std::array<std::array<long, 3>, 8> node{};
        int inside = 0;
        for (int c = 0; c < 8; ++c) {
          const std::size_t dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
          v[c] = (dz ? upper : lower)[(iy + dy) * nx + ix + dx];
          inside += v[c] > 0.0;
        }
        if (inside == 0 || inside == 8) continue;
        for (int c = 0; c < 8; ++c) {
          const std::size_t dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
          node[c] = {x0 + static_cast<long>(ix + dx), y0 + static_cast<long>(iy + dy), kz + static_cast<long>(dz)};
        }

        auto vertex = [&](int a, int b) -> Vec3f {
          // Lower-indexed node first (z, then y, then x).
          const auto& na = node[a];
          const auto& nb = node[b];
          if (std::tie(nb[2], nb[1], nb[0]) < std::tie(na[2], na[1], na[0])) std::swap(a, b);
          const auto& p = node[a];
          const auto& q = node[b];
          const double t = v[a] / (v[a] - v[b]);
          const double pa[3] = {static_cast<double>(p[0]) * pitch, static_cast<double>(p[1]) * pitch,
                                (static_cast<double>(p[2]) + 0.5) * pitch};
          const double pb[3] = {static_cast<double>(q[0]) * pitch, static_cast<double>(q[1]) * pitch,
                                (static_cast<double>(q[2]) + 0.5) * pitch};
          return {static_cast<float>(pa[0] + (pb[0] - pa[0]) * t), static_cast<float>(pa[1] + (pb[1] - pa[1]) * t),
                  static_cast<float>(pa[2] + (pb[2] - pa[2]) * t)};
        };

        for (const auto& tet : tets) {
          std::array<int, 4> in{}, out{};
          int ni = 0, no = 0;
          for (int i = 0; i < 4; ++i) (v[tet[i]] > 0.0 ? in[ni++] : out[no++]) = i;
          if (ni == 0 || ni == 4) continue;
          // Reorder the tet so the lone or paired vertices come first while
          // keeping its positive orientation.
          std::array<int, 4> order{};
          if (ni == 1) order = {in[0], out[0], out[1], out[2]};
          else if (ni == 3) order = {out[0], in[0], in[1], in[2]};
          else order = {in[0], in[1], out[0], out[1]};
          if (detail::parity(order)) std::swap(order[2], order[3]);
          const int a = tet[order[0]], b = tet[order[1]], c = tet[order[2]], d = tet[order[3]];
          if (ni == 1) {
            emit(Triangle{vertex(a, b), vertex(a, c), vertex(a, d)});
          } else if (ni == 3) {
            emit(Triangle{vertex(a, b), vertex(a, d), vertex(a, c)});
          } else {
            const Vec3f ac = vertex(a, c), ad = vertex(a, d), bd = vertex(b, d), bc = vertex(b, c);
            emit(Triangle{ac, ad, bd});
            emit(Triangle{ac, bd, bc});
          }
        }
      }
    }
    std::swap(lower, upper);
  }
  return stats;
}

struct MeshTotals {
  double area = 0.0;    // mm^2
  double volume = 0.0;  // mm^3, divergence theorem
};

inline void accumulate(MeshTotals& m, const Triangle& t) {
  const double a[3] = {t[0][0], t[0][1], t[0][2]};
  const double b[3] = {t[1][0], t[1][1], t[1][2]};
  const double c[3] = {t[2][0], t[2][1], t[2][2]};
  const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double w[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const double n[3] = {u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]};
  m.area += 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  m.volume += (a[0] * (b[1] * c[2] - b[2] * c[1]) + a[1] * (b[2] * c[0] - b[0] * c[2]) + a[2] * (b[0] * c[1] - b[1] * c[0])) / 6.0;
}

inline void check_resolution(double res) {
  if (!(res >= 0.05 && res <= 0.5))
    throw ValidationError("voxel resolution must lie in [0.05, 0.5] mm, got " + std::to_string(res));
}

// Early-exit band for a lattice at this resolution; must exceed sqrt(3) * pitch.
inline double field_band(double resolution) { return 2.0 * resolution * kPitchNudge; }

// Volume from the voxel count; surface area (and a cross-check volume) from
// the marching-tetrahedra surface at the same resolution.
template <SolidField F>
GeometryMetrics solid_metrics(const F& field, double resolution, double container_ml) {
  check_resolution(resolution);
  MeshTotals totals;
  const MarchStats s = march(field, resolution * kPitchNudge, [&](const Triangle& t) { accumulate(totals, t); });
  GeometryMetrics m;
  m.voxel_resolution = resolution;
  m.solid_volume = static_cast<double>(s.inside_nodes) * s.pitch * s.pitch * s.pitch / 1000.0;
  m.anolyte_volume = container_ml - m.solid_volume;
  m.surface_area = totals.area / 100.0;
  m.mesh_volume = totals.volume / 1000.0;
  return m;
}

inline GeometryMetrics metrics(const InsertSpec& spec, double resolution = 0.1) {
  return solid_metrics(InsertField(spec, field_band(resolution)), resolution, spec.constants.container_volume_ml);
}

template <SolidField F>
std::vector<Triangle> mesh(const F& field, double resolution) {
  check_resolution(resolution);
  std::vector<Triangle> tris;
  march(field, resolution * kPitchNudge, [&](const Triangle& t) { tris.push_back(t); });
  return tris;
}

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& buf, float f) { put_u32(buf, std::bit_cast<std::uint32_t>(f)); }

}  // namespace detail

// Binary STL, little-endian, units mm.
inline std::string stl_bytes(const std::vector<Triangle>& tris, std::string_view header = "dmine insert mesh (mm)") {
  std::string buf(80, '\0');
  std::memcpy(buf.data(), header.data(), std::min<std::size_t>(header.size(), 80));
  detail::put_u32(buf, static_cast<std::uint32_t>(tris.size()));
  buf.reserve(buf.size() + tris.size() * 50);
  for (const Triangle& t : tris) {
    const double u[3] = {double(t[1][0]) - t[0][0], double(t[1][1]) - t[0][1], double(t[1][2]) - t[0][2]};
    const double w[3] = {double(t[2][0]) - t[0][0], double(t[2][1]) - t[0][1], double(t[2][2]) - t[0][2]};
    double n[3] = {u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]};
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    for (double& c : n) c = len > 0.0 ? c / len : 0.0;
    for (double c : n) detail::put_f32(buf, static_cast<float>(c));
    for (const Vec3f& p : t)
      for (float c : p) detail::put_f32(buf, c);
    buf.push_back('\0');
    buf.push_back('\0');
  }
  return buf;
}

inline void write_stl(const std::filesystem::path& path, const std::vector<Triangle>& tris) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = stl_bytes(tris);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<Triangle> insert_mesh(const InsertSpec& spec, double resolution) {
  return mesh(InsertField(spec, field_band(resolution)), resolution);
}

inline constexpr double kDefaultMeshResolution = 0.25;

inline std::size_t export_mesh(const InsertSpec& spec, const std::filesystem::path& path,
                               double resolution = kDefaultMeshResolution) {
  const auto tris = insert_mesh(spec, resolution);
  write_stl(path, tris);
  return tris.size();
}

inline std::vector<Triangle> read_stl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 84) throw IoError(path.string() + " is too short for a binary STL");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
    return v;
  };
  const std::uint32_t n = u32(80);
  if (bytes.size() != 84 + static_cast<std::size_t>(n) * 50) throw IoError(path.string() + ": size does not match triangle count");
  std::vector<Triangle> tris(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t base = 84 + static_cast<std::size_t>(i) * 50 + 12;
    for (int v = 0; v < 3; ++v)
      for (int c = 0; c < 3; ++c) tris[i][v][c] = std::bit_cast<float>(u32(base + (v * 3 + c) * 4));
  }
  return tris;
}

}  // namespace dmine
