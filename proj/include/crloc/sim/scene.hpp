#pragma once

// Labelled triangle scenes, anomaly edits and Poisson-disk surface sampling
// for prior maps.

#include "crloc/sim/mesh.hpp"
#include "crloc/sim/rng.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace crloc::sim {

struct SimScene {
  std::vector<Mesh> meshes;

  bool has(const std::string& label) const {
    for (const auto& m : meshes) {
      if (m.label == label) return true;
    }
    return false;
  }

  std::vector<Triangle> triangles() const {
    std::vector<Triangle> out;
    for (const auto& m : meshes) out.insert(out.end(), m.triangles.begin(), m.triangles.end());
    return out;
  }

  /// Label of each triangle in triangles() order.
  std::vector<std::string> triangle_labels() const {
    std::vector<std::string> out;
    for (const auto& m : meshes) out.insert(out.end(), m.triangles.size(), m.label);
    return out;
  }
};

struct AnomalyEdit {
  enum class Kind { kAdd, kRemove };
  Kind kind = Kind::kAdd;
  std::string label;
  Mesh mesh;  // for kAdd
};

inline AnomalyEdit add_object(Mesh mesh) { return {AnomalyEdit::Kind::kAdd, mesh.label, std::move(mesh)}; }
inline AnomalyEdit remove_feature(const std::string& label) { return {AnomalyEdit::Kind::kRemove, label, {}}; }

inline SimScene apply_anomalies(const SimScene& scene, const std::vector<AnomalyEdit>& edits) {
  SimScene out = scene;
  for (const auto& e : edits) {
    if (e.kind == AnomalyEdit::Kind::kAdd) {
      out.meshes.push_back(e.mesh);
    } else {
      const auto before = out.meshes.size();
      std::erase_if(out.meshes, [&](const Mesh& m) { return m.label == e.label; });
      if (out.meshes.size() == before) {
        throw std::invalid_argument("apply_anomalies: no object labelled '" + e.label + "'");
      }
    }
  }
  return out;
}

/// Room split into one labelled mesh per wall so single walls can be removed.
inline std::vector<Mesh> make_room(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  const Mesh box = make_box("room", lo, hi);
  static const char* names[6] = {"floor", "ceiling", "wall_-y", "wall_+y", "wall_-x", "wall_+x"};
  std::vector<Mesh> out;
  for (int f = 0; f < 6; ++f) {
    out.push_back({names[f], {box.triangles[2 * f], box.triangles[2 * f + 1]}});
  }
  return out;
}

/// Desk-scale test scene: 1 m room with three box obstacles.
inline SimScene default_scene() {
  SimScene s;
  s.meshes = make_room({-0.5, -0.5, 0.0}, {0.5, 0.5, 1.0});
  s.meshes.push_back(make_box("shelf", {0.3, -0.1, 0.5}, {0.5, 0.15, 0.65}));
  s.meshes.push_back(make_box("crate", {-0.5, -0.3, 0.2}, {-0.3, 0.0, 0.45}));
  s.meshes.push_back(make_box("block", {-0.15, 0.25, 0.0}, {0.1, 0.5, 0.25}));
  return s;
}

/// The planted anomaly: a 10 cm cube floating 12 cm in front of the -x wall.
inline Mesh default_anomaly_cube() { return make_box("anomaly_cube", {-0.38, 0.12, 0.57}, {-0.28, 0.22, 0.67}); }

namespace detail {

// 21 bits per axis; covers +-10 km at 1 cm cells.
inline std::uint64_t pack_cell(std::int64_t x, std::int64_t y, std::int64_t z) {
  constexpr std::uint64_t kMask = (1ULL << 21) - 1;
  return ((static_cast<std::uint64_t>(x) & kMask) << 42) | ((static_cast<std::uint64_t>(y) & kMask) << 21) |
         (static_cast<std::uint64_t>(z) & kMask);
}

struct SplitMixHash {
  std::size_t operator()(std::uint64_t k) const { return static_cast<std::size_t>(splitmix64(k)); }
};

}  // namespace detail

/// Poisson-disk samples on the scene surfaces by dart throwing: candidates are
/// drawn area-uniformly and kept when no accepted sample lies within `spacing`.
/// `darts_per_area` candidates are drawn per spacing^2 of surface.
inline std::vector<Eigen::Vector3d> make_prior_map(const SimScene& scene, double spacing, std::uint64_t seed,
                                                   double darts_per_area = 20.0) {
  if (!(spacing > 0.0)) throw std::invalid_argument("make_prior_map: spacing must be positive");
  const std::vector<Triangle> tris = scene.triangles();
  std::vector<double> cdf;
  double total = 0.0;
  for (const auto& t : tris) {
    total += t.area();
    cdf.push_back(total);
  }
  std::vector<Eigen::Vector3d> out;
  if (tris.empty() || total <= 0.0) return out;

  auto rng = make_rng(seed, 0x6d6170);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::unordered_map<std::uint64_t, std::vector<int>, detail::SplitMixHash> grid;
  grid.reserve(static_cast<std::size_t>(2.0 * total / (spacing * spacing)));
  const double r2 = spacing * spacing;
  const auto darts = static_cast<std::size_t>(std::ceil(darts_per_area * total / r2));
  for (std::size_t i = 0; i < darts; ++i) {
    const double a = uni(rng) * total;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), a);
    const Triangle& t = tris[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), tris.size() - 1))];
    double u = uni(rng), v = uni(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Eigen::Vector3d p = t.a + u * (t.b - t.a) + v * (t.c - t.a);
    const auto kx = static_cast<std::int64_t>(std::floor(p.x() / spacing));
    const auto ky = static_cast<std::int64_t>(std::floor(p.y() / spacing));
    const auto kz = static_cast<std::int64_t>(std::floor(p.z() / spacing));
    bool free = true;
    for (std::int64_t dx = -1; dx <= 1 && free; ++dx) {
      for (std::int64_t dy = -1; dy <= 1 && free; ++dy) {
        for (std::int64_t dz = -1; dz <= 1 && free; ++dz) {
          const auto c = grid.find(detail::pack_cell(kx + dx, ky + dy, kz + dz));
          if (c == grid.end()) continue;
          for (int j : c->second) {
            if ((out[static_cast<std::size_t>(j)] - p).squaredNorm() < r2) {
              free = false;
              break;
            }
          }
        }
      }
    }
    if (free) {
      grid[detail::pack_cell(kx, ky, kz)].push_back(static_cast<int>(out.size()));
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace crloc::sim
