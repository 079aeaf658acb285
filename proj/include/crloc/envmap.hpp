#pragma once

// Prior map: point cloud with PCA normals and planarity weights, indexed by a
// hashed voxel grid for exact nearest-neighbour queries.

#include "crloc/ply.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

namespace crloc {

struct MapPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double planarity = 0.0;  // alpha = (sigma2 - sigma3) / sigma1
  Eigen::Matrix3d prior_covariance = Eigen::Matrix3d::Identity() * 1e-6;
  bool degenerate = false;
};

struct VoxelKey {
  std::int64_t x = 0, y = 0, z = 0;
  friend bool operator==(const VoxelKey& a, const VoxelKey& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z;
  }
};

struct MapBuildOptions {
  double voxel_size = 0.05;
  int k_neighbors = 20;
  /// Normals are flipped to face this point when given; otherwise +z.
  std::optional<Eigen::Vector3d> interior_point;
  double prior_sigma = 1e-3;  // isotropic Sigma_nn standard deviation (m)
};

struct Neighbor {
  int index = -1;
  double distance = 0.0;
};

/// Immutable voxel-hashed point set. Points keep their input order; the cell
/// table is an open-addressing hash from packed cell keys to contiguous runs
/// of point indices.
class EnvironmentMap {
 public:
  explicit EnvironmentMap(double voxel_size = 0.05) : EnvironmentMap({}, voxel_size) {}

  EnvironmentMap(std::vector<MapPoint> points, double voxel_size) : voxel_size_(voxel_size), points_(std::move(points)) {
    if (!(voxel_size > 0.0)) {
      throw std::invalid_argument("EnvironmentMap: voxel_size must be positive");
    }
    build_index();
  }

  double voxel_size() const { return voxel_size_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<MapPoint>& points() const { return points_; }
  const MapPoint& point(int i) const { return points_[static_cast<std::size_t>(i)]; }
  std::size_t num_cells() const { return num_cells_; }

  VoxelKey key_of(const Eigen::Vector3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size_)),
            static_cast<std::int64_t>(std::floor(p.y() / voxel_size_)),
            static_cast<std::int64_t>(std::floor(p.z() / voxel_size_))};
  }

  /// Indices of the points stored in cell k (empty if unoccupied).
  std::vector<int> cell(const VoxelKey& k) const {
    const Slot* s = find(k);
    if (!s) return {};
    return {order_.begin() + s->begin, order_.begin() + s->end};
  }

  /// Euclidean-nearest point within max_radius; shells of voxels are visited
  /// outward until no unvisited voxel can hold a closer point.
  std::optional<Neighbor> nearest_index(const Eigen::Vector3d& q, double max_radius) const {
    if (points_.empty()) {
      return std::nullopt;
    }
    const VoxelKey c = key_of(q);
    const double face = face_distance(q, c);
    double best = std::numeric_limits<double>::infinity();
    int best_i = -1;
    const int max_ring = max_ring_for(c, max_radius);
    auto consider = [&](int i, const Eigen::Vector3d& p) {
      const double d = (p - q).squaredNorm();
      if (d < best || (d == best && i < best_i)) {
        best = d;
        best_i = i;
      }
    };
    std::size_t cells = 0;
    for (int r = 0; r <= max_ring; ++r) {
      if ((cells += shell_cells(r)) > points_.size()) {
        // Sparse map: the remaining shells cost more than a linear scan.
        scan_all(consider);
        break;
      }
      visit_shell(c, r, q, [&] { return std::min(best, max_radius * max_radius); }, consider);
      // Points in shells > r are at least r * voxel_size + face away.
      const double bound = r * voxel_size_ + face;
      if ((best_i >= 0 && best <= bound * bound) || bound > max_radius) {
        break;
      }
    }
    if (best_i < 0 || best > max_radius * max_radius) {
      return std::nullopt;
    }
    return Neighbor{best_i, std::sqrt(best)};
  }

  std::optional<MapPoint> query_nn(const Eigen::Vector3d& q, double max_radius) const {
    const auto n = nearest_index(q, max_radius);
    if (!n) {
      return std::nullopt;
    }
    return points_[static_cast<std::size_t>(n->index)];
  }

  /// k nearest points (ascending distance), including a coincident query point.
  std::vector<Neighbor> knn(const Eigen::Vector3d& q, int k) const {
    std::vector<Neighbor> out;
    if (points_.empty() || k <= 0) {
      return out;
    }
    // Heap entries hold squared distances until the final pass.
    auto cmp = [](const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    };
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(cmp)> heap(cmp);
    const VoxelKey c = key_of(q);
    const double face = face_distance(q, c);
    const int max_ring = max_ring_for(c, std::numeric_limits<double>::infinity());
    auto consider = [&](int i, const Eigen::Vector3d& p) {
      const Neighbor nb{i, (p - q).squaredNorm()};
      if (static_cast<int>(heap.size()) < k) {
        heap.push(nb);
      } else if (cmp(nb, heap.top())) {
        heap.pop();
        heap.push(nb);
      }
    };
    std::size_t cells = 0;
    for (int r = 0; r <= max_ring; ++r) {
      if ((cells += shell_cells(r)) > points_.size()) {
        heap = decltype(heap)(cmp);
        scan_all(consider);
        break;
      }
      const auto limit = [&] {
        return static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity() : heap.top().distance;
      };
      visit_shell(c, r, q, limit, consider);
      const double bound = r * voxel_size_ + face;
      if (static_cast<int>(heap.size()) == k && heap.top().distance <= bound * bound) {
        break;
      }
    }
    while (!heap.empty()) {
      out.push_back({heap.top().index, std::sqrt(heap.top().distance)});
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  struct Slot {
    std::uint64_t key = 0;
    int begin = -1;  // -1 marks an empty slot
    int end = -1;
  };

  // 21 bits per axis.
  static std::uint64_t pack(const VoxelKey& k) {
    constexpr std::uint64_t kMask = (1ULL << 21) - 1;
    return ((static_cast<std::uint64_t>(k.x) & kMask) << 42) | ((static_cast<std::uint64_t>(k.y) & kMask) << 21) |
           (static_cast<std::uint64_t>(k.z) & kMask);
  }

  static std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return x;
  }

  const Slot* find(const VoxelKey& k) const {
    if (slots_.empty()) return nullptr;
    const std::uint64_t key = pack(k);
    std::size_t i = mix(key) & mask_;
    while (true) {
      const Slot& s = slots_[i];
      if (s.begin < 0) return nullptr;
      if (s.key == key) return &s;
      i = (i + 1) & mask_;
    }
  }

  void build_index() {
    const std::size_t n = points_.size();
    if (n == 0) return;
    std::vector<std::pair<std::uint64_t, int>> keyed(n);
    lo_ = hi_ = key_of(points_[0].position);
    for (std::size_t i = 0; i < n; ++i) {
      const VoxelKey k = key_of(points_[i].position);
      constexpr std::int64_t kLimit = 1 << 20;
      if (std::abs(k.x) >= kLimit || std::abs(k.y) >= kLimit || std::abs(k.z) >= kLimit) {
        throw std::invalid_argument("EnvironmentMap: point too far from the origin for the voxel size");
      }
      keyed[i] = {pack(k), static_cast<int>(i)};
      lo_ = {std::min(lo_.x, k.x), std::min(lo_.y, k.y), std::min(lo_.z, k.z)};
      hi_ = {std::max(hi_.x, k.x), std::max(hi_.y, k.y), std::max(hi_.z, k.z)};
    }
    std::sort(keyed.begin(), keyed.end());
    order_.resize(n);
    positions_.resize(n);
    std::size_t cells = 0;
    for (std::size_t i = 0; i < n; ++i) {
      order_[i] = keyed[i].second;
      positions_[i] = points_[static_cast<std::size_t>(keyed[i].second)].position;
      if (i == 0 || keyed[i].first != keyed[i - 1].first) ++cells;
    }
    num_cells_ = cells;
    std::size_t cap = 16;
    while (cap < 2 * cells) cap <<= 1;
    slots_.assign(cap, Slot{});
    mask_ = cap - 1;
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && keyed[j].first == keyed[i].first) ++j;
      std::size_t h = mix(keyed[i].first) & mask_;
      while (slots_[h].begin >= 0) h = (h + 1) & mask_;
      slots_[h] = {keyed[i].first, static_cast<int>(i), static_cast<int>(j)};
      i = j;
    }
  }

  static std::size_t shell_cells(int r) {
    const auto a = static_cast<std::size_t>(2 * r + 1);
    const auto b = static_cast<std::size_t>(std::max(2 * r - 1, 0));
    return a * a * a - b * b * b;
  }

  template <typename Fn>
  void scan_all(Fn&& fn) const {
    for (std::size_t i = 0; i < order_.size(); ++i) fn(order_[i], positions_[i]);
  }

  double face_distance(const Eigen::Vector3d& q, const VoxelKey& c) const {
    const Eigen::Vector3d lo(c.x * voxel_size_, c.y * voxel_size_, c.z * voxel_size_);
    const Eigen::Vector3d a = q - lo;
    const Eigen::Vector3d b = Eigen::Vector3d::Constant(voxel_size_) - a;
    return std::max(0.0, std::min(a.minCoeff(), b.minCoeff()));
  }

  // Largest shell index worth visiting: limited by the search radius and by
  // the occupied bounding box of the map.
  int max_ring_for(const VoxelKey& c, double max_radius) const {
    const std::int64_t span = std::max({std::abs(c.x - lo_.x), std::abs(c.x - hi_.x),
                                        std::abs(c.y - lo_.y), std::abs(c.y - hi_.y),
                                        std::abs(c.z - lo_.z), std::abs(c.z - hi_.z)});
    std::int64_t ring = span;
    if (std::isfinite(max_radius)) {
      ring = std::min<std::int64_t>(ring, static_cast<std::int64_t>(std::ceil(max_radius / voxel_size_)) + 1);
    }
    return static_cast<int>(ring);
  }

  // Skips cells whose box is farther from q than limit() (squared).
  template <typename Limit, typename Fn>
  void visit_cell(const VoxelKey& k, const Eigen::Vector3d& q, Limit&& limit, Fn&& fn) const {
    if (k.x < lo_.x || k.x > hi_.x || k.y < lo_.y || k.y > hi_.y || k.z < lo_.z || k.z > hi_.z) {
      return;
    }
    double d2 = 0.0;
    const std::int64_t kk[3] = {k.x, k.y, k.z};
    for (int a = 0; a < 3; ++a) {
      const double lo = static_cast<double>(kk[a]) * voxel_size_;
      const double gap = std::max({lo - q[a], q[a] - (lo + voxel_size_), 0.0});
      d2 += gap * gap;
    }
    if (d2 > limit()) {
      return;
    }
    const Slot* s = find(k);
    if (!s) {
      return;
    }
    for (int i = s->begin; i < s->end; ++i) {
      fn(order_[static_cast<std::size_t>(i)], positions_[static_cast<std::size_t>(i)]);
    }
  }

  // Cells at Chebyshev distance exactly r from c.
  template <typename Limit, typename Fn>
  void visit_shell(const VoxelKey& c, int r, const Eigen::Vector3d& q, Limit&& limit, Fn&& fn) const {
    if (r == 0) {
      visit_cell(c, q, limit, fn);
      return;
    }
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        const bool edge_xy = std::abs(dx) == r || std::abs(dy) == r;
        if (edge_xy) {
          for (int dz = -r; dz <= r; ++dz) {
            visit_cell({c.x + dx, c.y + dy, c.z + dz}, q, limit, fn);
          }
        } else {
          visit_cell({c.x + dx, c.y + dy, c.z - r}, q, limit, fn);
          visit_cell({c.x + dx, c.y + dy, c.z + r}, q, limit, fn);
        }
      }
    }
  }

  double voxel_size_;
  std::vector<MapPoint> points_;
  std::vector<int> order_;                   // point indices grouped by cell
  std::vector<Eigen::Vector3d> positions_;   // positions in order_ order
  std::vector<Slot> slots_;
  std::size_t mask_ = 0;
  std::size_t num_cells_ = 0;
  VoxelKey lo_{}, hi_{};
};

struct PcaResult {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d principal = Eigen::Vector3d::UnitX();
  double sigma1 = 0.0, sigma2 = 0.0, sigma3 = 0.0;
  double planarity = 0.0;
  bool degenerate = true;
};

/// Neighbourhood PCA: sigma_i are square roots of the covariance eigenvalues,
/// sorted descending; normal is the least-variance direction.
inline PcaResult neighborhood_pca(const std::vector<Eigen::Vector3d>& pts) {
  PcaResult r;
  if (pts.size() < 2) {
    return r;
  }
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);  // ascending
  r.sigma1 = std::sqrt(ev(2));
  r.sigma2 = std::sqrt(ev(1));
  r.sigma3 = std::sqrt(ev(0));
  if (r.sigma1 <= 1e-12) {
    return r;
  }
  r.degenerate = false;
  r.normal = es.eigenvectors().col(0).normalized();
  r.principal = es.eigenvectors().col(2).normalized();
  r.planarity = std::clamp((r.sigma2 - r.sigma3) / r.sigma1, 0.0, 1.0);
  return r;
}

inline Eigen::Vector3d orient_normal(const Eigen::Vector3d& n, const Eigen::Vector3d& p,
                                     const std::optional<Eigen::Vector3d>& interior) {
  double s;
  if (interior) {
    s = n.dot(*interior - p);
  } else {
    s = n.z();
    if (s == 0.0) s = n.y();
    if (s == 0.0) s = n.x();
  }
  return s < 0.0 ? Eigen::Vector3d(-n) : n;
}

/// Builds the prior map: per-point PCA over its k nearest neighbours.
inline EnvironmentMap build_map(const std::vector<Eigen::Vector3d>& points,
                                const MapBuildOptions& opt = {}) {
  if (!(opt.voxel_size > 0.0)) {
    throw std::invalid_argument("build_map: voxel_size must be positive");
  }
  if (opt.k_neighbors < 1 || points.size() < static_cast<std::size_t>(opt.k_neighbors) + 1) {
    throw std::invalid_argument("build_map: need at least k_neighbors + 1 points");
  }
  const Eigen::Matrix3d prior = Eigen::Matrix3d::Identity() * opt.prior_sigma * opt.prior_sigma;
  std::vector<MapPoint> mps(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    mps[i].position = points[i];
    mps[i].prior_covariance = prior;
  }
  const EnvironmentMap index(mps, opt.voxel_size);
  std::vector<Eigen::Vector3d> nb;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto neighbors = index.knn(points[i], opt.k_neighbors + 1);
    nb.clear();
    for (const auto& n : neighbors) nb.push_back(points[static_cast<std::size_t>(n.index)]);
    const PcaResult pca = neighborhood_pca(nb);
    MapPoint& mp = mps[i];
    mp.degenerate = pca.degenerate;
    mp.planarity = pca.planarity;
    mp.normal = pca.degenerate ? Eigen::Vector3d::UnitZ() : orient_normal(pca.normal, points[i], opt.interior_point);
  }
  return EnvironmentMap(std::move(mps), opt.voxel_size);
}

/// Augmented map as PLY: x y z nx ny nz planarity prior_sigma.
inline ply::VertexTable map_to_ply(const EnvironmentMap& map) {
  ply::VertexTable t;
  for (const char* n : {"x", "y", "z", "nx", "ny", "nz", "planarity", "prior_sigma"}) {
    t.add_column(n).reserve(map.size());
  }
  for (const auto& p : map.points()) {
    for (int j = 0; j < 3; ++j) t.columns[j].push_back(p.position(j));
    for (int j = 0; j < 3; ++j) t.columns[3 + j].push_back(p.normal(j));
    t.columns[6].push_back(p.planarity);
    t.columns[7].push_back(std::sqrt(p.prior_covariance.trace() / 3.0));
  }
  return t;
}

inline std::vector<Eigen::Vector3d> ply_positions(const ply::VertexTable& t) {
  const auto& x = t.column("x");
  const auto& y = t.column("y");
  const auto& z = t.column("z");
  std::vector<Eigen::Vector3d> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i], y[i], z[i]};
  return out;
}

/// Loads a map. Files carrying normals and planarity are used as-is; plain
/// clouds are run through build_map.
inline EnvironmentMap map_from_ply(const ply::VertexTable& t, const MapBuildOptions& opt = {}) {
  const auto pos = ply_positions(t);
  if (!(t.has("nx") && t.has("ny") && t.has("nz") && t.has("planarity"))) {
    return build_map(pos, opt);
  }
  const auto& nx = t.column("nx");
  const auto& ny = t.column("ny");
  const auto& nz = t.column("nz");
  const auto& pl = t.column("planarity");
  const std::vector<double>* sig = t.has("prior_sigma") ? &t.column("prior_sigma") : nullptr;
  std::vector<MapPoint> mps(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    MapPoint& mp = mps[i];
    mp.position = pos[i];
    mp.normal = Eigen::Vector3d(nx[i], ny[i], nz[i]).normalized();
    mp.planarity = std::clamp(pl[i], 0.0, 1.0);
    const double s = sig ? (*sig)[i] : opt.prior_sigma;
    mp.prior_covariance = Eigen::Matrix3d::Identity() * s * s;
  }
  return EnvironmentMap(std::move(mps), opt.voxel_size);
}

}  // namespace crloc
