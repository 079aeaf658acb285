#pragma once

// Triangle meshes, OBJ/STL loading and ray casting (Moller-Trumbore, with a
// median-split BVH and a brute-force reference).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cctype>
#include <iterator>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc::sim {

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triangle {
  Eigen::Vector3d a, b, c;

  Eigen::Vector3d cross() const { return (b - a).cross(c - a); }
  double area() const { return 0.5 * cross().norm(); }
  Eigen::Vector3d normal() const { return cross().normalized(); }
  Eigen::Vector3d centroid() const { return (a + b + c) / 3.0; }
};

struct Mesh {
  std::string label;
  std::vector<Triangle> triangles;
};

/// Axis-aligned box with outward-facing triangles.
inline Mesh make_box(const std::string& label, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  if (!((hi.array() > lo.array()).all())) {
    throw MeshError("make_box: empty extent for '" + label + "'");
  }
  auto v = [&](int i) {
    return Eigen::Vector3d((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  };
  // Quads as corner indices, counter-clockwise seen from outside.
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  Mesh m{label, {}};
  for (const auto& q : quads) {
    m.triangles.push_back({v(q[0]), v(q[1]), v(q[2])});
    m.triangles.push_back({v(q[0]), v(q[2]), v(q[3])});
  }
  return m;
}

inline Mesh read_obj(std::istream& in, const std::string& label) {
  std::vector<Eigen::Vector3d> verts;
  Mesh m{label, {}};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw MeshError("obj: bad vertex line");
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(verts.size()) + i);
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        for (int j : {idx[0], idx[k], idx[k + 1]}) {
          if (j < 0 || j >= static_cast<int>(verts.size())) throw MeshError("obj: face index out of range");
        }
        m.triangles.push_back({verts[idx[0]], verts[idx[k]], verts[idx[k + 1]]});
      }
    }
  }
  return m;
}

inline Mesh read_stl(std::istream& in, const std::string& label) {
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Mesh m{label, {}};
  const bool maybe_ascii = content.rfind("solid", 0) == 0 && content.find("facet") != std::string::npos;
  if (maybe_ascii) {
    std::istringstream ss(content);
    std::string tok;
    std::vector<Eigen::Vector3d> v;
    while (ss >> tok) {
      if (tok == "vertex") {
        Eigen::Vector3d p;
        ss >> p.x() >> p.y() >> p.z();
        v.push_back(p);
        if (v.size() == 3) {
          m.triangles.push_back({v[0], v[1], v[2]});
          v.clear();
        }
      }
    }
    return m;
  }
  if (content.size() < 84) throw MeshError("stl: truncated header");
  std::uint32_t n = 0;
  std::memcpy(&n, content.data() + 80, 4);
  if (content.size() < 84 + static_cast<std::size_t>(n) * 50) throw MeshError("stl: truncated body");
  for (std::uint32_t i = 0; i < n; ++i) {
    const char* rec = content.data() + 84 + static_cast<std::size_t>(i) * 50 + 12;
    float f[9];
    std::memcpy(f, rec, sizeof(f));
    m.triangles.push_back({{f[0], f[1], f[2]}, {f[3], f[4], f[5]}, {f[6], f[7], f[8]}});
  }
  return m;
}

inline Mesh read_mesh(const std::string& path, const std::string& label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MeshError("cannot open mesh '" + path + "'");
  std::string ext = path.substr(path.find_last_of('.') + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "obj") return read_obj(in, label);
  if (ext == "stl") return read_stl(in, label);
  throw MeshError("unsupported mesh format '" + ext + "'");
}

struct RayHit {
  double distance = 0.0;
  int triangle = -1;
};

/// Moller-Trumbore; double-sided. Returns the ray parameter for unit dir.
inline std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const Triangle& t) {
  constexpr double kEps = 1e-14;
  const Eigen::Vector3d e1 = t.b - t.a;
  const Eigen::Vector3d e2 = t.c - t.a;
  const Eigen::Vector3d pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < kEps) return std::nullopt;
  const double inv = 1.0 / det;
  const Eigen::Vector3d tv = origin - t.a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Eigen::Vector3d qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double d = e2.dot(qv) * inv;
  if (d <= 0.0) return std::nullopt;
  return d;
}

inline std::optional<RayHit> raycast_brute(const std::vector<Triangle>& tris, const Eigen::Vector3d& origin,
                                           const Eigen::Vector3d& dir, double max_range) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < tris.size(); ++i) {
    const auto d = intersect(origin, dir, tris[i]);
    if (d && *d <= max_range && (!best || *d < best->distance)) {
      best = RayHit{*d, static_cast<int>(i)};
    }
  }
  return best;
}

class Bvh {
 public:
  Bvh() = default;
  explicit Bvh(std::vector<Triangle> tris) : tris_(std::move(tris)) {
    order_.resize(tris_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    if (!tris_.empty()) build(0, static_cast<int>(tris_.size()));
  }

  const std::vector<Triangle>& triangles() const { return tris_; }

  std::optional<RayHit> raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double max_range) const {
    std::optional<RayHit> best;
    if (nodes_.empty()) return best;
    const Eigen::Vector3d inv_dir = dir.cwiseInverse();
    double limit = max_range;
    int stack[128];  // median splits keep depth near log2(n)
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& n = nodes_[static_cast<std::size_t>(stack[--top])];
      if (!hit_box(n, origin, inv_dir, limit)) continue;
      if (n.count > 0) {
        for (int i = n.start; i < n.start + n.count; ++i) {
          const int ti = order_[static_cast<std::size_t>(i)];
          const auto d = intersect(origin, dir, tris_[static_cast<std::size_t>(ti)]);
          if (d && *d <= limit && (!best || *d < best->distance || (*d == best->distance && ti < best->triangle))) {
            best = RayHit{*d, ti};
            limit = *d;
          }
        }
      } else {
        stack[top++] = n.left;
        stack[top++] = n.right;
      }
    }
    return best;
  }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    int left = -1, right = -1;
    int start = 0, count = 0;
  };

  static bool hit_box(const Node& n, const Eigen::Vector3d& o, const Eigen::Vector3d& inv, double limit) {
    double t0 = 0.0, t1 = limit;
    for (int a = 0; a < 3; ++a) {
      double tn = (n.lo[a] - o[a]) * inv[a];
      double tf = (n.hi[a] - o[a]) * inv[a];
      if (std::isnan(tn) || std::isnan(tf)) {
        // Ray parallel to the slab and starting on its boundary.
        if (o[a] < n.lo[a] || o[a] > n.hi[a]) return false;
        continue;
      }
      if (tn > tf) std::swap(tn, tf);
      t0 = std::max(t0, tn);
      t1 = std::min(t1, tf * (1.0 + 1e-12) + 1e-12);
      if (t0 > t1) return false;
    }
    return true;
  }

  int build(int start, int count) {
    Node n;
    n.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    n.hi = -n.lo;
    for (int i = start; i < start + count; ++i) {
      const Triangle& t = tris_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
      for (const auto* p : {&t.a, &t.b, &t.c}) {
        n.lo = n.lo.cwiseMin(*p);
        n.hi = n.hi.cwiseMax(*p);
      }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    if (count <= 4) {
      nodes_[static_cast<std::size_t>(id)].start = start;
      nodes_[static_cast<std::size_t>(id)].count = count;
      return id;
    }
    int axis;
    (n.hi - n.lo).maxCoeff(&axis);
    const int mid = start + count / 2;
    std::nth_element(order_.begin() + start, order_.begin() + mid, order_.begin() + start + count,
                     [&](int x, int y) {
                       const double cx = tris_[static_cast<std::size_t>(x)].centroid()[axis];
                       const double cy = tris_[static_cast<std::size_t>(y)].centroid()[axis];
                       return cx < cy || (cx == cy && x < y);
                     });
    const int l = build(start, mid - start);
    const int r = build(mid, start + count - mid);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  std::vector<Triangle> tris_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace crloc::sim
