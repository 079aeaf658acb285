#pragma once

// Discretized continuum-robot state on a time x arclength lattice, plus the
// continuous interpolation used to query it anywhere inside the lattice.

#include "crloc/geom.hpp"

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc {

using Matrix18d = Eigen::Matrix<double, 18, 18>;

class QueryOutOfBounds : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Straight, unstretched backbone strain: (1,0,0, 0,0,0).
inline Twist home_strain() {
  Twist e = Twist::Zero();
  e(0) = 1.0;
  return e;
}

struct StateNode {
  Transform pose;  // T_ib(s_n, t_k)
  Twist strain = home_strain();
  Twist velocity = Twist::Zero();
  // Ordering [pose, strain, velocity]; pose block is the covariance of δt_bi.
  Matrix18d covariance = Matrix18d::Zero();

  Matrix6d pose_covariance() const { return covariance.topLeftCorner<6, 6>(); }
};

struct NodeIndex {
  int n = 0;  // arclength knot
  int k = 0;  // time knot
  friend bool operator==(const NodeIndex& a, const NodeIndex& b) { return a.n == b.n && a.k == b.k; }
};

enum class VarBlock { kPose = 0, kStrain = 1, kVelocity = 2 };

/// Estimation lattice. Node (0, k) is the clamped base: its pose equals
/// base_pose and its velocity is zero at every time.
class StateGrid {
 public:
  StateGrid() = default;

  /// Straight home shape along the base x axis, at rest.
  StateGrid(std::vector<double> arclengths, std::vector<double> times, const Transform& base_pose)
      : arclengths_(std::move(arclengths)), times_(std::move(times)), base_pose_(base_pose) {
    check_increasing(arclengths_, "arclengths");
    check_increasing(times_, "times");
    if (arclengths_.empty() || times_.empty()) {
      throw std::invalid_argument("StateGrid needs at least one arclength and one time knot");
    }
    columns_.assign(times_.size(), home_column());
  }

  int num_arclengths() const { return static_cast<int>(arclengths_.size()); }
  int num_times() const { return static_cast<int>(times_.size()); }
  int num_nodes() const { return num_arclengths() * num_times(); }

  const std::vector<double>& arclengths() const { return arclengths_; }
  const std::vector<double>& times() const { return times_; }
  const Transform& base_pose() const { return base_pose_; }

  StateNode& node(int n, int k) { return columns_.at(k).at(n); }
  const StateNode& node(int n, int k) const { return columns_.at(k).at(n); }
  StateNode& node(NodeIndex i) { return node(i.n, i.k); }
  const StateNode& node(NodeIndex i) const { return node(i.n, i.k); }

  const std::vector<StateNode>& column(int k) const { return columns_.at(k); }
  std::vector<StateNode>& column(int k) { return columns_.at(k); }

  /// Nodes of a straight robot at rest.
  std::vector<StateNode> home_column() const {
    std::vector<StateNode> col(arclengths_.size());
    for (std::size_t n = 0; n < arclengths_.size(); ++n) {
      col[n].pose = base_pose_ * exp_se3(arclengths_[n] * home_strain());
    }
    return col;
  }

  void append_column(double time, std::vector<StateNode> nodes) {
    if (!times_.empty() && time <= times_.back()) {
      throw std::invalid_argument("append_column: time must exceed the last knot");
    }
    if (nodes.size() != arclengths_.size()) {
      throw DimensionMismatch("append_column: wrong node count");
    }
    nodes[0].pose = base_pose_;
    nodes[0].velocity.setZero();
    times_.push_back(time);
    columns_.push_back(std::move(nodes));
  }

  void drop_front_column() {
    if (times_.empty()) {
      return;
    }
    times_.erase(times_.begin());
    columns_.erase(columns_.begin());
  }

 private:
  static void check_increasing(const std::vector<double>& v, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (!(v[i] > v[i - 1])) {
        throw std::invalid_argument(std::string("StateGrid: ") + what + " must be strictly increasing");
      }
    }
  }

  std::vector<double> arclengths_;
  std::vector<double> times_;
  std::vector<std::vector<StateNode>> columns_;
  Transform base_pose_;
};

/// Map from node blocks to free-variable indices. The base node keeps its
/// strain free; its pose and velocity are clamped.
class VariableLayout {
 public:
  VariableLayout() = default;
  explicit VariableLayout(const StateGrid& grid)
      : num_arclengths_(grid.num_arclengths()), num_times_(grid.num_times()) {
    index_.assign(static_cast<std::size_t>(num_arclengths_ * num_times_ * 3), -1);
    int offset = 0;
    for (int k = 0; k < num_times_; ++k) {
      column_offset_.push_back(offset);
      for (int n = 0; n < num_arclengths_; ++n) {
        for (int b = 0; b < 3; ++b) {
          const bool clamped = n == 0 && b != static_cast<int>(VarBlock::kStrain);
          if (!clamped) {
            index_[slot(n, k, b)] = offset;
            offset += 6;
          }
        }
      }
      column_size_.push_back(offset - column_offset_.back());
    }
    size_ = offset;
  }

  int index(int n, int k, VarBlock b) const { return index_[slot(n, k, static_cast<int>(b))]; }
  int index(NodeIndex i, VarBlock b) const { return index(i.n, i.k, b); }
  int size() const { return size_; }
  int num_columns() const { return num_times_; }
  int column_offset(int k) const { return column_offset_[k]; }
  int column_size(int k) const { return column_size_[k]; }
  int column_of(int var) const {
    const auto it = std::upper_bound(column_offset_.begin(), column_offset_.end(), var);
    return static_cast<int>(it - column_offset_.begin()) - 1;
  }

 private:
  std::size_t slot(int n, int k, int b) const {
    return static_cast<std::size_t>((k * num_arclengths_ + n) * 3 + b);
  }

  int num_arclengths_ = 0;
  int num_times_ = 0;
  int size_ = 0;
  std::vector<int> index_;
  std::vector<int> column_offset_;
  std::vector<int> column_size_;
};

/// Cell containing (s, t) with fractional coordinates u (arclength), v (time).
/// Degenerate axes (a single knot) repeat the knot with zero fraction.
struct GridCell {
  int n0 = 0, n1 = 0, k0 = 0, k1 = 0;
  double u = 0.0, v = 0.0;

  /// Corners ordered (n0,k0), (n1,k0), (n0,k1), (n1,k1).
  std::array<NodeIndex, 4> corners() const {
    return {NodeIndex{n0, k0}, NodeIndex{n1, k0}, NodeIndex{n0, k1}, NodeIndex{n1, k1}};
  }
  std::array<double, 4> weights() const {
    return {(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v};
  }
};

namespace detail {

inline void locate_axis(const std::vector<double>& knots, double x, int& i0, int& i1, double& f,
                        const char* what) {
  constexpr double kSlack = 1e-12;
  const double lo = knots.front();
  const double hi = knots.back();
  if (!(x >= lo - kSlack && x <= hi + kSlack)) {
    throw QueryOutOfBounds(std::string("query ") + what + "=" + std::to_string(x) + " outside [" +
                           std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (knots.size() == 1) {
    i0 = i1 = 0;
    f = 0.0;
    return;
  }
  const auto it = std::upper_bound(knots.begin(), knots.end(), x);
  int i = static_cast<int>(it - knots.begin()) - 1;
  i = std::clamp(i, 0, static_cast<int>(knots.size()) - 2);
  i0 = i;
  i1 = i + 1;
  f = std::clamp((x - knots[i0]) / (knots[i1] - knots[i0]), 0.0, 1.0);
}

// Geodesic between inertial-to-body transforms: exp(w log(Y X^-1)) X, with
// Jacobians of the result's left perturbation w.r.t. those of X and Y.
struct Geodesic {
  Transform value;
  Matrix6d d_x;
  Matrix6d d_y;
};

inline Geodesic geodesic(const Transform& x, const Transform& y, double w) {
  const Twist xi = log_se3(y * x.inverse());
  const Twist wxi = w * xi;
  const Transform step = exp_se3(wxi);
  const Matrix6d jl_w = se3_left_jacobian(wxi);
  Geodesic g;
  g.value = step * x;
  g.d_y = w * jl_w * se3_left_jacobian_inverse(xi);
  g.d_x = adjoint(step) - w * jl_w * se3_right_jacobian_inverse(xi);
  return g;
}

}  // namespace detail

inline GridCell locate(const StateGrid& grid, double s, double t) {
  GridCell c;
  detail::locate_axis(grid.arclengths(), s, c.n0, c.n1, c.u, "s");
  detail::locate_axis(grid.times(), t, c.k0, c.k1, c.v, "t");
  return c;
}

/// Pose at (s, t) with the Jacobians of its δt_bi w.r.t. the four corner nodes.
struct PoseInterpolation {
  Transform pose;  // T_ib(s, t)
  GridCell cell;
  std::array<Matrix6d, 4> jacobians;
};

/// Two-stage geodesic blend: along arclength at both bounding times, then
/// along time. Reproduces knots exactly and is continuous across cell edges.
inline PoseInterpolation interpolate_pose_with_jacobians(const StateGrid& grid, double s, double t) {
  PoseInterpolation out;
  out.cell = locate(grid, s, t);
  const GridCell& c = out.cell;
  const Transform t00 = grid.node(c.n0, c.k0).pose.inverse();
  const Transform t10 = grid.node(c.n1, c.k0).pose.inverse();
  const Transform t01 = grid.node(c.n0, c.k1).pose.inverse();
  const Transform t11 = grid.node(c.n1, c.k1).pose.inverse();
  const detail::Geodesic a = detail::geodesic(t00, t10, c.u);
  const detail::Geodesic b = detail::geodesic(t01, t11, c.u);
  const detail::Geodesic g = detail::geodesic(a.value, b.value, c.v);
  out.pose = g.value.inverse();
  out.jacobians[0] = g.d_x * a.d_x;
  out.jacobians[1] = g.d_x * a.d_y;
  out.jacobians[2] = g.d_y * b.d_x;
  out.jacobians[3] = g.d_y * b.d_y;
  return out;
}

inline Transform interpolate_pose(const StateGrid& grid, double s, double t) {
  const GridCell c = locate(grid, s, t);
  const Transform t00 = grid.node(c.n0, c.k0).pose;
  const Transform t10 = grid.node(c.n1, c.k0).pose;
  const Transform t01 = grid.node(c.n0, c.k1).pose;
  const Transform t11 = grid.node(c.n1, c.k1).pose;
  // Same blend as above, written on T_ib: X exp(w log(X^-1 Y)).
  auto geo = [](const Transform& x, const Transform& y, double w) {
    return x * exp_se3(w * log_se3(x.inverse() * y));
  };
  return geo(geo(t00, t10, c.u), geo(t01, t11, c.u), c.v);
}

/// Bilinear blend of a per-node twist field.
template <typename Field>
Twist interpolate_twist(const StateGrid& grid, const GridCell& c, Field field) {
  const auto nodes = c.corners();
  const auto w = c.weights();
  Twist out = Twist::Zero();
  for (int i = 0; i < 4; ++i) {
    out += w[i] * field(grid.node(nodes[i]));
  }
  return out;
}

inline Twist interpolate_strain(const StateGrid& grid, double s, double t) {
  return interpolate_twist(grid, locate(grid, s, t), [](const StateNode& x) { return x.strain; });
}

inline Twist interpolate_velocity(const StateGrid& grid, double s, double t) {
  return interpolate_twist(grid, locate(grid, s, t), [](const StateNode& x) { return x.velocity; });
}

/// Nearest-knot node, used where a per-node quantity (covariance) is needed
/// off the lattice.
inline const StateNode& nearest_node(const StateGrid& grid, double s, double t) {
  const GridCell c = locate(grid, s, t);
  return grid.node(c.u < 0.5 ? c.n0 : c.n1, c.v < 0.5 ? c.k0 : c.k1);
}

/// pose <- pose exp(-δ^) (i.e. T_bi <- exp(δ^) T_bi); strain and velocity additive.
inline StateGrid apply_update(const StateGrid& grid, const VariableLayout& layout,
                              const Eigen::VectorXd& delta) {
  if (delta.size() != layout.size()) {
    throw DimensionMismatch("apply_update: delta has " + std::to_string(delta.size()) +
                            " entries, layout expects " + std::to_string(layout.size()));
  }
  StateGrid out = grid;
  for (int k = 0; k < grid.num_times(); ++k) {
    for (int n = 0; n < grid.num_arclengths(); ++n) {
      StateNode& node = out.node(n, k);
      if (const int i = layout.index(n, k, VarBlock::kPose); i >= 0) {
        const Twist d = delta.segment<6>(i);
        if (!d.isZero(0.0)) {
          node.pose = node.pose * exp_se3(-d);
          node.pose.normalize();
        }
      }
      if (const int i = layout.index(n, k, VarBlock::kStrain); i >= 0) {
        node.strain += delta.segment<6>(i);
      }
      if (const int i = layout.index(n, k, VarBlock::kVelocity); i >= 0) {
        node.velocity += delta.segment<6>(i);
      }
    }
  }
  return out;
}

inline StateGrid apply_update(const StateGrid& grid, const Eigen::VectorXd& delta) {
  return apply_update(grid, VariableLayout(grid), delta);
}

}  // namespace crloc
