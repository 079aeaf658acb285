#pragma once

// Residuals, Jacobians and robust weights for the measurement and prior
// factors of the MAP problem.

#include "crloc/envmap.hpp"
#include "crloc/geom.hpp"
#include "crloc/state.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc {

class InvalidMeasurement : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Measurements

/// One range return, expressed through its sensor.
struct ToFMeasurement {
  double distance = 0.0;                                  // d_j (m)
  Eigen::Vector3d ray_direction = Eigen::Vector3d::UnitZ();  // unit, sensor frame
  Transform sensor_extrinsic;                             // sensor -> body
  double arclength = 0.0;
  double timestamp = 0.0;
  int sensor_id = 0;

  /// q_j^b: the return expressed in the body frame.
  Eigen::Vector3d body_point() const { return sensor_extrinsic * (distance * ray_direction); }
};

struct ToFReturn {
  int ray = 0;           // index into the sensor's ray grid
  double distance = 0.0;
  bool valid = true;
};

/// One 8x8 frame from one sensor. All returns share pose, time and extrinsic.
struct ToFScan {
  int sensor_id = 0;
  double timestamp = 0.0;
  double arclength = 0.0;
  Transform extrinsic;
  std::vector<Eigen::Vector3d> rays;  // unit directions, sensor frame
  std::vector<ToFReturn> returns;

  ToFMeasurement measurement(std::size_t i) const {
    const ToFReturn& r = returns.at(i);
    return {r.distance, rays.at(static_cast<std::size_t>(r.ray)), extrinsic, arclength, timestamp, sensor_id};
  }
};

struct GyroMeasurement {
  Eigen::Vector3d angular_rate = Eigen::Vector3d::Zero();  // rad/s, body frame
  double arclength = 0.0;
  double timestamp = 0.0;
  int sensor_id = 0;
  bool stationary = false;
};

struct StrainMeasurement {
  double bending_angle = 0.0;  // theta_j (rad)
  double curvature = 0.0;      // kappa_j (1/m), >= 0
  double arclength = 0.0;
  double timestamp = 0.0;
};

// ---------------------------------------------------------------------------
// Noise

/// Piecewise-linear range-noise coefficient: sigma(d) = c(d) * d.
struct ToFNoiseTable {
  double min_valid = 0.025;
  double knee1 = 0.6;
  double knee2 = 1.2;
  double c_near = 0.014;  // at min_valid
  double c_mid = 0.012;   // at knee1
  double c_far = 0.006;   // at knee2 and beyond

  double sigma(double d) const {
    if (!(d >= min_valid)) {
      throw InvalidMeasurement("tof_sigma: distance " + std::to_string(d) + " m below " +
                               std::to_string(min_valid) + " m is invalid");
    }
    double c;
    if (d < knee1) {
      c = c_near + (c_mid - c_near) * (d - min_valid) / (knee1 - min_valid);
    } else if (d < knee2) {
      c = c_mid + (c_far - c_mid) * (d - knee1) / (knee2 - knee1);
    } else {
      c = c_far;
    }
    return c * d;
  }
};

inline double tof_sigma(double d) { return ToFNoiseTable{}.sigma(d); }

struct NoiseModel {
  ToFNoiseTable tof;
  double tof_extra_sigma = 0.005;  // unmodelled-process inflation (m)
  double gyro_sigma = 0.01;        // rad/s
  double strain_sigma = 0.02;      // isotropic R_strain standard deviation

  /// Scalar R_ToF (the isotropic 3x3 model is R I_3).
  double tof_variance(double d) const {
    const double s = tof.sigma(d);
    return s * s + tof_extra_sigma * tof_extra_sigma;
  }
  Eigen::Matrix3d gyro_covariance() const { return Eigen::Matrix3d::Identity() * gyro_sigma * gyro_sigma; }
  Matrix6d strain_covariance() const { return Matrix6d::Identity() * strain_sigma * strain_sigma; }
};

/// Standard deviations of the shape/motion priors. Consistency sigmas are
/// per unit knot spacing; smoothness sigmas are random-walk intensities.
struct PriorConfig {
  double shape_sigma = 0.02;
  double motion_sigma = 0.05;
  double strain_smoothness_s = 0.1;
  double strain_smoothness_t = 0.1;
  double velocity_smoothness_s = 0.1;
  double velocity_smoothness_t = 0.1;
};

// ---------------------------------------------------------------------------
// Robust weighting

/// IRLS weight of the Cauchy loss: Y^-1 = R^-1 / (1 + e R^-1 e).
inline double cauchy_weight(double e, double r) { return (1.0 / r) / (1.0 + e * e / r); }

/// Cauchy loss whose IRLS weight is cauchy_weight.
inline double cauchy_cost(double e, double r) { return 0.5 * std::log1p(e * e / r); }

// ---------------------------------------------------------------------------
// Point-to-plane (ToF)

struct PointToPlane {
  double error = 0.0;
  RowVector6d jacobian = RowVector6d::Zero();  // w.r.t. δt_bi at the query pose
  Eigen::Vector3d world_point = Eigen::Vector3d::Zero();
};

/// e = alpha n^T D (p - T q);  G = alpha n^T D (T q)^odot Ad(T).
inline PointToPlane point_to_plane(const Transform& pose, const Eigen::Vector3d& q_body, const MapPoint& match) {
  PointToPlane out;
  const HomogeneousPoint p = pose * homogeneous(q_body);
  out.world_point = p.head<3>();
  const Eigen::Vector3d an = match.planarity * match.normal;
  out.error = an.dot(match.position - out.world_point);
  out.jacobian = an.transpose() * projection() * odot(p) * adjoint(pose);
  return out;
}

struct ToFResidual {
  double error = 0.0;
  double alpha = 0.0;
  MapPoint match;
  Eigen::Vector3d world_point = Eigen::Vector3d::Zero();
};

/// Matches the return against the map and evaluates the point-to-plane error.
/// Returns nullopt when no map point lies within max_radius.
inline std::optional<ToFResidual> tof_residual(const StateGrid& grid, const ToFMeasurement& m,
                                               const EnvironmentMap& map, double max_radius = 0.1,
                                               const ToFNoiseTable& table = {}) {
  if (!(m.distance >= table.min_valid)) {
    throw InvalidMeasurement("tof_residual: invalid return");
  }
  const Transform pose = interpolate_pose(grid, m.arclength, m.timestamp);
  const Eigen::Vector3d world = pose * m.body_point();
  const auto match = map.query_nn(world, max_radius);
  if (!match) {
    return std::nullopt;
  }
  const PointToPlane pp = point_to_plane(pose, m.body_point(), *match);
  return ToFResidual{pp.error, match->planarity, *match, pp.world_point};
}

struct ToFJacobian {
  RowVector6d g = RowVector6d::Zero();  // G_j at (s, t)
  GridCell cell;
  std::array<RowVector6d, 4> corners{};  // G_j chained to the four cell corners
};

inline ToFJacobian tof_jacobian(const StateGrid& grid, const ToFMeasurement& m, const MapPoint& match) {
  const PoseInterpolation interp = interpolate_pose_with_jacobians(grid, m.arclength, m.timestamp);
  ToFJacobian out;
  out.cell = interp.cell;
  out.g = point_to_plane(interp.pose, m.body_point(), match).jacobian;
  for (int i = 0; i < 4; ++i) {
    out.corners[i] = out.g * interp.jacobians[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gyroscope and strain

/// Angular part of the interpolated velocity minus the bias-corrected rate.
inline Eigen::Vector3d gyro_residual(const StateGrid& grid, const GyroMeasurement& m,
                                     const Eigen::Vector3d& bias) {
  const Twist w = interpolate_velocity(grid, m.arclength, m.timestamp);
  return w.tail<3>() - (m.angular_rate - bias);
}

/// eps~ = Ad(rot_x(theta)) [1,0,0, 0,0,kappa]^T.
inline Twist strain_from_angle_curvature(double theta, double kappa) {
  Twist base = Twist::Zero();
  base(0) = 1.0;
  base(5) = kappa;
  return adjoint(Transform::Rotation(rot_x(theta))) * base;
}

inline Twist strain_residual(const StateGrid& grid, const StrainMeasurement& m) {
  return interpolate_strain(grid, m.arclength, m.timestamp) -
         strain_from_angle_curvature(m.bending_angle, m.curvature);
}

/// J = 1/2 e^T R^-1 e.
inline double strain_cost(const Twist& e, const Matrix6d& r_strain) {
  return 0.5 * e.dot(r_strain.ldlt().solve(e));
}

// ---------------------------------------------------------------------------
// Generic linearized factor

struct JacobianBlock {
  NodeIndex node;
  VarBlock block = VarBlock::kPose;
  Eigen::MatrixXd jacobian;  // rows = residual dimension, 6 columns
};

struct LinearizedFactor {
  Eigen::VectorXd residual;
  Eigen::MatrixXd information;
  std::vector<JacobianBlock> blocks;

  double cost() const { return 0.5 * residual.dot(information * residual); }
};

// ---------------------------------------------------------------------------
// Priors

enum class PriorKind {
  kArclengthConsistency,  // T(s_{n+1}) vs T(s_n) exp(ds * eps)
  kTimeConsistency,       // T(t_{k+1}) vs T(t_k) exp(dt * varpi)
  kStrainSmoothnessS,
  kStrainSmoothnessT,
  kVelocitySmoothnessS,
  kVelocitySmoothnessT,
  kClampedBase,           // realized by removing the base pose from the free variables
};

struct PriorFactor {
  PriorKind kind = PriorKind::kClampedBase;
  NodeIndex a;
  NodeIndex b;
};

inline const char* to_string(PriorKind k) {
  switch (k) {
    case PriorKind::kArclengthConsistency: return "arclength_consistency";
    case PriorKind::kTimeConsistency: return "time_consistency";
    case PriorKind::kStrainSmoothnessS: return "strain_smoothness_s";
    case PriorKind::kStrainSmoothnessT: return "strain_smoothness_t";
    case PriorKind::kVelocitySmoothnessS: return "velocity_smoothness_s";
    case PriorKind::kVelocitySmoothnessT: return "velocity_smoothness_t";
    case PriorKind::kClampedBase: return "clamped_base";
  }
  return "?";
}

/// Enumerates the prior factors of a grid. Factors whose variables are all
/// clamped (base-to-base time consistency, base velocity smoothness) are omitted.
inline std::vector<PriorFactor> prior_factors(const StateGrid& grid) {
  std::vector<PriorFactor> out;
  const int ns = grid.num_arclengths();
  const int nt = grid.num_times();
  for (int k = 0; k < nt; ++k) {
    out.push_back({PriorKind::kClampedBase, {0, k}, {0, k}});
    for (int n = 0; n + 1 < ns; ++n) {
      out.push_back({PriorKind::kArclengthConsistency, {n, k}, {n + 1, k}});
      out.push_back({PriorKind::kStrainSmoothnessS, {n, k}, {n + 1, k}});
      out.push_back({PriorKind::kVelocitySmoothnessS, {n, k}, {n + 1, k}});
    }
    if (k + 1 < nt) {
      for (int n = 0; n < ns; ++n) {
        out.push_back({PriorKind::kStrainSmoothnessT, {n, k}, {n, k + 1}});
        if (n > 0) {
          out.push_back({PriorKind::kTimeConsistency, {n, k}, {n, k + 1}});
          out.push_back({PriorKind::kVelocitySmoothnessT, {n, k}, {n, k + 1}});
        }
      }
    }
  }
  return out;
}

namespace detail {

// r = log(T_b T_a^-1 exp(h xi)) on inertial-to-body transforms, with
// xi = (xi_a + xi_b) / 2 (trapezoidal rule).
inline LinearizedFactor consistency_factor(const StateGrid& grid, NodeIndex a, NodeIndex b, double h,
                                           const Twist& xi_a, const Twist& xi_b, VarBlock rate_block,
                                           double sigma) {
  const Transform ta = grid.node(a).pose.inverse();
  const Transform tb = grid.node(b).pose.inverse();
  const Twist xi = 0.5 * (xi_a + xi_b);
  const Transform rel = tb * ta.inverse();
  const Transform e = rel * exp_se3(h * xi);
  const Twist r = log_se3(e);
  const Matrix6d jl_inv = se3_left_jacobian_inverse(r);
  const Matrix6d d_rate = 0.5 * h * jl_inv * adjoint(e) * se3_right_jacobian(h * xi);

  LinearizedFactor f;
  f.residual = r;
  f.information = Matrix6d::Identity() / (sigma * sigma * h * h);
  f.blocks.push_back({b, VarBlock::kPose, jl_inv});
  f.blocks.push_back({a, VarBlock::kPose, -jl_inv * adjoint(rel)});
  f.blocks.push_back({a, rate_block, d_rate});
  f.blocks.push_back({b, rate_block, d_rate});
  return f;
}

inline LinearizedFactor difference_factor(const Twist& xa, const Twist& xb, NodeIndex a, NodeIndex b,
                                          VarBlock block, double variance) {
  LinearizedFactor f;
  f.residual = xb - xa;
  f.information = Matrix6d::Identity() / variance;
  f.blocks.push_back({b, block, Matrix6d::Identity()});
  f.blocks.push_back({a, block, -Matrix6d::Identity()});
  return f;
}

}  // namespace detail

/// Residual, information and Jacobian blocks of a prior factor. Blocks may
/// reference clamped variables; the solver drops those.
inline LinearizedFactor linearize(const StateGrid& grid, const PriorFactor& p, const PriorConfig& cfg) {
  const StateNode& na = grid.node(p.a);
  const StateNode& nb = grid.node(p.b);
  switch (p.kind) {
    case PriorKind::kArclengthConsistency: {
      const double h = grid.arclengths()[p.b.n] - grid.arclengths()[p.a.n];
      return detail::consistency_factor(grid, p.a, p.b, h, na.strain, nb.strain, VarBlock::kStrain,
                                        cfg.shape_sigma);
    }
    case PriorKind::kTimeConsistency: {
      const double h = grid.times()[p.b.k] - grid.times()[p.a.k];
      return detail::consistency_factor(grid, p.a, p.b, h, na.velocity, nb.velocity, VarBlock::kVelocity,
                                        cfg.motion_sigma);
    }
    case PriorKind::kStrainSmoothnessS: {
      const double h = grid.arclengths()[p.b.n] - grid.arclengths()[p.a.n];
      const double s = cfg.strain_smoothness_s;
      return detail::difference_factor(na.strain, nb.strain, p.a, p.b, VarBlock::kStrain, s * s * h);
    }
    case PriorKind::kStrainSmoothnessT: {
      const double h = grid.times()[p.b.k] - grid.times()[p.a.k];
      const double s = cfg.strain_smoothness_t;
      return detail::difference_factor(na.strain, nb.strain, p.a, p.b, VarBlock::kStrain, s * s * h);
    }
    case PriorKind::kVelocitySmoothnessS: {
      const double h = grid.arclengths()[p.b.n] - grid.arclengths()[p.a.n];
      const double s = cfg.velocity_smoothness_s;
      return detail::difference_factor(na.velocity, nb.velocity, p.a, p.b, VarBlock::kVelocity, s * s * h);
    }
    case PriorKind::kVelocitySmoothnessT: {
      const double h = grid.times()[p.b.k] - grid.times()[p.a.k];
      const double s = cfg.velocity_smoothness_t;
      return detail::difference_factor(na.velocity, nb.velocity, p.a, p.b, VarBlock::kVelocity, s * s * h);
    }
    case PriorKind::kClampedBase: {
      LinearizedFactor f;
      f.residual = log_se3(grid.base_pose().inverse() * na.pose);
      f.information = Matrix6d::Identity();
      return f;
    }
  }
  return {};
}

}  // namespace crloc
