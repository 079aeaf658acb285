#pragma once

// SE(3)/se(3) machinery shared by every factor.
//
// Twists are ordered (linear; angular). A perturbation δ acts on the
// inertial-to-body transform from the left, T_bi <- exp(δ^) T_bi, which for the
// stored body-to-inertial pose reads T_ib <- T_ib exp(-δ^).

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace crloc {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix46d = Eigen::Matrix<double, 4, 6>;
using Matrix36d = Eigen::Matrix<double, 3, 6>;
using Matrix34d = Eigen::Matrix<double, 3, 4>;
using RowVector6d = Eigen::Matrix<double, 1, 6>;

/// Generalized velocity / strain / perturbation, ordered (linear; angular).
using Twist = Vector6d;
/// Homogeneous point (xyz, w).
using HomogeneousPoint = Eigen::Vector4d;

inline Eigen::Vector3d linear_part(const Twist& xi) { return xi.head<3>(); }
inline Eigen::Vector3d angular_part(const Twist& xi) { return xi.tail<3>(); }

inline Twist make_twist(const Eigen::Vector3d& linear, const Eigen::Vector3d& angular) {
  Twist xi;
  xi << linear, angular;
  return xi;
}

inline HomogeneousPoint homogeneous(const Eigen::Vector3d& p) {
  return HomogeneousPoint(p.x(), p.y(), p.z(), 1.0);
}

/// 3x4 projection removing the homogeneous component.
inline Matrix34d projection() {
  Matrix34d d = Matrix34d::Zero();
  d.leftCols<3>().setIdentity();
  return d;
}

/// Skew-symmetric matrix with wedge(a) * b = a x b.
inline Eigen::Matrix3d wedge(const Eigen::Vector3d& a) {
  Eigen::Matrix3d m;
  m << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return m;
}

inline Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  return Eigen::Vector3d(m(2, 1), m(0, 2), m(1, 0));
}

/// 4x4 Lie-algebra matrix of a twist.
inline Eigen::Matrix4d wedge(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = wedge(Eigen::Vector3d(xi.tail<3>()));
  m.topRightCorner<3, 1>() = xi.head<3>();
  return m;
}

/// Adjoint of the Lie algebra (the "curly hat"): ad(xi) zeta = [xi, zeta].
inline Matrix6d curly_wedge(const Twist& xi) {
  Matrix6d m = Matrix6d::Zero();
  const Eigen::Matrix3d phi = wedge(Eigen::Vector3d(xi.tail<3>()));
  m.topLeftCorner<3, 3>() = phi;
  m.topRightCorner<3, 3>() = wedge(Eigen::Vector3d(xi.head<3>()));
  m.bottomRightCorner<3, 3>() = phi;
  return m;
}

/// [a; b]^odot = [[b I, -a^], [0, 0]], so that xi^ p = p^odot xi.
inline Matrix46d odot(const HomogeneousPoint& p) {
  Matrix46d m = Matrix46d::Zero();
  m.topLeftCorner<3, 3>() = p.w() * Eigen::Matrix3d::Identity();
  m.topRightCorner<3, 3>() = -wedge(Eigen::Vector3d(p.head<3>()));
  return m;
}

namespace detail {

constexpr double kSmallAngle = 1e-8;
constexpr double kTaylorAngle = 1e-4;

}  // namespace detail

inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d k = wedge(phi);
  if (theta < detail::kSmallAngle) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  return Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / (theta * theta)) * k * k;
}

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const Eigen::Vector3d skew_part = vee(r - r.transpose());
  const double theta = std::atan2(0.5 * skew_part.norm(), 0.5 * (r.trace() - 1.0));
  if (theta < detail::kTaylorAngle) {
    // sin(theta)/theta ~ 1 - theta^2/6
    return 0.5 * (1.0 + theta * theta / 6.0) * skew_part;
  }
  if (M_PI - theta > 1e-5) {
    return (theta / (2.0 * std::sin(theta))) * skew_part;
  }
  // Near pi the skew part vanishes; recover the axis from the symmetric part.
  const Eigen::Matrix3d b = 0.25 * (r + r.transpose()) + 0.5 * Eigen::Matrix3d::Identity();
  int i = 0;
  b.diagonal().maxCoeff(&i);
  Eigen::Vector3d axis = b.col(i) / std::sqrt(std::max(b(i, i), 1e-300));
  axis.normalize();
  if (axis.dot(skew_part) < 0.0) {
    axis = -axis;
  }
  return theta * axis;
}

/// Left Jacobian of SO(3).
inline Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d k = wedge(phi);
  if (theta < detail::kTaylorAngle) {
    return Eigen::Matrix3d::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double t2 = theta * theta;
  return Eigen::Matrix3d::Identity() + ((1.0 - std::cos(theta)) / t2) * k +
         ((theta - std::sin(theta)) / (t2 * theta)) * k * k;
}

inline Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d k = wedge(phi);
  double c;
  if (theta < detail::kTaylorAngle) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    c = 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Eigen::Matrix3d::Identity() - 0.5 * k + c * k * k;
}

/// Rigid transform: rotation R (orthonormal, det +1) and translation t.
class Transform {
 public:
  Transform() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  Transform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}
  explicit Transform(const Eigen::Matrix4d& m)
      : rotation_(m.topLeftCorner<3, 3>()), translation_(m.topRightCorner<3, 1>()) {}

  static Transform Identity() { return {}; }
  static Transform Translation(const Eigen::Vector3d& t) {
    return {Eigen::Matrix3d::Identity(), t};
  }
  static Transform Rotation(const Eigen::Matrix3d& r) { return {r, Eigen::Vector3d::Zero()}; }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Transform inverse() const {
    const Eigen::Matrix3d rt = rotation_.transpose();
    return {rt, -rt * translation_};
  }

  Transform operator*(const Transform& other) const {
    return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
  }

  /// Applies to a 3-vector (point) or a homogeneous 4-vector.
  template <typename Derived>
  auto operator*(const Eigen::MatrixBase<Derived>& p) const {
    static_assert(Derived::ColsAtCompileTime == 1, "Transform applies to column vectors");
    if constexpr (Derived::RowsAtCompileTime == 3) {
      return Eigen::Vector3d(rotation_ * p + translation_);
    } else {
      static_assert(Derived::RowsAtCompileTime == 4, "expected a 3- or 4-vector");
      HomogeneousPoint out;
      out.template head<3>() = rotation_ * p.template head<3>() + translation_ * p(3);
      out(3) = p(3);
      return out;
    }
  }

  /// Re-projects the rotation onto SO(3); keeps long update chains orthonormal.
  void normalize() {
    rotation_ = Eigen::Quaterniond(rotation_).normalized().toRotationMatrix();
  }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

namespace detail {

// Q(xi) block of the SE(3) left Jacobian.
inline Eigen::Matrix3d se3_q(const Twist& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  const Eigen::Matrix3d rx = wedge(rho);
  const Eigen::Matrix3d px = wedge(phi);
  const double theta = phi.norm();
  double c1, c2, c3;
  if (theta < 1e-3) {
    const double t2 = theta * theta;
    c1 = 1.0 / 6.0 - t2 / 120.0;
    c2 = 1.0 / 24.0 - t2 / 720.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0;
  } else {
    const double t2 = theta * theta;
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  const Eigen::Matrix3d pr = px * rx;
  const Eigen::Matrix3d rp = rx * px;
  const Eigen::Matrix3d prp = pr * px;
  return 0.5 * rx + c1 * (pr + rp + prp) + c2 * (px * pr + rp * px - 3.0 * prp) +
         c3 * (prp * px + px * prp);
}

}  // namespace detail

inline Transform exp_se3(const Twist& xi) {
  const Eigen::Vector3d phi = xi.tail<3>();
  return {so3_exp(phi), so3_left_jacobian(phi) * xi.head<3>()};
}

/// Inverse of exp_se3 for rotation angles below pi.
inline Twist log_se3(const Transform& t) {
  const Eigen::Vector3d phi = so3_log(t.rotation());
  return make_twist(so3_left_jacobian_inverse(phi) * t.translation(), phi);
}

/// Ad(T) = [[R, t^ R], [0, R]].
inline Matrix6d adjoint(const Transform& t) {
  Matrix6d m = Matrix6d::Zero();
  m.topLeftCorner<3, 3>() = t.rotation();
  m.topRightCorner<3, 3>() = wedge(t.translation()) * t.rotation();
  m.bottomRightCorner<3, 3>() = t.rotation();
  return m;
}

/// Left Jacobian of SE(3): exp((xi + d)^) ~ exp((J d)^) exp(xi^).
inline Matrix6d se3_left_jacobian(const Twist& xi) {
  const Eigen::Matrix3d j = so3_left_jacobian(Eigen::Vector3d(xi.tail<3>()));
  Matrix6d m = Matrix6d::Zero();
  m.topLeftCorner<3, 3>() = j;
  m.bottomRightCorner<3, 3>() = j;
  m.topRightCorner<3, 3>() = detail::se3_q(xi);
  return m;
}

inline Matrix6d se3_left_jacobian_inverse(const Twist& xi) {
  const Eigen::Matrix3d ji = so3_left_jacobian_inverse(Eigen::Vector3d(xi.tail<3>()));
  Matrix6d m = Matrix6d::Zero();
  m.topLeftCorner<3, 3>() = ji;
  m.bottomRightCorner<3, 3>() = ji;
  m.topRightCorner<3, 3>() = -ji * detail::se3_q(xi) * ji;
  return m;
}

inline Matrix6d se3_right_jacobian(const Twist& xi) { return se3_left_jacobian(-xi); }
inline Matrix6d se3_right_jacobian_inverse(const Twist& xi) {
  return se3_left_jacobian_inverse(-xi);
}

/// Geodesic angle between two rotations (radians, in [0, pi]).
inline double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d r = a.transpose() * b;
  const double sin_part = 0.5 * vee(r - r.transpose()).norm();
  const double cos_part = 0.5 * (r.trace() - 1.0);
  return std::atan2(sin_part, cos_part);
}

// Elementary rotations with exact zeros off the rotation plane.
inline Eigen::Matrix3d rot_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}
inline Eigen::Matrix3d rot_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}
inline Eigen::Matrix3d rot_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

}  // namespace crloc
