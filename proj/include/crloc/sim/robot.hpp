#pragma once

// Pseudo-rigid-body continuum robot: a chain of short rigid links joined by
// bending-only spherical joints, with a continuous backbone obtained by
// joining link midpoints with constant-curvature arcs.

#include "crloc/geom.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace crloc::sim {

struct RobotGeometry {
  double length = 0.5;
  double link_length = 0.01;
  Transform base = Transform(rot_y(M_PI / 2.0), Eigen::Vector3d(0.0, 0.0, 0.95));
  std::vector<double> ring_stations = {0.5 / 3.0, 1.0 / 3.0, 0.5};
  double ring_offset = M_PI / 3.0;     // axial rotation between consecutive rings
  double ring_radius = 0.03;           // radial sensor mount offset
  int sensors_per_ring = 3;
  bool tip_sensor = true;

  int link_count() const { return static_cast<int>(std::lround(length / link_length)); }
};

/// Bending field: angular strain (y, z components, 1/m) at arclength s, time t.
using BendingField = std::function<Eigen::Vector2d(double s, double t)>;

/// Optional base trajectory; replaces the fixed geometry base when set.
using BaseMotion = std::function<Transform(double t)>;

class SimRobot {
 public:
  SimRobot(RobotGeometry geometry, BendingField bending, BaseMotion base_motion = {})
      : geo_(std::move(geometry)), bending_(std::move(bending)), base_motion_(std::move(base_motion)) {
    if (!(geo_.link_length > 0.0) || geo_.link_count() < 1 ||
        std::abs(geo_.link_count() * geo_.link_length - geo_.length) > 1e-9) {
      throw std::invalid_argument("SimRobot: length must be a whole number of links");
    }
    for (double s : geo_.ring_stations) {
      if (s < 0.0 || s > geo_.length + 1e-12) throw std::invalid_argument("SimRobot: ring station off the robot");
    }
  }

  const RobotGeometry& geometry() const { return geo_; }
  double length() const { return geo_.length; }
  int link_count() const { return geo_.link_count(); }
  Transform base(double t) const { return base_motion_ ? base_motion_(t) : geo_.base; }

  /// Rotation vector of joint j (1 <= j < link_count), between links j-1 and j.
  /// Joints sample the bending field at their own arclength, so bending is
  /// perpendicular to the backbone axis.
  Eigen::Vector3d joint(int j, double t) const {
    const Eigen::Vector2d w = bending_(j * geo_.link_length, t);
    return Eigen::Vector3d(0.0, w.x(), w.y()) * geo_.link_length;
  }

  /// Frame at the proximal end of link i by rigid forward kinematics.
  Transform link_frame(int i, double t) const {
    Transform f = base(t);
    const Transform step = Transform::Translation(Eigen::Vector3d(geo_.link_length, 0.0, 0.0));
    for (int j = 1; j <= i; ++j) {
      f = f * step * Transform::Rotation(so3_exp(joint(j, t)));
    }
    return f;
  }

  Transform link_midpoint(int i, double t) const {
    return link_frame(i, t) * Transform::Translation(Eigen::Vector3d(0.5 * geo_.link_length, 0.0, 0.0));
  }

  /// Backbone strain at s: straight half links at both ends, constant-strain
  /// arcs between consecutive link midpoints. The arc stretch makes its end
  /// land exactly on the next midpoint.
  Twist strain_at(double s, double t) const {
    const auto [seg, u] = segment(s);
    (void)u;
    Twist e = Twist::Zero();
    e(0) = 1.0;
    if (seg <= 0 || seg >= link_count()) return e;
    const Eigen::Vector3d phi = joint(seg, t);
    const double th = phi.norm();
    e(0) = th < 1e-8 ? 1.0 - th * th / 12.0 : (0.5 * th) / std::tan(0.5 * th);
    e.tail<3>() = phi / geo_.link_length;
    return e;
  }

  Transform pose_at(double s, double t) const {
    if (s < -1e-12 || s > geo_.length + 1e-12) throw std::out_of_range("SimRobot::pose_at: s off the robot");
    const auto [seg, u] = segment(s);
    if (seg <= 0) {
      return base(t) * Transform::Translation(Eigen::Vector3d(s, 0.0, 0.0));
    }
    const Transform start = link_midpoint(seg - 1, t);
    if (seg >= link_count()) {
      return start * Transform::Translation(Eigen::Vector3d(u, 0.0, 0.0));
    }
    return start * exp_se3(u * strain_at(s, t));
  }

  /// (bending angle, curvature) at s, in the convention
  /// strain angular part = (0, -kappa sin theta, kappa cos theta).
  std::pair<double, double> bending_at(double s, double t) const {
    const Twist e = strain_at(s, t);
    const double kappa = e.tail<2>().norm();
    const double theta = kappa > 0.0 ? std::atan2(-e(4), e(5)) : 0.0;
    return {theta, kappa};
  }

  /// Body angular velocity at s by central differencing over dt.
  Eigen::Vector3d angular_velocity(double s, double t, double dt) const {
    const Eigen::Matrix3d r0 = pose_at(s, t - 0.5 * dt).rotation();
    const Eigen::Matrix3d r1 = pose_at(s, t + 0.5 * dt).rotation();
    return so3_log(r0.transpose() * r1) / dt;
  }

 private:
  // Segment 0 is the first half link; segment i (1..M-1) is the arc from the
  // midpoint of link i-1 to that of link i; segment M is the last half link.
  std::pair<int, double> segment(double s) const {
    const double l = geo_.link_length;
    if (s < 0.5 * l) return {0, s};
    const int m = link_count();
    int i = static_cast<int>(std::floor((s - 0.5 * l) / l)) + 1;
    if (i >= m) return {m, s - (m - 0.5) * l};
    return {i, s - (i - 0.5) * l};
  }

  RobotGeometry geo_;
  BendingField bending_;
  BaseMotion base_motion_;
};

/// Smooth bending trajectory: stationary until `still_time`, then ramps in a
/// sum of sinusoids whose amplitude varies linearly along the robot.
struct TrajectoryParams {
  double still_time = 1.0;
  double ramp_time = 1.0;
  Eigen::Vector2d amplitude_base{1.0, 1.0};  // 1/m at s = 0
  Eigen::Vector2d amplitude_tip{1.0, 1.0};   // 1/m at s = length
  Eigen::Vector2d frequency{0.15, 0.2};      // Hz
  Eigen::Vector2d phase{0.0, 0.0};           // rad
};

inline BendingField make_bending_field(const TrajectoryParams& p, double length) {
  return [p, length](double s, double t) {
    const double x = std::clamp((t - p.still_time) / p.ramp_time, 0.0, 1.0);
    const double ramp = x * x * (3.0 - 2.0 * x);
    if (ramp == 0.0) return Eigen::Vector2d::Zero().eval();
    const double tau = t - p.still_time;
    const double f = s / length;
    Eigen::Vector2d w;
    for (int a = 0; a < 2; ++a) {
      const double amp = (1.0 - f) * p.amplitude_base[a] + f * p.amplitude_tip[a];
      // Starts at zero so the ramp is smooth.
      w[a] = amp * (std::sin(2.0 * M_PI * p.frequency[a] * tau + p.phase[a]) - std::sin(p.phase[a]));
    }
    return (ramp * w).eval();
  };
}

}  // namespace crloc::sim
