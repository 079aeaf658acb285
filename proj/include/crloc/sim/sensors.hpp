#pragma once

// Sensor models: 8x8 multizone ToF by ray casting, gyroscope by pose
// differencing, and bending-angle/curvature strain stations.

#include "crloc/factors.hpp"
#include "crloc/geom.hpp"
#include "crloc/sim/mesh.hpp"
#include "crloc/sim/robot.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace crloc::sim {

struct ToFSpec {
  int rows = 8;
  int cols = 8;
  double fov_horizontal = M_PI / 4.0;
  double fov_vertical = M_PI / 4.0;
  double max_range = 4.0;
  double rate = 15.0;  // Hz
  bool noise = true;
  ToFNoiseTable noise_table;
};

struct GyroSpec {
  double sigma = 0.01;  // rad/s
  double rate = 100.0;
  double bias_sigma = 0.005;  // spread of the constant per-sensor bias
  double diff_dt = 1e-3;
  bool noise = true;
};

struct StrainSpec {
  double sigma_curvature = 0.01;  // 1/m
  double sigma_angle = 0.015;     // rad
  double rate = 20.0;
  double spacing = 0.03;
  bool noise = true;
};

struct SensorSpec {
  ToFSpec tof;
  GyroSpec gyro;
  StrainSpec strain;
};

/// Unit ray directions (sensor frame, boresight +z) at the centres of a
/// rows x cols partition of the field of view, row-major.
inline std::vector<Eigen::Vector3d> tof_ray_grid(const ToFSpec& spec) {
  std::vector<Eigen::Vector3d> rays;
  rays.reserve(static_cast<std::size_t>(spec.rows * spec.cols));
  for (int r = 0; r < spec.rows; ++r) {
    const double ay = -0.5 * spec.fov_vertical + (r + 0.5) * spec.fov_vertical / spec.rows;
    for (int c = 0; c < spec.cols; ++c) {
      const double ax = -0.5 * spec.fov_horizontal + (c + 0.5) * spec.fov_horizontal / spec.cols;
      rays.push_back(Eigen::Vector3d(std::tan(ax), std::tan(ay), 1.0).normalized());
    }
  }
  return rays;
}

/// A ToF sensor mounted on the backbone.
struct ToFMount {
  int sensor_id = 0;
  int ring = 0;
  double arclength = 0.0;
  Transform extrinsic;  // sensor -> body
};

/// Radial sensors: boresight along the body radial direction at azimuth psi,
/// x axis along the backbone. Tip sensor: boresight along the backbone.
inline std::vector<ToFMount> tof_mounts(const RobotGeometry& g) {
  std::vector<ToFMount> out;
  int id = 0;
  for (std::size_t r = 0; r < g.ring_stations.size(); ++r) {
    for (int i = 0; i < g.sensors_per_ring; ++i) {
      const double psi = static_cast<double>(r) * g.ring_offset + 2.0 * M_PI * i / g.sensors_per_ring;
      const Eigen::Vector3d z(0.0, std::cos(psi), std::sin(psi));
      const Eigen::Vector3d x = Eigen::Vector3d::UnitX();
      Eigen::Matrix3d rot;
      rot << x, z.cross(x), z;
      out.push_back({id++, static_cast<int>(r), g.ring_stations[r], Transform(rot, g.ring_radius * z)});
    }
  }
  if (g.tip_sensor) {
    Eigen::Matrix3d rot;
    rot << Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX();
    out.push_back({id, static_cast<int>(g.ring_stations.size()) - 1, g.length, Transform(rot, Eigen::Vector3d::Zero())});
  }
  return out;
}

/// Ray-casts one frame. `true_distance` receives the noise-free range of every
/// ray (nullopt for no return) and `hit_triangle` the triangle hit (-1 for none).
inline ToFScan raycast_tof(const Bvh& scene, const Transform& sensor_pose, const ToFSpec& spec,
                           const std::vector<Eigen::Vector3d>& rays, std::mt19937_64& rng,
                           std::vector<std::optional<double>>* true_distance = nullptr,
                           std::vector<int>* hit_triangle = nullptr) {
  ToFScan scan;
  scan.rays = rays;
  if (true_distance) true_distance->assign(rays.size(), std::nullopt);
  if (hit_triangle) hit_triangle->assign(rays.size(), -1);
  std::normal_distribution<double> unit(0.0, 1.0);
  const Eigen::Vector3d origin = sensor_pose.translation();
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Eigen::Vector3d dir = sensor_pose.rotation() * rays[i];
    const auto hit = scene.raycast(origin, dir, spec.max_range);
    if (!hit) continue;
    if (true_distance) (*true_distance)[i] = hit->distance;
    if (hit_triangle) (*hit_triangle)[i] = hit->triangle;
    double d = hit->distance;
    bool valid = d >= spec.noise_table.min_valid;
    if (spec.noise && valid) {
      d += spec.noise_table.sigma(d) * unit(rng);
    }
    valid = valid && d >= spec.noise_table.min_valid;
    if (d > spec.max_range) continue;
    scan.returns.push_back({static_cast<int>(i), d, valid});
  }
  return scan;
}

inline GyroMeasurement sim_gyro(const SimRobot& robot, double s, double t, const GyroSpec& spec,
                                const Eigen::Vector3d& bias, std::mt19937_64& rng) {
  GyroMeasurement m;
  m.arclength = s;
  m.timestamp = t;
  m.angular_rate = robot.angular_velocity(s, t, spec.diff_dt) + bias;
  if (spec.noise) {
    std::normal_distribution<double> n(0.0, spec.sigma);
    for (int a = 0; a < 3; ++a) m.angular_rate[a] += n(rng);
  }
  return m;
}

/// Stations every `spacing` from spacing/2, kept strictly inside the arcs
/// (off the straight half links of length `end_margin` at either end).
inline std::vector<double> strain_stations(double length, double spacing, double end_margin = 0.0) {
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double s = (k + 0.5) * spacing;
    if (s > length - end_margin - 1e-12) break;
    if (s > end_margin + 1e-12) out.push_back(s);
  }
  return out;
}

inline std::vector<StrainMeasurement> sim_strain(const SimRobot& robot, double t, const StrainSpec& spec,
                                                 std::mt19937_64& rng) {
  std::vector<StrainMeasurement> out;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double s : strain_stations(robot.length(), spec.spacing, 0.5 * robot.geometry().link_length)) {
    auto [theta, kappa] = robot.bending_at(s, t);
    if (spec.noise) {
      kappa += spec.sigma_curvature * unit(rng);
      theta += spec.sigma_angle * unit(rng);
    }
    if (kappa < 0.0) {
      kappa = -kappa;
      theta += M_PI;
    }
    theta = std::remainder(theta, 2.0 * M_PI);
    out.push_back({theta, kappa, s, t});
  }
  return out;
}

}  // namespace crloc::sim
