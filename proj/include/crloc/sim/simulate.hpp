#pragma once

// End-to-end data generation: trajectory, sensor streams and ground truth.

#include "crloc/sim/mesh.hpp"
#include "crloc/sim/rng.hpp"
#include "crloc/sim/robot.hpp"
#include "crloc/sim/scene.hpp"
#include "crloc/sim/sensors.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace crloc::sim {

struct TrajectoryRanges {
  double amplitude_min = 0.4;  // 1/m
  double amplitude_max = 0.8;
  double frequency_min = 0.1;  // Hz
  double frequency_max = 0.25;
};

struct SimConfig {
  double duration = 10.0;
  std::uint64_t seed = 42;
  RobotGeometry robot;
  SensorSpec sensors;
  bool randomize_trajectory = true;
  TrajectoryRanges ranges;
  TrajectoryParams trajectory;  // used as-is unless randomized
  double truth_rate = 100.0;
};

struct TruthRecord {
  int ring = 0;
  double arclength = 0.0;
  double timestamp = 0.0;
  Transform pose;
};

struct SimOutput {
  TrajectoryParams trajectory;
  std::vector<ToFScan> scans;
  std::vector<std::vector<std::optional<double>>> true_ranges;  // per scan, per ray
  std::vector<std::vector<std::string>> hit_labels;             // per scan, per ray; empty for no hit
  std::vector<GyroMeasurement> gyros;
  std::vector<StrainMeasurement> strains;
  std::vector<TruthRecord> truth;
  std::map<int, Eigen::Vector3d> gyro_bias;
};

// Stream ids for make_rng.
enum : std::uint64_t { kStreamTrajectory = 1, kStreamGyroBias = 2, kStreamStrain = 3, kStreamToF = 100, kStreamGyro = 200 };

inline TrajectoryParams random_trajectory(std::uint64_t seed, const TrajectoryRanges& r, const TrajectoryParams& base) {
  auto rng = make_rng(seed, kStreamTrajectory);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  TrajectoryParams p = base;
  auto amp = [&] {
    const double a = r.amplitude_min + (r.amplitude_max - r.amplitude_min) * uni(rng);
    return uni(rng) < 0.5 ? -a : a;
  };
  for (int a = 0; a < 2; ++a) {
    p.amplitude_base[a] = amp();
    p.amplitude_tip[a] = amp();
    p.frequency[a] = r.frequency_min + (r.frequency_max - r.frequency_min) * uni(rng);
    p.phase[a] = 2.0 * M_PI * uni(rng);
  }
  return p;
}

inline SimRobot make_robot(const SimConfig& cfg, const TrajectoryParams& traj) {
  return SimRobot(cfg.robot, make_bending_field(traj, cfg.robot.length));
}

/// Sample times m / rate + offset within [0, duration].
inline std::vector<double> sample_times(double duration, double rate, double offset = 0.0) {
  std::vector<double> out;
  for (long m = 0;; ++m) {
    const double t = static_cast<double>(m) / rate + offset;
    if (t > duration + 1e-12) break;
    out.push_back(t);
  }
  return out;
}

inline SimOutput simulate(const SimConfig& cfg, const SimScene& true_scene) {
  SimOutput out;
  out.trajectory = cfg.randomize_trajectory ? random_trajectory(cfg.seed, cfg.ranges, cfg.trajectory) : cfg.trajectory;
  const SimRobot robot = make_robot(cfg, out.trajectory);
  const Bvh bvh(true_scene.triangles());
  const std::vector<std::string> labels = true_scene.triangle_labels();
  const auto rays = tof_ray_grid(cfg.sensors.tof);
  const auto mounts = tof_mounts(cfg.robot);
  const int num_tof = static_cast<int>(mounts.size());

  // ToF: exact rate, staggered phase per sensor.
  for (const auto& mount : mounts) {
    auto rng = make_rng(cfg.seed, kStreamToF + static_cast<std::uint64_t>(mount.sensor_id));
    const double offset = static_cast<double>(mount.sensor_id) / (cfg.sensors.tof.rate * num_tof);
    for (double t : sample_times(cfg.duration, cfg.sensors.tof.rate, offset)) {
      const Transform sensor_pose = robot.pose_at(mount.arclength, t) * mount.extrinsic;
      std::vector<std::optional<double>> truth;
      std::vector<int> tri;
      ToFScan scan = raycast_tof(bvh, sensor_pose, cfg.sensors.tof, rays, rng, &truth, &tri);
      std::vector<std::string> hit(tri.size());
      for (std::size_t i = 0; i < tri.size(); ++i) {
        if (tri[i] >= 0) hit[i] = labels[static_cast<std::size_t>(tri[i])];
      }
      out.hit_labels.push_back(std::move(hit));
      scan.sensor_id = mount.sensor_id;
      scan.timestamp = t;
      scan.arclength = mount.arclength;
      scan.extrinsic = mount.extrinsic;
      out.scans.push_back(std::move(scan));
      out.true_ranges.push_back(std::move(truth));
    }
  }

  // Gyroscopes, one per ring, with a constant bias.
  auto bias_rng = make_rng(cfg.seed, kStreamGyroBias);
  std::normal_distribution<double> bias_dist(0.0, cfg.sensors.gyro.bias_sigma);
  const auto& rings = cfg.robot.ring_stations;
  for (std::size_t r = 0; r < rings.size(); ++r) {
    Eigen::Vector3d b(bias_dist(bias_rng), bias_dist(bias_rng), bias_dist(bias_rng));
    out.gyro_bias[static_cast<int>(r)] = b;
    auto rng = make_rng(cfg.seed, kStreamGyro + r);
    for (double t : sample_times(cfg.duration, cfg.sensors.gyro.rate)) {
      GyroMeasurement m = sim_gyro(robot, rings[r], t, cfg.sensors.gyro, b, rng);
      m.sensor_id = static_cast<int>(r);
      m.stationary = t < out.trajectory.still_time;
      out.gyros.push_back(m);
    }
  }

  auto strain_rng = make_rng(cfg.seed, kStreamStrain);
  for (double t : sample_times(cfg.duration, cfg.sensors.strain.rate)) {
    for (auto& m : sim_strain(robot, t, cfg.sensors.strain, strain_rng)) out.strains.push_back(m);
  }

  for (double t : sample_times(cfg.duration, cfg.truth_rate)) {
    for (std::size_t r = 0; r < rings.size(); ++r) {
      out.truth.push_back({static_cast<int>(r), rings[r], t, robot.pose_at(rings[r], t)});
    }
  }
  return out;
}

}  // namespace crloc::sim
