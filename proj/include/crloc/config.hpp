#pragma once

// Run configuration: one JSON document of sections, every tunable present
// with its default. Unknown keys are rejected. Environment variables named
// CRLOC_<SECTION>__<KEY> (upper case) override single entries.

#include "crloc/envmap.hpp"
#include "crloc/factors.hpp"
#include "crloc/localize.hpp"
#include "crloc/sim/simulate.hpp"
#include "crloc/solver.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MapSettings {
  double voxel_size = 0.03;
  int k_neighbors = 20;
  double prior_sigma = 1e-3;
  Eigen::Vector3d interior_point{0.0, 0.0, 0.5};
  double sample_spacing = 0.01;  // Poisson-disk spacing when sampling a map from meshes
  double darts_per_area = 20.0;
};

struct PathSettings {
  std::string scene;  // mesh directory or file; empty for the built-in desk scene
  std::string map;
  std::string log;
  std::string truth;
  std::string estimate;
  std::string cloud;
  std::string out = "out";
};

struct RunConfig {
  sim::SimConfig sim;  // seed, duration, robot, sensors, trajectory ranges
  std::string anomaly = "cube";  // "cube" or "none": object planted in the true scene only
  MapSettings map;
  EstimatorConfig estimator;
  double tau = 9.0;
  // Reports whose largest node pose-covariance trace exceeds this are flagged
  // as weakly observable.
  double weak_observability_trace = 1e-3;
  PathSettings paths;
};

namespace detail {

using nlohmann::json;

// Walks every (section, key, field) triple; the same list drives reading
// and writing so the two cannot drift apart.
template <typename V>
void visit_config(RunConfig& c, V&& v) {
  auto& r = c.sim.robot;
  v("robot", "length", r.length);
  v("robot", "link_length", r.link_length);
  v("robot", "base", r.base);
  v("robot", "ring_stations", r.ring_stations);
  v("robot", "ring_offset", r.ring_offset);
  v("robot", "ring_radius", r.ring_radius);
  v("robot", "sensors_per_ring", r.sensors_per_ring);
  v("robot", "tip_sensor", r.tip_sensor);

  auto& tof = c.sim.sensors.tof;
  v("tof", "rows", tof.rows);
  v("tof", "cols", tof.cols);
  v("tof", "fov_horizontal", tof.fov_horizontal);
  v("tof", "fov_vertical", tof.fov_vertical);
  v("tof", "max_range", tof.max_range);
  v("tof", "rate", tof.rate);
  v("tof", "noise", tof.noise);
  auto& gyro = c.sim.sensors.gyro;
  v("gyro", "sigma", gyro.sigma);
  v("gyro", "rate", gyro.rate);
  v("gyro", "bias_sigma", gyro.bias_sigma);
  v("gyro", "diff_dt", gyro.diff_dt);
  v("gyro", "noise", gyro.noise);
  auto& strain = c.sim.sensors.strain;
  v("strain", "sigma_curvature", strain.sigma_curvature);
  v("strain", "sigma_angle", strain.sigma_angle);
  v("strain", "rate", strain.rate);
  v("strain", "spacing", strain.spacing);
  v("strain", "noise", strain.noise);

  v("sim", "seed", c.sim.seed);
  v("sim", "duration", c.sim.duration);
  v("sim", "truth_rate", c.sim.truth_rate);
  v("sim", "randomize_trajectory", c.sim.randomize_trajectory);
  v("sim", "amplitude_min", c.sim.ranges.amplitude_min);
  v("sim", "amplitude_max", c.sim.ranges.amplitude_max);
  v("sim", "frequency_min", c.sim.ranges.frequency_min);
  v("sim", "frequency_max", c.sim.ranges.frequency_max);
  v("sim", "still_time", c.sim.trajectory.still_time);
  v("sim", "ramp_time", c.sim.trajectory.ramp_time);
  v("sim", "anomaly", c.anomaly);

  auto& nm = c.estimator.noise;
  v("noise", "tof_min_valid", nm.tof.min_valid);
  v("noise", "tof_knee1", nm.tof.knee1);
  v("noise", "tof_knee2", nm.tof.knee2);
  v("noise", "tof_c_near", nm.tof.c_near);
  v("noise", "tof_c_mid", nm.tof.c_mid);
  v("noise", "tof_c_far", nm.tof.c_far);
  v("noise", "tof_extra_sigma", nm.tof_extra_sigma);
  v("noise", "gyro_sigma", nm.gyro_sigma);
  v("noise", "strain_sigma", nm.strain_sigma);

  auto& pr = c.estimator.priors;
  v("priors", "shape_sigma", pr.shape_sigma);
  v("priors", "motion_sigma", pr.motion_sigma);
  v("priors", "strain_smoothness_s", pr.strain_smoothness_s);
  v("priors", "strain_smoothness_t", pr.strain_smoothness_t);
  v("priors", "velocity_smoothness_s", pr.velocity_smoothness_s);
  v("priors", "velocity_smoothness_t", pr.velocity_smoothness_t);
  v("priors", "initial_pose_sigma", c.estimator.initial.pose);
  v("priors", "initial_strain_sigma", c.estimator.initial.strain);
  v("priors", "initial_velocity_sigma", c.estimator.initial.velocity);

  auto& e = c.estimator;
  auto& so = e.solver;
  v("solver", "window_length", e.window_length);
  v("solver", "knot_spacing", e.knot_spacing);
  v("solver", "knot_rate", e.knot_rate);
  v("solver", "max_iterations", so.max_iterations);
  v("solver", "step_tolerance", so.step_tolerance);
  v("solver", "cost_tolerance", so.cost_tolerance);
  v("solver", "initial_damping", so.initial_damping);
  v("solver", "damping_factor", so.damping_factor);
  v("solver", "max_damping", so.max_damping);
  v("solver", "robust", so.robust);
  v("solver", "match_radius", so.match_radius);
  v("solver", "dense", so.dense);
  v("solver", "compute_covariance", so.compute_covariance);
  v("solver", "use_tof", e.use_tof);
  v("solver", "use_gyro", e.use_gyro);
  v("solver", "use_strain", e.use_strain);
  v("solver", "min_bias_samples", e.min_bias_samples);
  v("solver", "weak_observability_trace", c.weak_observability_trace);

  v("map", "voxel_size", c.map.voxel_size);
  v("map", "k_neighbors", c.map.k_neighbors);
  v("map", "prior_sigma", c.map.prior_sigma);
  v("map", "interior_point", c.map.interior_point);
  v("map", "sample_spacing", c.map.sample_spacing);
  v("map", "darts_per_area", c.map.darts_per_area);

  v("detect", "tau", c.tau);

  v("paths", "scene", c.paths.scene);
  v("paths", "map", c.paths.map);
  v("paths", "log", c.paths.log);
  v("paths", "truth", c.paths.truth);
  v("paths", "estimate", c.paths.estimate);
  v("paths", "cloud", c.paths.cloud);
  v("paths", "out", c.paths.out);
}

template <typename T>
json field_to_json(const T& x) {
  return x;
}
inline json field_to_json(const Eigen::Vector3d& x) { return {x.x(), x.y(), x.z()}; }
inline json field_to_json(const Transform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.push_back(t.rotation()(i, j));
  }
  return {{"R", r}, {"p", field_to_json(Eigen::Vector3d(t.translation()))}};
}

template <typename T>
void field_from_json(const json& j, T& x) {
  x = j.get<T>();
}
inline void field_from_json(const json& j, double& x) {
  if (!j.is_number()) throw ConfigError("expected a number");
  x = j.get<double>();
}
inline void field_from_json(const json& j, int& x) {
  if (!j.is_number_integer()) throw ConfigError("expected an integer");
  x = j.get<int>();
}
inline void field_from_json(const json& j, std::uint64_t& x) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError("expected a non-negative integer");
  }
  x = j.get<std::uint64_t>();
}
inline void field_from_json(const json& j, bool& x) {
  if (!j.is_boolean()) throw ConfigError("expected true or false");
  x = j.get<bool>();
}
inline void field_from_json(const json& j, std::string& x) {
  if (!j.is_string()) throw ConfigError("expected a string");
  x = j.get<std::string>();
}
inline void field_from_json(const json& j, Eigen::Vector3d& x) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected [x, y, z]");
  for (int i = 0; i < 3; ++i) x[i] = j.at(static_cast<std::size_t>(i)).get<double>();
}
inline void field_from_json(const json& j, Transform& t) {
  if (!j.is_object() || j.size() != 2 || !j.contains("R") || !j.contains("p")) {
    throw ConfigError("expected {\"R\": [9 numbers], \"p\": [3 numbers]}");
  }
  const json& r = j.at("R");
  if (!r.is_array() || r.size() != 9) throw ConfigError("R must hold 9 numbers");
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = r.at(static_cast<std::size_t>(i)).get<double>();
  if ((m.transpose() * m - Eigen::Matrix3d::Identity()).norm() > 1e-6 || m.determinant() < 0.0) {
    throw ConfigError("R is not a rotation matrix");
  }
  Eigen::Vector3d p;
  field_from_json(j.at("p"), p);
  t = Transform(m, p);
}

inline std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  return s;
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  RunConfig c = cfg;
  detail::visit_config(c, [&](const char* section, const char* key, const auto& field) {
    j[section][key] = detail::field_to_json(field);
  });
  return j;
}

/// Checks the invariants that the rest of the pipeline relies on.
inline void validate(const RunConfig& c) {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
  };
  const auto& n = c.estimator.noise;
  positive(n.tof.min_valid, "noise.tof_min_valid");
  positive(n.tof.c_near, "noise.tof_c_near");
  positive(n.tof.c_mid, "noise.tof_c_mid");
  positive(n.tof.c_far, "noise.tof_c_far");
  if (!(n.tof.min_valid < n.tof.knee1 && n.tof.knee1 < n.tof.knee2)) {
    throw ConfigError("noise: need tof_min_valid < tof_knee1 < tof_knee2");
  }
  positive(n.tof_extra_sigma, "noise.tof_extra_sigma");
  positive(n.gyro_sigma, "noise.gyro_sigma");
  positive(n.strain_sigma, "noise.strain_sigma");
  const auto& p = c.estimator.priors;
  for (double v : {p.shape_sigma, p.motion_sigma, p.strain_smoothness_s, p.strain_smoothness_t,
                   p.velocity_smoothness_s, p.velocity_smoothness_t}) {
    positive(v, "priors: every sigma");
  }
  positive(c.estimator.initial.pose, "priors.initial_pose_sigma");
  positive(c.estimator.initial.strain, "priors.initial_strain_sigma");
  positive(c.estimator.initial.velocity, "priors.initial_velocity_sigma");
  positive(c.estimator.window_length, "solver.window_length");
  positive(c.estimator.knot_spacing, "solver.knot_spacing");
  positive(c.estimator.knot_rate, "solver.knot_rate");
  positive(c.estimator.solver.match_radius, "solver.match_radius");
  positive(c.estimator.solver.damping_factor - 1.0, "solver.damping_factor - 1");
  positive(c.estimator.solver.max_damping, "solver.max_damping");
  positive(c.estimator.solver.initial_damping, "solver.initial_damping");
  if (c.estimator.solver.max_iterations < 1) throw ConfigError("solver.max_iterations must be at least 1");
  positive(c.map.voxel_size, "map.voxel_size");
  positive(c.map.prior_sigma, "map.prior_sigma");
  positive(c.map.sample_spacing, "map.sample_spacing");
  positive(c.map.darts_per_area, "map.darts_per_area");
  if (c.map.k_neighbors < 3) throw ConfigError("map.k_neighbors must be at least 3");
  const auto& s = c.sim.sensors;
  positive(s.tof.rate, "tof.rate");
  positive(s.tof.max_range, "tof.max_range");
  positive(s.gyro.rate, "gyro.rate");
  positive(s.gyro.sigma, "gyro.sigma");
  positive(s.gyro.diff_dt, "gyro.diff_dt");
  positive(s.strain.rate, "strain.rate");
  positive(s.strain.spacing, "strain.spacing");
  positive(s.strain.sigma_angle, "strain.sigma_angle");
  positive(s.strain.sigma_curvature, "strain.sigma_curvature");
  if (s.gyro.bias_sigma < 0.0) throw ConfigError("gyro.bias_sigma must be non-negative");
  if (s.tof.rows < 1 || s.tof.cols < 1) throw ConfigError("tof: rows and cols must be at least 1");
  if (c.sim.duration < 0.0) throw ConfigError("sim.duration must be non-negative");
  positive(c.sim.truth_rate, "sim.truth_rate");
  positive(c.sim.robot.length, "robot.length");
  positive(c.sim.robot.link_length, "robot.link_length");
  if (c.anomaly != "cube" && c.anomaly != "none") throw ConfigError("sim.anomaly must be \"cube\" or \"none\"");
  positive(c.weak_observability_trace, "solver.weak_observability_trace");
  if (std::isnan(c.tau)) throw ConfigError("detect.tau must be a number");
}

/// Defaults overlaid with `j`. Unknown sections or keys are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  const nlohmann::json defaults = config_to_json(RunConfig{});
  for (const auto& [section, body] : j.items()) {
    if (!defaults.contains(section)) throw ConfigError("config: unknown section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      (void)value;
      if (!defaults.at(section).contains(key)) {
        throw ConfigError("config: unknown key '" + section + "." + key + "'");
      }
    }
  }
  RunConfig c;
  detail::visit_config(c, [&](const char* section, const char* key, auto& field) {
    if (!j.contains(section) || !j.at(section).contains(key)) return;
    try {
      detail::field_from_json(j.at(section).at(key), field);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + section + "." + key + ": " + e.what());
    }
  });
  validate(c);
  return c;
}

/// Applies CRLOC_<SECTION>__<KEY> overrides from `getenv`. Values are parsed
/// as JSON when possible, otherwise taken as strings.
template <typename Getenv>
nlohmann::json apply_env_overrides(nlohmann::json j, Getenv&& getenv_fn) {
  const nlohmann::json defaults = config_to_json(RunConfig{});
  for (const auto& [section, body] : defaults.items()) {
    for (const auto& [key, value] : body.items()) {
      (void)value;
      const std::string name = "CRLOC_" + detail::upper(section) + "__" + detail::upper(key);
      const char* raw = getenv_fn(name.c_str());
      if (!raw) continue;
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(raw);
      } catch (const nlohmann::json::exception&) {
        parsed = std::string(raw);
      }
      j[section][key] = parsed;
    }
  }
  return j;
}

inline nlohmann::json apply_env_overrides(nlohmann::json j) {
  return apply_env_overrides(std::move(j), [](const char* n) { return std::getenv(n); });
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: '" + path + "': " + e.what());
  }
  return config_from_json(apply_env_overrides(std::move(j)));
}

inline void save_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write '" + path + "'");
  out << config_to_json(c).dump(2) << '\n';
}

/// Input paths that are set must exist.
inline void check_input_paths(const RunConfig& c) {
  for (const std::string* p : {&c.paths.scene, &c.paths.map, &c.paths.log, &c.paths.truth, &c.paths.estimate,
                               &c.paths.cloud}) {
    if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("config: path '" + *p + "' does not exist");
  }
}

}  // namespace crloc
