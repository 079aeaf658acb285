#pragma once

// Sliding-window localization over a whole sensor log.

#include "crloc/envmap.hpp"
#include "crloc/factors.hpp"
#include "crloc/solver.hpp"
#include "crloc/state.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace crloc {

struct SensorLog {
  std::vector<ToFScan> scans;
  std::vector<GyroMeasurement> gyros;
  std::vector<StrainMeasurement> strains;

  bool empty() const { return scans.empty() && gyros.empty() && strains.empty(); }
  double end_time() const {
    double t = 0.0;
    for (const auto& m : scans) t = std::max(t, m.timestamp);
    for (const auto& m : gyros) t = std::max(t, m.timestamp);
    for (const auto& m : strains) t = std::max(t, m.timestamp);
    return t;
  }
};

struct EstimatorConfig {
  double knot_spacing = 0.1;  // m
  double knot_rate = 10.0;    // Hz
  double window_length = 2.0;
  SolverOptions solver;
  NoiseModel noise;
  PriorConfig priors;
  InitialPriorSigmas initial;
  bool use_tof = true;
  bool use_gyro = true;
  bool use_strain = true;
  int min_bias_samples = 50;
};

/// Final estimate of every knot column, plus one report per window solve.
struct Estimate {
  Transform base_pose;
  std::vector<double> arclengths;
  std::vector<double> times;
  std::vector<std::vector<StateNode>> columns;
  std::vector<SolveReport> reports;
  std::map<int, Eigen::Vector3d> gyro_bias;

  StateGrid grid() const {
    StateGrid g(arclengths, {times.front()}, base_pose);
    g.column(0) = columns.front();
    for (std::size_t k = 1; k < times.size(); ++k) g.append_column(times[k], columns[k]);
    return g;
  }
};

/// Knots every `spacing` from 0, with the last knot exactly at `length`.
inline std::vector<double> arclength_knots(double length, double spacing) {
  std::vector<double> s;
  const int n = std::max(1, static_cast<int>(std::ceil(length / spacing - 1e-9)));
  for (int i = 0; i <= n; ++i) s.push_back(std::min(length, i * spacing));
  return s;
}

inline Estimate localize(const SensorLog& log, std::shared_ptr<const EnvironmentMap> map, const Transform& base_pose,
                         double robot_length, const EstimatorConfig& cfg) {
  if (log.empty()) throw std::invalid_argument("localize: empty sensor log");
  if (cfg.use_tof && !log.scans.empty() && !map) throw std::invalid_argument("localize: range data needs a map");

  Estimate est;
  est.base_pose = base_pose;
  est.arclengths = arclength_knots(robot_length, cfg.knot_spacing);

  Problem p;
  p.grid = StateGrid(est.arclengths, {0.0}, base_pose);
  p.map = std::move(map);
  p.noise = cfg.noise;
  p.priors = cfg.priors;
  p.options = cfg.solver;
  p.window_length = cfg.window_length;
  p.head_prior = initial_column_prior(p.grid, cfg.initial);

  if (cfg.use_gyro && !log.gyros.empty()) {
    std::vector<GyroMeasurement> still;
    std::copy_if(log.gyros.begin(), log.gyros.end(), std::back_inserter(still),
                 [](const GyroMeasurement& m) { return m.stationary; });
    est.gyro_bias = estimate_gyro_bias(still, static_cast<std::size_t>(cfg.min_bias_samples));
    p.gyro_bias = est.gyro_bias;
  }

  auto by_time = [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; };
  std::vector<ToFScan> scans = cfg.use_tof ? log.scans : std::vector<ToFScan>{};
  std::vector<GyroMeasurement> gyros = cfg.use_gyro ? log.gyros : std::vector<GyroMeasurement>{};
  std::vector<StrainMeasurement> strains = cfg.use_strain ? log.strains : std::vector<StrainMeasurement>{};
  std::stable_sort(scans.begin(), scans.end(), by_time);
  std::stable_sort(gyros.begin(), gyros.end(), by_time);
  std::stable_sort(strains.begin(), strains.end(), by_time);
  std::size_t is = 0, ig = 0, ik = 0;
  auto admit = [&](double t_end) {
    for (; is < scans.size() && scans[is].timestamp <= t_end + 1e-12; ++is) {
      if (scans[is].timestamp >= p.t_start() - 1e-12) p.scans.push_back(scans[is]);
    }
    for (; ig < gyros.size() && gyros[ig].timestamp <= t_end + 1e-12; ++ig) {
      if (gyros[ig].timestamp >= p.t_start() - 1e-12) p.gyros.push_back(gyros[ig]);
    }
    for (; ik < strains.size() && strains[ik].timestamp <= t_end + 1e-12; ++ik) {
      if (strains[ik].timestamp >= p.t_start() - 1e-12) p.strains.push_back(strains[ik]);
    }
  };

  const double end = log.end_time();
  const int last_knot = static_cast<int>(std::ceil(end * cfg.knot_rate - 1e-9));
  admit(0.0);
  est.reports.push_back(gauss_newton_solve(p));
  for (int k = 1; k <= last_knot; ++k) {
    const double t = static_cast<double>(k) / cfg.knot_rate;
    if (auto frozen = slide_window(p, t)) {
      est.times.push_back(frozen->time);
      est.columns.push_back(std::move(frozen->nodes));
    }
    admit(t);
    est.reports.push_back(gauss_newton_solve(p));
  }
  for (int k = 0; k < p.grid.num_times(); ++k) {
    est.times.push_back(p.grid.times()[static_cast<std::size_t>(k)]);
    est.columns.push_back(p.grid.column(k));
  }
  return est;
}

}  // namespace crloc
