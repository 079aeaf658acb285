#pragma once

// Projection of range returns into the world with per-point covariance,
// Mahalanobis anomaly gating against the prior map, and localization metrics.

#include "crloc/envmap.hpp"
#include "crloc/factors.hpp"
#include "crloc/geom.hpp"
#include "crloc/state.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc {

struct ReconPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  int sensor_id = 0;
  double timestamp = 0.0;
  double range = 0.0;
  int ray = -1;  // index into the sensor's ray grid, when known
};

using ReconstructedCloud = std::vector<ReconPoint>;

/// p = T q, Sigma_p = R I + D p^odot Ad(T) Sigma_b Ad(T)^T p^odot^T D^T.
inline ReconPoint project_point(const Transform& pose, const Matrix6d& pose_covariance, const ToFMeasurement& m,
                                const NoiseModel& noise) {
  ReconPoint out;
  out.position = pose * m.body_point();
  const Eigen::Matrix<double, 3, 6> g = projection() * odot(homogeneous(out.position)) * adjoint(pose);
  out.covariance = noise.tof_variance(m.distance) * Eigen::Matrix3d::Identity() + g * pose_covariance * g.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.sensor_id = m.sensor_id;
  out.timestamp = m.timestamp;
  out.range = m.distance;
  return out;
}

/// Pose interpolated on the grid; pose covariance from the nearest knot.
inline ReconPoint project_point(const StateGrid& grid, const ToFMeasurement& m, const NoiseModel& noise = {}) {
  const Transform pose = interpolate_pose(grid, m.arclength, m.timestamp);
  return project_point(pose, nearest_node(grid, m.arclength, m.timestamp).pose_covariance(), m, noise);
}

/// Every valid return of every scan. Scans outside the grid raise
/// QueryOutOfBounds.
inline ReconstructedCloud reconstruct_scene(const StateGrid& grid, const std::vector<ToFScan>& scans,
                                            const NoiseModel& noise = {}) {
  ReconstructedCloud cloud;
  for (const auto& scan : scans) {
    if (scan.returns.empty()) continue;
    const Transform pose = interpolate_pose(grid, scan.arclength, scan.timestamp);
    const Matrix6d cov = nearest_node(grid, scan.arclength, scan.timestamp).pose_covariance();
    for (std::size_t i = 0; i < scan.returns.size(); ++i) {
      const ToFReturn& r = scan.returns[i];
      if (!r.valid || !(r.distance >= noise.tof.min_valid)) continue;
      cloud.push_back(project_point(pose, cov, scan.measurement(i), noise));
      cloud.back().ray = r.ray;
    }
  }
  return cloud;
}

struct AnomalyScore {
  int point = 0;      // index into the cloud
  int map_point = -1;  // nearest map point, -1 if the map is empty
  double score = 0.0;
  bool flagged = false;
};

struct AnomalyReport {
  double tau = 9.0;
  std::vector<AnomalyScore> scores;
  int flagged = 0;
  int regularized = 0;  // points whose combined covariance needed the 1e-12 I ridge
  // Filled when per-point ground-truth labels are supplied.
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> false_positive_rate;
};

/// Squared Mahalanobis distance of the offset under covariance s. Singular s
/// is ridged by 1e-12 I; `regularized` reports whether that happened.
inline double mahalanobis2(const Eigen::Vector3d& offset, const Eigen::Matrix3d& s, bool* regularized = nullptr) {
  Eigen::LDLT<Eigen::Matrix3d> ldlt(s);
  const bool singular = ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0) ||
                        ldlt.rcond() < std::numeric_limits<double>::epsilon();
  if (singular) {
    ldlt.compute(s + 1e-12 * Eigen::Matrix3d::Identity());
  }
  if (regularized) *regularized = singular;
  return offset.dot(ldlt.solve(offset));
}

/// Flags points whose squared Mahalanobis distance to their nearest map
/// point exceeds tau. `is_anomaly`, when given, holds one ground-truth label
/// per cloud point.
inline AnomalyReport detect_anomalies(const ReconstructedCloud& cloud, const EnvironmentMap& map, double tau,
                                      const std::vector<bool>* is_anomaly = nullptr) {
  if (std::isnan(tau)) throw std::invalid_argument("detect_anomalies: tau is NaN");
  if (is_anomaly && is_anomaly->size() != cloud.size()) {
    throw std::invalid_argument("detect_anomalies: label count does not match the cloud");
  }
  AnomalyReport rep;
  rep.tau = tau;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const ReconPoint& p = cloud[i];
    AnomalyScore sc;
    sc.point = static_cast<int>(i);
    const auto nn = map.nearest_index(p.position, inf);
    if (!nn) {
      sc.score = inf;
    } else {
      sc.map_point = nn->index;
      const MapPoint& mp = map.point(nn->index);
      bool reg = false;
      sc.score = mahalanobis2(p.position - mp.position, p.covariance + mp.prior_covariance, &reg);
      rep.regularized += reg ? 1 : 0;
    }
    sc.flagged = sc.score > tau;
    rep.flagged += sc.flagged ? 1 : 0;
    rep.scores.push_back(sc);
  }
  if (is_anomaly) {
    int tp = 0, fp = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const bool truth = (*is_anomaly)[i];
      pos += truth ? 1 : 0;
      neg += truth ? 0 : 1;
      if (rep.scores[i].flagged) (truth ? tp : fp) += 1;
    }
    if (tp + fp > 0) rep.precision = static_cast<double>(tp) / (tp + fp);
    if (pos > 0) rep.recall = static_cast<double>(tp) / pos;
    if (neg > 0) rep.false_positive_rate = static_cast<double>(fp) / neg;
  }
  return rep;
}

/// RMS of point-to-nearest-map-point distances.
inline double cloud_to_map_rmse(const ReconstructedCloud& cloud, const EnvironmentMap& map) {
  if (cloud.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& p : cloud) {
    const auto nn = map.nearest_index(p.position, std::numeric_limits<double>::infinity());
    if (!nn) throw std::invalid_argument("cloud_to_map_rmse: empty map");
    acc += nn->distance * nn->distance;
  }
  return std::sqrt(acc / static_cast<double>(cloud.size()));
}

// ---------------------------------------------------------------------------
// Localization metrics

/// One ground-truth pose of a backbone station.
struct RingPose {
  int ring = 0;
  double arclength = 0.0;
  double timestamp = 0.0;
  Transform pose;
};

struct ErrorStats {
  int count = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double std = 0.0;  // of the absolute errors
  double max = 0.0;
};

inline ErrorStats error_stats(const std::vector<double>& e) {
  ErrorStats s;
  s.count = static_cast<int>(e.size());
  if (e.empty()) return s;
  double sum = 0.0, sq = 0.0;
  for (double x : e) {
    sum += x;
    sq += x * x;
    s.max = std::max(s.max, x);
  }
  const double n = static_cast<double>(e.size());
  s.mae = sum / n;
  s.rmse = std::sqrt(sq / n);
  s.std = std::sqrt(std::max(0.0, sq / n - s.mae * s.mae));
  return s;
}

struct RingMetrics {
  int ring = -1;  // -1 for the pooled row
  ErrorStats translation;  // m
  ErrorStats rotation;     // rad
};

struct LocalizationMetrics {
  std::vector<RingMetrics> rings;
  RingMetrics pooled;
};

/// Geodesic angle of a^T b, symmetric in its arguments.
inline double rotation_error(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return rotation_angle_between(a, b);
}

/// Compares the estimate with ground truth at every knot time that has a truth
/// record within `time_tolerance`, per ring and pooled.
inline LocalizationMetrics evaluate_localization(const StateGrid& estimate, const std::vector<RingPose>& truth,
                                                 double time_tolerance = 1e-3) {
  std::map<int, std::vector<const RingPose*>> by_ring;
  for (const auto& r : truth) by_ring[r.ring].push_back(&r);
  LocalizationMetrics out;
  std::vector<double> all_t, all_r;
  for (auto& [ring, recs] : by_ring) {
    std::sort(recs.begin(), recs.end(), [](const RingPose* a, const RingPose* b) { return a->timestamp < b->timestamp; });
    std::vector<double> et, er;
    for (double t : estimate.times()) {
      const auto it = std::lower_bound(recs.begin(), recs.end(), t,
                                       [](const RingPose* r, double x) { return r->timestamp < x; });
      const RingPose* best = nullptr;
      for (auto c : {it, it == recs.begin() ? it : it - 1}) {
        if (c == recs.end()) continue;
        if (std::abs((*c)->timestamp - t) <= time_tolerance &&
            (!best || std::abs((*c)->timestamp - t) < std::abs(best->timestamp - t))) {
          best = *c;
        }
      }
      if (!best) continue;
      const Transform est = interpolate_pose(estimate, best->arclength, t);
      et.push_back((est.translation() - best->pose.translation()).norm());
      er.push_back(rotation_error(est.rotation(), best->pose.rotation()));
    }
    if (et.empty()) continue;
    all_t.insert(all_t.end(), et.begin(), et.end());
    all_r.insert(all_r.end(), er.begin(), er.end());
    out.rings.push_back({ring, error_stats(et), error_stats(er)});
  }
  if (all_t.empty()) {
    throw std::invalid_argument("evaluate_localization: no truth record within tolerance of any knot time");
  }
  out.pooled = {-1, error_stats(all_t), error_stats(all_r)};
  return out;
}

/// CSV with one row per ring and a pooled row; translation in cm, rotation
/// in degrees.
inline std::string metrics_csv(const LocalizationMetrics& m, const std::string& condition) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "condition,ring,samples,trans_mae_cm,trans_rmse_cm,trans_std_cm,rot_mae_deg,rot_rmse_deg,rot_std_deg\n";
  const double deg = 180.0 / M_PI;
  auto row = [&](const RingMetrics& r) {
    os << condition << ',' << (r.ring < 0 ? std::string("pooled") : std::to_string(r.ring)) << ','
       << r.translation.count << ',' << 100.0 * r.translation.mae << ',' << 100.0 * r.translation.rmse << ','
       << 100.0 * r.translation.std << ',' << deg * r.rotation.mae << ',' << deg * r.rotation.rmse << ','
       << deg * r.rotation.std << '\n';
  };
  for (const auto& r : m.rings) row(r);
  row(m.pooled);
  return os.str();
}

/// Eigenvalues of a point covariance, ascending, for export.
inline Eigen::Vector3d covariance_eigenvalues(const Eigen::Matrix3d& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(c, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace crloc
