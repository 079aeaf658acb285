#pragma once

// Serialization of sensor logs, ground truth, estimates, anomaly reports and
// reconstructed clouds. Logs are JSON lines; everything else is one JSON
// document, except clouds, which are PLY.

#include "crloc/factors.hpp"
#include "crloc/geom.hpp"
#include "crloc/localize.hpp"
#include "crloc/ply.hpp"
#include "crloc/recon.hpp"
#include "crloc/state.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc::io {

using nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Primitive conversions

template <typename Derived>
json to_json_array(const Eigen::MatrixBase<Derived>& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  }
  return a;
}

/// Row-major fill of a fixed-size matrix from a flat array.
template <typename Matrix>
Matrix from_json_array(const json& a) {
  Matrix m;
  if (!a.is_array() || a.size() != static_cast<std::size_t>(m.size())) {
    throw IoError("expected an array of " + std::to_string(m.size()) + " numbers");
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = a.at(static_cast<std::size_t>(i * m.cols() + j)).get<double>();
  }
  return m;
}

inline json transform_json(const Transform& t) {
  return {{"R", to_json_array(t.rotation())}, {"p", to_json_array(t.translation())}};
}

inline Transform transform_from_json(const json& j) {
  const Eigen::Matrix3d r = from_json_array<Eigen::Matrix3d>(j.at("R"));
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > 1e-6 || r.determinant() < 0.0) {
    throw IoError("rotation is not orthonormal");
  }
  return Transform(r, from_json_array<Eigen::Vector3d>(j.at("p")));
}

// ---------------------------------------------------------------------------
// Sensor log

/// Records per line, tagged by "type":
///   tof_sensor: sensor, s, extrinsic, rays   (precedes that sensor's frames)
///   tof:        sensor, t, returns [[ray, distance, valid], ...]
///   gyro:       sensor, t, s, w, stationary
///   strain:     t, s, theta, kappa
inline void write_sensor_log(std::ostream& out, const SensorLog& log) {
  struct Line {
    double t;
    int order;
    std::size_t index;
  };
  std::vector<Line> lines;
  for (std::size_t i = 0; i < log.scans.size(); ++i) lines.push_back({log.scans[i].timestamp, 0, i});
  for (std::size_t i = 0; i < log.gyros.size(); ++i) lines.push_back({log.gyros[i].timestamp, 1, i});
  for (std::size_t i = 0; i < log.strains.size(); ++i) lines.push_back({log.strains[i].timestamp, 2, i});
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return a.t < b.t || (a.t == b.t && a.order < b.order);
  });
  std::map<int, bool> announced;
  for (const Line& l : lines) {
    json j;
    if (l.order == 0) {
      const ToFScan& s = log.scans[l.index];
      if (!announced[s.sensor_id]) {
        json rays = json::array();
        for (const auto& r : s.rays) rays.push_back(to_json_array(r));
        out << json{{"type", "tof_sensor"}, {"sensor", s.sensor_id}, {"s", s.arclength},
                    {"extrinsic", transform_json(s.extrinsic)}, {"rays", rays}}.dump()
            << '\n';
        announced[s.sensor_id] = true;
      }
      json rets = json::array();
      for (const auto& r : s.returns) rets.push_back(json::array({r.ray, r.distance, r.valid}));
      j = {{"type", "tof"}, {"sensor", s.sensor_id}, {"t", s.timestamp}, {"returns", rets}};
    } else if (l.order == 1) {
      const GyroMeasurement& g = log.gyros[l.index];
      j = {{"type", "gyro"}, {"sensor", g.sensor_id}, {"t", g.timestamp}, {"s", g.arclength},
           {"w", to_json_array(g.angular_rate)}, {"stationary", g.stationary}};
    } else {
      const StrainMeasurement& m = log.strains[l.index];
      j = {{"type", "strain"}, {"t", m.timestamp}, {"s", m.arclength}, {"theta", m.bending_angle},
           {"kappa", m.curvature}};
    }
    out << j.dump() << '\n';
  }
}

struct LogReadResult {
  SensorLog log;
  int skipped = 0;  // malformed or unusable records
};

inline LogReadResult read_sensor_log(std::istream& in) {
  LogReadResult res;
  std::map<int, ToFScan> sensors;  // templates carrying extrinsic and rays
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "tof_sensor") {
        ToFScan tpl;
        tpl.sensor_id = j.at("sensor").get<int>();
        tpl.arclength = j.at("s").get<double>();
        tpl.extrinsic = transform_from_json(j.at("extrinsic"));
        for (const auto& r : j.at("rays")) tpl.rays.push_back(from_json_array<Eigen::Vector3d>(r));
        sensors[tpl.sensor_id] = std::move(tpl);
      } else if (type == "tof") {
        const auto it = sensors.find(j.at("sensor").get<int>());
        if (it == sensors.end()) throw IoError("frame from an undeclared sensor");
        ToFScan s = it->second;
        s.timestamp = j.at("t").get<double>();
        for (const auto& r : j.at("returns")) {
          ToFReturn ret{r.at(0).get<int>(), r.at(1).get<double>(), r.at(2).get<bool>()};
          if (ret.ray < 0 || ret.ray >= static_cast<int>(s.rays.size())) throw IoError("ray index out of range");
          s.returns.push_back(ret);
        }
        res.log.scans.push_back(std::move(s));
      } else if (type == "gyro") {
        GyroMeasurement g;
        g.sensor_id = j.at("sensor").get<int>();
        g.timestamp = j.at("t").get<double>();
        g.arclength = j.at("s").get<double>();
        g.angular_rate = from_json_array<Eigen::Vector3d>(j.at("w"));
        g.stationary = j.value("stationary", false);
        res.log.gyros.push_back(g);
      } else if (type == "strain") {
        StrainMeasurement m;
        m.timestamp = j.at("t").get<double>();
        m.arclength = j.at("s").get<double>();
        m.bending_angle = j.at("theta").get<double>();
        m.curvature = j.at("kappa").get<double>();
        if (m.curvature < 0.0) throw IoError("negative curvature");
        res.log.strains.push_back(m);
      } else {
        throw IoError("unknown record type");
      }
    } catch (const std::exception&) {
      ++res.skipped;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Ground truth

struct ScanTruth {
  int sensor_id = 0;
  double timestamp = 0.0;
  std::vector<std::optional<double>> ranges;  // per ray
  std::vector<std::string> labels;            // per ray, empty for no hit
};

struct TruthLog {
  std::vector<RingPose> ring_poses;
  std::map<int, Eigen::Vector3d> gyro_bias;
  std::vector<ScanTruth> scans;
  std::vector<std::string> anomaly_labels;  // objects present in the true scene only
};

inline void write_truth_log(std::ostream& out, const TruthLog& truth) {
  for (const auto& l : truth.anomaly_labels) out << json{{"type", "anomaly"}, {"label", l}}.dump() << '\n';
  for (const auto& [id, b] : truth.gyro_bias) {
    out << json{{"type", "gyro_bias"}, {"sensor", id}, {"b", to_json_array(b)}}.dump() << '\n';
  }
  for (const auto& r : truth.ring_poses) {
    out << json{{"type", "ring_pose"}, {"ring", r.ring}, {"s", r.arclength}, {"t", r.timestamp},
                {"pose", transform_json(r.pose)}}.dump()
        << '\n';
  }
  for (const auto& s : truth.scans) {
    json ranges = json::array();
    for (const auto& r : s.ranges) ranges.push_back(r ? json(*r) : json(nullptr));
    out << json{{"type", "tof_truth"}, {"sensor", s.sensor_id}, {"t", s.timestamp}, {"ranges", ranges},
                {"labels", s.labels}}.dump()
        << '\n';
  }
}

inline TruthLog read_truth_log(std::istream& in) {
  TruthLog t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "anomaly") {
        t.anomaly_labels.push_back(j.at("label").get<std::string>());
      } else if (type == "gyro_bias") {
        t.gyro_bias[j.at("sensor").get<int>()] = from_json_array<Eigen::Vector3d>(j.at("b"));
      } else if (type == "ring_pose") {
        t.ring_poses.push_back({j.at("ring").get<int>(), j.at("s").get<double>(), j.at("t").get<double>(),
                                transform_from_json(j.at("pose"))});
      } else if (type == "tof_truth") {
        ScanTruth s;
        s.sensor_id = j.at("sensor").get<int>();
        s.timestamp = j.at("t").get<double>();
        for (const auto& r : j.at("ranges")) {
          s.ranges.push_back(r.is_null() ? std::nullopt : std::optional<double>(r.get<double>()));
        }
        s.labels = j.at("labels").get<std::vector<std::string>>();
        t.scans.push_back(std::move(s));
      } else {
        throw IoError("unknown record type '" + type + "'");
      }
    } catch (const std::exception& e) {
      throw IoError("truth log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Estimate

inline json report_json(const SolveReport& r) {
  return {{"iterations", r.iterations},
          {"final_cost", r.final_cost},
          {"cost_trace", r.cost_trace},
          {"converged", r.converged},
          {"final_damping", r.final_damping},
          {"tof_matched", r.tof_matched},
          {"tof_unmatched", r.tof_unmatched},
          {"max_pose_covariance_trace", r.max_pose_covariance_trace}};
}

inline SolveReport report_from_json(const json& j) {
  SolveReport r;
  r.iterations = j.at("iterations").get<int>();
  r.final_cost = j.at("final_cost").get<double>();
  r.cost_trace = j.at("cost_trace").get<std::vector<double>>();
  r.converged = j.at("converged").get<bool>();
  r.final_damping = j.at("final_damping").get<double>();
  r.tof_matched = j.at("tof_matched").get<int>();
  r.tof_unmatched = j.at("tof_unmatched").get<int>();
  r.max_pose_covariance_trace = j.at("max_pose_covariance_trace").get<double>();
  return r;
}

inline json node_json(const StateNode& n) {
  return {{"pose", transform_json(n.pose)},
          {"strain", to_json_array(n.strain)},
          {"velocity", to_json_array(n.velocity)},
          {"covariance", to_json_array(n.covariance)}};
}

inline StateNode node_from_json(const json& j) {
  StateNode n;
  n.pose = transform_from_json(j.at("pose"));
  n.strain = from_json_array<Twist>(j.at("strain"));
  n.velocity = from_json_array<Twist>(j.at("velocity"));
  n.covariance = from_json_array<Matrix18d>(j.at("covariance"));
  return n;
}

/// Estimate plus run bookkeeping; `columns[k][n]` is node (n, k).
inline json estimate_json(const Estimate& e, int skipped_records = 0) {
  json cols = json::array();
  for (const auto& c : e.columns) {
    json col = json::array();
    for (const auto& n : c) col.push_back(node_json(n));
    cols.push_back(col);
  }
  json reports = json::array();
  for (const auto& r : e.reports) reports.push_back(report_json(r));
  json bias = json::object();
  for (const auto& [id, b] : e.gyro_bias) bias[std::to_string(id)] = to_json_array(b);
  return {{"base_pose", transform_json(e.base_pose)},
          {"arclengths", e.arclengths},
          {"times", e.times},
          {"columns", cols},
          {"reports", reports},
          {"gyro_bias", bias},
          {"skipped_records", skipped_records}};
}

inline Estimate estimate_from_json(const json& j) {
  Estimate e;
  e.base_pose = transform_from_json(j.at("base_pose"));
  e.arclengths = j.at("arclengths").get<std::vector<double>>();
  e.times = j.at("times").get<std::vector<double>>();
  for (const auto& c : j.at("columns")) {
    std::vector<StateNode> col;
    for (const auto& n : c) col.push_back(node_from_json(n));
    if (col.size() != e.arclengths.size()) throw IoError("estimate: column size does not match the arclengths");
    e.columns.push_back(std::move(col));
  }
  if (e.columns.size() != e.times.size() || e.times.empty()) {
    throw IoError("estimate: column count does not match the times");
  }
  for (const auto& r : j.at("reports")) e.reports.push_back(report_from_json(r));
  for (const auto& [id, b] : j.at("gyro_bias").items()) e.gyro_bias[std::stoi(id)] = from_json_array<Eigen::Vector3d>(b);
  return e;
}

// ---------------------------------------------------------------------------
// Anomalies and clouds

/// Counts, rates and the flagged points with their scores.
inline json anomaly_json(const AnomalyReport& r, const ReconstructedCloud& cloud) {
  json pts = json::array();
  for (const auto& s : r.scores) {
    if (!s.flagged) continue;
    const auto& p = cloud.at(static_cast<std::size_t>(s.point));
    pts.push_back({{"index", s.point},
                   {"map_point", s.map_point},
                   {"score", std::isfinite(s.score) ? json(s.score) : json("inf")},
                   {"position", to_json_array(p.position)},
                   {"sensor", p.sensor_id},
                   {"t", p.timestamp}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"tau", std::isfinite(r.tau) ? json(r.tau) : json("inf")},
          {"points", static_cast<int>(r.scores.size())},
          {"flagged", r.flagged},
          {"regularized", r.regularized},
          {"precision", opt(r.precision)},
          {"recall", opt(r.recall)},
          {"false_positive_rate", opt(r.false_positive_rate)},
          {"anomalies", pts}};
}

/// x y z, the six covariance entries, covariance eigenvalues, sensor, t,
/// range, ray.
inline ply::VertexTable cloud_to_ply(const ReconstructedCloud& cloud) {
  ply::VertexTable t;
  const char* names[] = {"x",       "y",       "z",       "cov_xx",  "cov_xy", "cov_xz", "cov_yy",
                         "cov_yz",  "cov_zz",  "cov_ev0", "cov_ev1", "cov_ev2", "sensor", "t", "range", "ray"};
  for (const char* n : names) t.add_column(n).reserve(cloud.size());
  for (const auto& p : cloud) {
    const Eigen::Vector3d ev = covariance_eigenvalues(p.covariance);
    const double row[] = {p.position.x(),      p.position.y(),      p.position.z(),      p.covariance(0, 0),
                          p.covariance(0, 1),  p.covariance(0, 2),  p.covariance(1, 1),  p.covariance(1, 2),
                          p.covariance(2, 2),  ev(0),               ev(1),               ev(2),
                          static_cast<double>(p.sensor_id),         p.timestamp,         p.range,
                          static_cast<double>(p.ray)};
    for (std::size_t c = 0; c < t.columns.size(); ++c) t.columns[c].push_back(row[c]);
  }
  return t;
}

inline ReconstructedCloud cloud_from_ply(const ply::VertexTable& t) {
  ReconstructedCloud cloud(t.size());
  const auto& x = t.column("x");
  const auto& y = t.column("y");
  const auto& z = t.column("z");
  const char* cov[6] = {"cov_xx", "cov_xy", "cov_xz", "cov_yy", "cov_yz", "cov_zz"};
  const int ij[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto& p = cloud[i];
    p.position = {x[i], y[i], z[i]};
    for (int c = 0; c < 6; ++c) {
      const double v = t.column(cov[c])[i];
      p.covariance(ij[c][0], ij[c][1]) = v;
      p.covariance(ij[c][1], ij[c][0]) = v;
    }
    if (t.has("sensor")) p.sensor_id = static_cast<int>(t.column("sensor")[i]);
    if (t.has("t")) p.timestamp = t.column("t")[i];
    if (t.has("range")) p.range = t.column("range")[i];
    if (t.has("ray")) p.ray = static_cast<int>(t.column("ray")[i]);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Files

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

inline json read_json_file(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("'" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(1) << '\n';
}

}  // namespace crloc::io
