#pragma once

// Pipeline stages behind the command-line tool. Each stage reads its inputs
// from the paths in RunConfig and writes its artifacts into paths.out.

#include "crloc/config.hpp"
#include "crloc/envmap.hpp"
#include "crloc/io.hpp"
#include "crloc/localize.hpp"
#include "crloc/ply.hpp"
#include "crloc/recon.hpp"
#include "crloc/sim/mesh.hpp"
#include "crloc/sim/scene.hpp"
#include "crloc/sim/simulate.hpp"
#include "crloc/solver.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc {

/// Bad or missing input data (as opposed to a bad configuration).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

// Artifact names inside paths.out.
inline constexpr const char* kLogFile = "log.jsonl";
inline constexpr const char* kTruthFile = "truth.jsonl";
inline constexpr const char* kPriorMapFile = "map_prior.ply";
inline constexpr const char* kTrueMapFile = "map_true.ply";
inline constexpr const char* kEstimateFile = "estimate.json";
inline constexpr const char* kCloudFile = "cloud.ply";
inline constexpr const char* kAnomalyFile = "anomalies.json";
inline constexpr const char* kMetricsFile = "metrics.csv";

/// Meshes from a file or from every .obj/.stl in a directory (sorted by name,
/// labelled by file stem). An empty path gives the built-in desk scene.
inline sim::SimScene load_scene(const std::string& path) {
  if (path.empty()) return sim::default_scene();
  sim::SimScene scene;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".obj" || ext == ".stl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) scene.meshes.push_back(sim::read_mesh(f.string(), f.stem().string()));
  } else {
    scene.meshes.push_back(sim::read_mesh(path, fs::path(path).stem().string()));
  }
  if (scene.triangles().empty()) throw sim::MeshError("scene '" + path + "' has no triangles");
  return scene;
}

inline MapBuildOptions map_options(const RunConfig& c) {
  MapBuildOptions o;
  o.voxel_size = c.map.voxel_size;
  o.k_neighbors = c.map.k_neighbors;
  o.interior_point = c.map.interior_point;
  o.prior_sigma = c.map.prior_sigma;
  return o;
}

/// Augmented map sampled from scene surfaces.
inline EnvironmentMap sample_map(const sim::SimScene& scene, const RunConfig& c, std::uint64_t seed) {
  return build_map(sim::make_prior_map(scene, c.map.sample_spacing, seed, c.map.darts_per_area), map_options(c));
}

struct SimulationRun {
  sim::SimScene nominal;     // what the prior map describes
  sim::SimScene true_scene;  // what the sensors see
  std::vector<std::string> anomaly_labels;
  sim::SimOutput output;
};

inline SimulationRun run_simulation(const RunConfig& c) {
  SimulationRun run;
  run.nominal = load_scene(c.paths.scene);
  run.true_scene = run.nominal;
  if (c.anomaly == "cube") {
    const sim::Mesh cube = sim::default_anomaly_cube();
    run.anomaly_labels.push_back(cube.label);
    run.true_scene = sim::apply_anomalies(run.nominal, {sim::add_object(cube)});
  }
  run.output = sim::simulate(c.sim, run.true_scene);
  return run;
}

inline SensorLog sensor_log(const sim::SimOutput& out) { return {out.scans, out.gyros, out.strains}; }

inline io::TruthLog truth_log(const SimulationRun& run) {
  io::TruthLog t;
  t.anomaly_labels = run.anomaly_labels;
  t.gyro_bias = run.output.gyro_bias;
  for (const auto& r : run.output.truth) t.ring_poses.push_back({r.ring, r.arclength, r.timestamp, r.pose});
  for (std::size_t i = 0; i < run.output.scans.size(); ++i) {
    const auto& s = run.output.scans[i];
    t.scans.push_back({s.sensor_id, s.timestamp, run.output.true_ranges[i], run.output.hit_labels[i]});
  }
  return t;
}

inline fs::path out_dir(const RunConfig& c) {
  const fs::path d = c.paths.out.empty() ? fs::path(".") : fs::path(c.paths.out);
  fs::create_directories(d);
  return d;
}

inline std::string require_path(const std::string& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " path given");
  if (!fs::exists(p)) throw DataError(std::string(what) + " '" + p + "' does not exist");
  return p;
}

/// Writes the sensor log, ground truth, and maps of the nominal and true scenes.
inline SimulationRun cmd_simulate(const RunConfig& c) {
  SimulationRun run = run_simulation(c);
  const fs::path d = out_dir(c);
  {
    auto out = io::open_out((d / kLogFile).string());
    io::write_sensor_log(out, sensor_log(run.output));
  }
  {
    auto out = io::open_out((d / kTruthFile).string());
    io::write_truth_log(out, truth_log(run));
  }
  ply::write_file((d / kPriorMapFile).string(), map_to_ply(sample_map(run.nominal, c, c.sim.seed)));
  ply::write_file((d / kTrueMapFile).string(), map_to_ply(sample_map(run.true_scene, c, c.sim.seed)));
  return run;
}

inline io::LogReadResult load_log(const std::string& path) {
  auto in = io::open_in(require_path(path, "sensor log"));
  io::LogReadResult r = io::read_sensor_log(in);
  if (r.log.empty()) throw DataError("sensor log '" + path + "' holds no usable records");
  return r;
}

inline std::shared_ptr<const EnvironmentMap> load_map(const std::string& path, const RunConfig& c) {
  return std::make_shared<const EnvironmentMap>(map_from_ply(ply::read_file(require_path(path, "map")), map_options(c)));
}

struct LocalizeResult {
  Estimate estimate;
  int skipped_records = 0;
  bool weak_observability = false;
  double max_pose_covariance_trace = 0.0;
};

inline LocalizeResult localize_log(const SensorLog& log, std::shared_ptr<const EnvironmentMap> map, const RunConfig& c) {
  LocalizeResult r;
  if (log.empty()) throw DataError("empty sensor log");
  r.estimate = localize(log, std::move(map), c.sim.robot.base, c.sim.robot.length, c.estimator);
  for (const auto& rep : r.estimate.reports) {
    r.max_pose_covariance_trace = std::max(r.max_pose_covariance_trace, rep.max_pose_covariance_trace);
  }
  r.weak_observability = r.max_pose_covariance_trace > c.weak_observability_trace;
  return r;
}

/// Sliding-window estimation over paths.log against paths.map. The map may be
/// omitted when range factors are disabled or the log has no range frames.
inline LocalizeResult cmd_localize(const RunConfig& c) {
  const io::LogReadResult log = load_log(c.paths.log);
  std::shared_ptr<const EnvironmentMap> map;
  if (!c.paths.map.empty()) {
    map = load_map(c.paths.map, c);
  } else if (c.estimator.use_tof && !log.log.scans.empty()) {
    throw ConfigError("localize: the log has range frames but no map was given");
  }
  LocalizeResult r = localize_log(log.log, map, c);
  r.skipped_records = log.skipped;
  io::json j = io::estimate_json(r.estimate, r.skipped_records);
  j["weak_observability"] = r.weak_observability;
  j["max_pose_covariance_trace"] = r.max_pose_covariance_trace;
  io::write_json_file((out_dir(c) / kEstimateFile).string(), j);
  return r;
}

inline Estimate load_estimate(const std::string& path) {
  try {
    return io::estimate_from_json(io::read_json_file(require_path(path, "estimate")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("estimate '" + path + "': " + e.what());
  }
}

/// Scans inside the estimated time span; frames after the last knot are
/// dropped rather than extrapolated.
inline std::vector<ToFScan> scans_within(const std::vector<ToFScan>& scans, const StateGrid& grid) {
  std::vector<ToFScan> out;
  for (const auto& s : scans) {
    if (s.timestamp >= grid.times().front() && s.timestamp <= grid.times().back()) out.push_back(s);
  }
  return out;
}

inline ReconstructedCloud cmd_reconstruct(const RunConfig& c) {
  const io::LogReadResult log = load_log(c.paths.log);
  const StateGrid grid = load_estimate(c.paths.estimate).grid();
  ReconstructedCloud cloud = reconstruct_scene(grid, scans_within(log.log.scans, grid), c.estimator.noise);
  ply::write_file((out_dir(c) / kCloudFile).string(), io::cloud_to_ply(cloud));
  return cloud;
}

/// Per-point ground-truth anomaly labels, by matching each point's frame and
/// ray to the simulator's hit labels.
inline std::vector<bool> anomaly_labels(const ReconstructedCloud& cloud, const io::TruthLog& truth) {
  const std::set<std::string> anomalous(truth.anomaly_labels.begin(), truth.anomaly_labels.end());
  std::map<int, std::vector<const io::ScanTruth*>> by_sensor;
  for (const auto& s : truth.scans) by_sensor[s.sensor_id].push_back(&s);
  for (auto& [id, v] : by_sensor) {
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->timestamp < b->timestamp; });
  }
  std::vector<bool> out(cloud.size(), false);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud[i];
    const auto it = by_sensor.find(p.sensor_id);
    if (it == by_sensor.end() || p.ray < 0) throw DataError("anomaly labels: point without a truth frame");
    const auto& v = it->second;
    auto j = std::lower_bound(v.begin(), v.end(), p.timestamp - 1e-6,
                              [](const io::ScanTruth* s, double t) { return s->timestamp < t; });
    if (j == v.end() || std::abs((*j)->timestamp - p.timestamp) > 1e-6 ||
        p.ray >= static_cast<int>((*j)->labels.size())) {
      throw DataError("anomaly labels: point without a truth frame");
    }
    out[i] = anomalous.count((*j)->labels[static_cast<std::size_t>(p.ray)]) > 0;
  }
  return out;
}

inline AnomalyReport cmd_detect(const RunConfig& c) {
  const ReconstructedCloud cloud = io::cloud_from_ply(ply::read_file(require_path(c.paths.cloud, "cloud")));
  const auto map = load_map(c.paths.map, c);
  std::vector<bool> labels;
  const std::vector<bool>* lp = nullptr;
  if (!c.paths.truth.empty()) {
    auto in = io::open_in(require_path(c.paths.truth, "truth"));
    labels = anomaly_labels(cloud, io::read_truth_log(in));
    lp = &labels;
  }
  AnomalyReport rep = detect_anomalies(cloud, *map, c.tau, lp);
  io::write_json_file((out_dir(c) / kAnomalyFile).string(), io::anomaly_json(rep, cloud));
  return rep;
}

inline LocalizationMetrics cmd_eval(const RunConfig& c, const std::string& condition = "run") {
  const StateGrid grid = load_estimate(c.paths.estimate).grid();
  auto in = io::open_in(require_path(c.paths.truth, "truth"));
  const io::TruthLog truth = io::read_truth_log(in);
  LocalizationMetrics m;
  try {
    m = evaluate_localization(grid, truth.ring_poses);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  auto out = io::open_out((out_dir(c) / kMetricsFile).string());
  out << metrics_csv(m, condition);
  return m;
}

}  // namespace crloc
