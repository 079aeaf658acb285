#include "crloc/crloc.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace crloc {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("crloc_test_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string operator/(const std::string& f) const { return (path_ / f).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig short_run(const std::string& out, double duration = 1.5) {
  RunConfig c;
  c.sim.duration = duration;
  c.sim.seed = 42;
  c.map.sample_spacing = 0.02;
  c.paths.out = out;
  return c;
}

TEST(Config, RoundTripIsIdentity) {
  TempDir dir("config_roundtrip");
  RunConfig c;
  c.sim.seed = 1234567890123ULL;
  c.sim.duration = 3.25;
  c.sim.robot.base = Transform(rot_y(0.3) * rot_x(-1.1), Eigen::Vector3d(0.1, -0.2, 0.93));
  c.estimator.priors.shape_sigma = 0.0123456789;
  c.tau = 7.5;
  c.paths.map = "somewhere.ply";
  save_config(dir / "a.json", c);
  const RunConfig back = load_config(dir / "a.json");
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  save_config(dir / "b.json", back);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
}

TEST(Config, DefaultsAreValidAndComplete) {
  const nlohmann::json j = config_to_json(RunConfig{});
  EXPECT_NO_THROW(validate(RunConfig{}));
  for (const char* section : {"robot", "tof", "gyro", "strain", "sim", "noise", "priors", "solver", "map", "detect",
                              "paths"}) {
    EXPECT_TRUE(j.contains(section)) << section;
  }
  EXPECT_EQ(j["tof"]["rows"], 8);
  EXPECT_EQ(j["tof"]["max_range"], 4.0);
  EXPECT_EQ(j["tof"]["rate"], 15.0);
  EXPECT_EQ(j["gyro"]["sigma"], 0.01);
  EXPECT_EQ(j["strain"]["spacing"], 0.03);
  EXPECT_EQ(j["detect"]["tau"], 9.0);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_json({{"solver", {{"window_lenght", 2.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"solvr", {{"window_length", 2.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
  EXPECT_NO_THROW(config_from_json({{"solver", {{"window_length", 2.0}}}}));
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW(config_from_json({{"noise", {{"gyro_sigma", 0.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"noise", {{"tof_extra_sigma", -1.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"priors", {{"shape_sigma", 0.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"tof", {{"rate", 0.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"solver", {{"weak_observability_trace", 0.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"solver", {{"window_length", "long"}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"sim", {{"anomaly", "elephant"}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"noise", {{"tof_knee1", 2.0}}}}), ConfigError);
}

TEST(Config, EnvironmentOverrides) {
  std::map<std::string, std::string> env{{"CRLOC_SOLVER__WINDOW_LENGTH", "0.7"},
                                         {"CRLOC_PATHS__OUT", "elsewhere"},
                                         {"CRLOC_SIM__SEED", "77"}};
  auto getenv_fn = [&](const char* name) -> const char* {
    const auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  const RunConfig c = config_from_json(apply_env_overrides({{"solver", {{"window_length", 2.0}}}}, getenv_fn));
  EXPECT_EQ(c.estimator.window_length, 0.7);
  EXPECT_EQ(c.paths.out, "elsewhere");
  EXPECT_EQ(c.sim.seed, 77u);
}

TEST(Config, MissingInputPathsAreConfigErrors) {
  RunConfig c;
  c.paths.log = "/nonexistent/log.jsonl";
  EXPECT_THROW(check_input_paths(c), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Io, SensorLogRoundTrip) {
  sim::SimConfig cfg;
  cfg.duration = 1.2;
  const sim::SimOutput out = sim::simulate(cfg, sim::default_scene());
  std::stringstream ss;
  io::write_sensor_log(ss, sensor_log(out));
  const io::LogReadResult back = io::read_sensor_log(ss);
  EXPECT_EQ(back.skipped, 0);
  ASSERT_EQ(back.log.scans.size(), out.scans.size());
  ASSERT_EQ(back.log.gyros.size(), out.gyros.size());
  ASSERT_EQ(back.log.strains.size(), out.strains.size());
  // Records come back in time order; match scans by (sensor, time).
  std::map<std::pair<int, double>, const ToFScan*> orig;
  for (const auto& s : out.scans) orig[{s.sensor_id, s.timestamp}] = &s;
  for (const auto& s : back.log.scans) {
    const ToFScan& o = *orig.at({s.sensor_id, s.timestamp});
    ASSERT_EQ(s.returns.size(), o.returns.size());
    for (std::size_t i = 0; i < s.returns.size(); ++i) {
      EXPECT_EQ(s.returns[i].distance, o.returns[i].distance);
      EXPECT_EQ(s.returns[i].ray, o.returns[i].ray);
      EXPECT_EQ(s.returns[i].valid, o.returns[i].valid);
    }
    EXPECT_EQ(s.extrinsic.matrix(), o.extrinsic.matrix());
    EXPECT_EQ(s.arclength, o.arclength);
    EXPECT_EQ(s.rays, o.rays);
  }
  double sum_in = 0.0, sum_out = 0.0;
  for (const auto& g : out.gyros) sum_in += g.angular_rate.sum();
  for (const auto& g : back.log.gyros) sum_out += g.angular_rate.sum();
  EXPECT_NEAR(sum_in, sum_out, 1e-12);
}

TEST(Io, MalformedRecordsAreSkippedAndCounted) {
  std::stringstream ss;
  ss << R"({"type":"gyro","sensor":0,"t":0.0,"s":0.2,"w":[0,0,0],"stationary":true})" << '\n'
     << "not json\n"
     << R"({"type":"tof","sensor":3,"t":0.1,"returns":[]})" << '\n'  // undeclared sensor
     << R"({"type":"strain","t":0.0,"s":0.1,"theta":0.1,"kappa":-1})" << '\n'
     << R"({"type":"weather","t":0.0})" << '\n'
     << "\n"
     << R"({"type":"strain","t":0.0,"s":0.1,"theta":0.1,"kappa":1})" << '\n';
  const io::LogReadResult r = io::read_sensor_log(ss);
  EXPECT_EQ(r.skipped, 4);
  EXPECT_EQ(r.log.gyros.size(), 1u);
  EXPECT_EQ(r.log.strains.size(), 1u);
}

TEST(Io, EstimateRoundTrip) {
  test::Gen gen(3);
  Estimate e;
  e.base_pose = gen.transform();
  e.arclengths = {0.0, 0.2, 0.5};
  e.times = {0.0, 0.1};
  for (int k = 0; k < 2; ++k) {
    std::vector<StateNode> col(3);
    for (auto& n : col) {
      n.pose = gen.transform();
      n.strain = gen.twist();
      n.velocity = gen.twist();
      n.covariance = Matrix18d::Random();
    }
    e.columns.push_back(col);
  }
  SolveReport rep;
  rep.iterations = 4;
  rep.cost_trace = {3.0, 2.0, 1.5};
  e.reports.push_back(rep);
  e.gyro_bias[2] = gen.vec3();
  const Estimate back = io::estimate_from_json(nlohmann::json::parse(io::estimate_json(e).dump()));
  EXPECT_EQ(io::estimate_json(back), io::estimate_json(e));
  EXPECT_EQ(back.columns[1][2].covariance, e.columns[1][2].covariance);
}

TEST(Io, CloudPlyKeepsCovariance) {
  test::Gen gen(4);
  ReconstructedCloud cloud(50);
  for (auto& p : cloud) {
    p.position = gen.vec3();
    Eigen::Matrix3d a = Eigen::Matrix3d::Random();
    p.covariance = a * a.transpose() * 1e-4;
    p.sensor_id = gen.integer(0, 9);
    p.timestamp = gen.uniform(0, 10);
    p.range = gen.uniform(0.03, 4);
    p.ray = gen.integer(0, 63);
  }
  std::stringstream ss;
  ply::write(ss, io::cloud_to_ply(cloud));
  const ReconstructedCloud back = io::cloud_from_ply(ply::read(ss));
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_LE((back[i].position - cloud[i].position).norm(), 1e-9);
    EXPECT_LE((back[i].covariance - cloud[i].covariance).norm(), 1e-9 * cloud[i].covariance.norm());
    EXPECT_EQ(back[i].sensor_id, cloud[i].sensor_id);
    EXPECT_EQ(back[i].ray, cloud[i].ray);
  }
}

TEST(Pipeline, SimulateIsDeterministicOnDisk) {
  TempDir a("sim_a"), b("sim_b");
  cmd_simulate(short_run(a.path().string()));
  cmd_simulate(short_run(b.path().string()));
  for (const char* f : {kLogFile, kTruthFile, kPriorMapFile, kTrueMapFile}) {
    const std::string x = slurp(a / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / f)) << f;
  }
}

TEST(Pipeline, ZeroDurationHasOnlyInitialRecords) {
  TempDir dir("sim_zero");
  const auto run = cmd_simulate(short_run(dir.path().string(), 0.0));
  // Each ToF sensor fires once at its phase offset, which is past t = 0 for
  // all but the first.
  for (const auto& s : run.output.scans) EXPECT_EQ(s.timestamp, 0.0);
  for (const auto& g : run.output.gyros) EXPECT_EQ(g.timestamp, 0.0);
  for (const auto& m : run.output.strains) EXPECT_EQ(m.timestamp, 0.0);
  EXPECT_EQ(run.output.gyros.size(), 3u);
  EXPECT_FALSE(run.output.strains.empty());
}

TEST(Pipeline, RecordCountsFollowTheRates) {
  RunConfig c = short_run("", 10.0);
  const sim::SimOutput out = sim::simulate(c.sim, sim::default_scene());
  std::map<int, int> tof, gyro;
  for (const auto& s : out.scans) ++tof[s.sensor_id];
  for (const auto& g : out.gyros) ++gyro[g.sensor_id];
  EXPECT_EQ(tof.size(), 10u);
  for (const auto& [id, n] : tof) EXPECT_NEAR(n, 10.0 * 15.0, 1.0) << "tof " << id;
  for (const auto& [id, n] : gyro) EXPECT_NEAR(n, 10.0 * 100.0, 1.0) << "gyro " << id;
  const auto stations = sim::strain_stations(0.5, 0.03, 0.005).size();
  EXPECT_NEAR(static_cast<double>(out.strains.size()) / stations, 10.0 * 20.0, 1.0);
}

TEST(Pipeline, StagesReproduceIdenticalArtifacts) {
  TempDir a("stages_a"), b("stages_b");
  for (const TempDir* d : {&a, &b}) {
    RunConfig c = short_run(d->path().string());
    cmd_simulate(c);
    c.paths.log = *d / kLogFile;
    c.paths.map = *d / kPriorMapFile;
    c.paths.truth = *d / kTruthFile;
    cmd_localize(c);
    c.paths.estimate = *d / kEstimateFile;
    cmd_reconstruct(c);
    c.paths.cloud = *d / kCloudFile;
    cmd_detect(c);
    cmd_eval(c, "matched");
  }
  for (const char* f : {kEstimateFile, kCloudFile, kAnomalyFile, kMetricsFile}) {
    const std::string x = slurp(a / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / f)) << f;
  }
}

TEST(Pipeline, DetectWithInfiniteThresholdFlagsNothing) {
  TempDir dir("detect_inf");
  RunConfig c = short_run(dir.path().string());
  cmd_simulate(c);
  c.paths.log = dir / kLogFile;
  c.paths.map = dir / kPriorMapFile;
  cmd_localize(c);
  c.paths.estimate = dir / kEstimateFile;
  const ReconstructedCloud cloud = cmd_reconstruct(c);
  ASSERT_FALSE(cloud.empty());
  c.paths.cloud = dir / kCloudFile;
  c.tau = std::numeric_limits<double>::infinity();
  const AnomalyReport rep = cmd_detect(c);
  EXPECT_EQ(rep.flagged, 0);
  EXPECT_EQ(rep.scores.size(), cloud.size());
  EXPECT_EQ(io::read_json_file(dir / kAnomalyFile)["tau"], "inf");
}

TEST(Pipeline, EvalOfEstimateAgainstItselfIsZero) {
  TempDir dir("eval_self");
  RunConfig c = short_run(dir.path().string());
  cmd_simulate(c);
  c.paths.log = dir / kLogFile;
  c.paths.map = dir / kPriorMapFile;
  cmd_localize(c);
  const Estimate est = load_estimate(dir / kEstimateFile);
  const StateGrid g = est.grid();
  io::TruthLog self;
  for (double t : g.times()) {
    for (std::size_t r = 0; r < c.sim.robot.ring_stations.size(); ++r) {
      const double s = c.sim.robot.ring_stations[r];
      self.ring_poses.push_back({static_cast<int>(r), s, t, interpolate_pose(g, s, t)});
    }
  }
  {
    auto out = io::open_out(dir / "self_truth.jsonl");
    io::write_truth_log(out, self);
  }
  c.paths.estimate = dir / kEstimateFile;
  c.paths.truth = dir / "self_truth.jsonl";
  const LocalizationMetrics m = cmd_eval(c, "self");
  EXPECT_EQ(m.rings.size(), 3u);
  EXPECT_LE(m.pooled.translation.max, 1e-12);
  EXPECT_LE(m.pooled.rotation.max, 1e-7);
  const std::string csv = slurp(dir / kMetricsFile);
  EXPECT_NE(csv.find("self,0,"), std::string::npos);
  EXPECT_NE(csv.find("self,pooled,"), std::string::npos);
}

TEST(Pipeline, GyroOnlyLogIsFlaggedWeaklyObservable) {
  RunConfig c = short_run("", 2.5);
  const auto run = run_simulation(c);
  SensorLog gyro_only{{}, run.output.gyros, {}};
  const LocalizeResult r = localize_log(gyro_only, nullptr, c);
  EXPECT_TRUE(r.weak_observability) << r.max_pose_covariance_trace;

  const auto map = std::make_shared<const EnvironmentMap>(sample_map(run.nominal, c, c.sim.seed));
  const LocalizeResult full = localize_log(sensor_log(run.output), map, c);
  EXPECT_FALSE(full.weak_observability) << full.max_pose_covariance_trace;
  EXPECT_GT(r.max_pose_covariance_trace, 10.0 * full.max_pose_covariance_trace);
}

TEST(Pipeline, EmptyLogIsADataError) {
  TempDir dir("empty_log");
  { std::ofstream(dir / "log.jsonl") << "garbage\n"; }
  RunConfig c;
  c.paths.log = dir / "log.jsonl";
  c.paths.out = dir.path().string();
  EXPECT_THROW(cmd_localize(c), DataError);
  EXPECT_THROW(localize_log(SensorLog{}, nullptr, c), DataError);
}

TEST(Pipeline, TooFewStationarySamplesIsACalibrationFailure) {
  RunConfig c = short_run("", 0.3);
  const auto run = run_simulation(c);
  EXPECT_THROW(localize_log(SensorLog{{}, run.output.gyros, {}}, nullptr, c), InsufficientCalibration);
}

}  // namespace
}  // namespace crloc
