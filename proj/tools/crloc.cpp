// crloc: simulate, localize, reconstruct, detect, eval.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver failure.

#include "crloc/crloc.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kSolverError = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::optional<double> window;
  std::optional<double> tau;
  std::optional<std::string> anomaly;
  std::string scene, map, log, truth, estimate, cloud, out;
};

crloc::RunConfig resolve(const Overrides& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw crloc::ConfigError("cannot open config '" + o.config + "'");
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw crloc::ConfigError("config '" + o.config + "': " + e.what());
    }
  }
  j = crloc::apply_env_overrides(std::move(j));
  // Command-line flags win over the file and the environment.
  if (o.seed) j["sim"]["seed"] = *o.seed;
  if (o.duration) j["sim"]["duration"] = *o.duration;
  if (o.window) j["solver"]["window_length"] = *o.window;
  if (o.anomaly) j["sim"]["anomaly"] = *o.anomaly;
  for (const auto& [key, value] : {std::pair<const char*, const std::string*>{"scene", &o.scene},
                                   {"map", &o.map},
                                   {"log", &o.log},
                                   {"truth", &o.truth},
                                   {"estimate", &o.estimate},
                                   {"cloud", &o.cloud},
                                   {"out", &o.out}}) {
    if (!value->empty()) j["paths"][key] = *value;
  }
  crloc::RunConfig c = crloc::config_from_json(j);
  // Set after parsing since JSON cannot carry an infinite tau.
  if (o.tau) {
    if (std::isnan(*o.tau)) throw crloc::ConfigError("--tau must be a number");
    c.tau = *o.tau;
  }
  crloc::check_input_paths(c);
  return c;
}

void print_metrics(const crloc::LocalizationMetrics& m) {
  for (const auto& r : m.rings) {
    std::printf("ring %d: translation MAE %.3f cm, rotation MAE %.3f deg (%d samples)\n", r.ring,
                100.0 * r.translation.mae, r.rotation.mae * 180.0 / M_PI, r.translation.count);
  }
  std::printf("pooled: translation MAE %.3f cm RMSE %.3f cm, rotation MAE %.3f deg RMSE %.3f deg\n",
              100.0 * m.pooled.translation.mae, 100.0 * m.pooled.translation.rmse,
              m.pooled.rotation.mae * 180.0 / M_PI, m.pooled.rotation.rmse * 180.0 / M_PI);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuum-robot localization against a prior map"};
  app.require_subcommand(1);
  Overrides o;
  std::string condition = "run";
  std::string dump_config;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--out", o.out, "Output directory");
  };

  auto* sim = app.add_subcommand("simulate", "Generate sensor logs, ground truth and maps");
  common(sim);
  sim->add_option("--seed", o.seed, "Random seed");
  sim->add_option("--scene", o.scene, "Mesh file or directory (default: built-in desk scene)");
  sim->add_option("--duration", o.duration, "Trajectory duration (s)");
  sim->add_option("--anomaly", o.anomaly, "Object planted in the true scene only: cube or none");
  sim->add_option("--dump-config", dump_config, "Also write the resolved configuration here");

  auto* loc = app.add_subcommand("localize", "Sliding-window estimation over a sensor log");
  common(loc);
  loc->add_option("--log", o.log, "Sensor log (JSON lines)");
  loc->add_option("--map", o.map, "Prior map (PLY)");
  loc->add_option("--window", o.window, "Window length (s)");

  auto* rec = app.add_subcommand("reconstruct", "Project range returns through the estimate");
  common(rec);
  rec->add_option("--log", o.log, "Sensor log (JSON lines)");
  rec->add_option("--estimate", o.estimate, "Estimate JSON");

  auto* det = app.add_subcommand("detect", "Flag reconstructed points inconsistent with the map");
  common(det);
  det->add_option("--cloud", o.cloud, "Reconstructed cloud (PLY)");
  det->add_option("--map", o.map, "Prior map (PLY)");
  det->add_option("--tau", o.tau, "Squared Mahalanobis threshold (inf disables)");
  det->add_option("--truth", o.truth, "Ground truth log, for precision and recall");

  auto* ev = app.add_subcommand("eval", "Localization error against ground truth");
  common(ev);
  ev->add_option("--estimate", o.estimate, "Estimate JSON");
  ev->add_option("--truth", o.truth, "Ground truth log");
  ev->add_option("--condition", condition, "Condition name for the metrics table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    const crloc::RunConfig cfg = resolve(o);
    if (sim->parsed()) {
      const auto run = crloc::cmd_simulate(cfg);
      if (!dump_config.empty()) crloc::save_config(dump_config, cfg);
      std::printf("simulated %.2f s: %zu range frames, %zu gyro, %zu strain samples -> %s\n", cfg.sim.duration,
                  run.output.scans.size(), run.output.gyros.size(), run.output.strains.size(), cfg.paths.out.c_str());
    } else if (loc->parsed()) {
      const auto r = crloc::cmd_localize(cfg);
      int iters = 0;
      for (const auto& rep : r.estimate.reports) iters += rep.iterations;
      std::printf("localized %zu knot columns in %zu windows (%d iterations), %d records skipped\n",
                  r.estimate.times.size(), r.estimate.reports.size(), iters, r.skipped_records);
      if (r.weak_observability) {
        std::printf("warning: weak observability, max pose covariance trace %.3g\n", r.max_pose_covariance_trace);
      }
    } else if (rec->parsed()) {
      const auto cloud = crloc::cmd_reconstruct(cfg);
      std::printf("reconstructed %zu points\n", cloud.size());
    } else if (det->parsed()) {
      const auto rep = crloc::cmd_detect(cfg);
      std::printf("%d of %zu points flagged at tau %g\n", rep.flagged, rep.scores.size(), rep.tau);
      if (rep.regularized > 0) {
        std::fprintf(stderr, "warning: %d singular covariances regularized\n", rep.regularized);
      }
      if (rep.recall) std::printf("recall %.3f\n", *rep.recall);
      if (rep.precision) std::printf("precision %.3f\n", *rep.precision);
      if (rep.false_positive_rate) std::printf("false-positive rate %.4f\n", *rep.false_positive_rate);
    } else if (ev->parsed()) {
      print_metrics(crloc::cmd_eval(cfg, condition));
    }
  } catch (const crloc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const crloc::UnobservableProblem& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kSolverError;
  } catch (const crloc::InsufficientCalibration& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kSolverError;
  } catch (const crloc::NotPositiveDefinite& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kSolverError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  }
  return kOk;
}
