#pragma once

// Sliding-window Gauss-Newton with IRLS reweighting of the range factors and
// Laplace covariances.

#include "crloc/envmap.hpp"
#include "crloc/factors.hpp"
#include "crloc/linear.hpp"
#include "crloc/state.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crloc {

class UnobservableProblem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientCalibration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  int max_iterations = 20;
  double step_tolerance = 1e-6;
  double cost_tolerance = 1e-6;  // relative decrease below which an accepted step ends the loop
  double initial_damping = 1e-6;
  double damping_factor = 10.0;
  double max_damping = 1e2;
  bool robust = true;          // Cauchy IRLS on range factors; false = plain quadratic
  double match_radius = 0.1;   // nearest-neighbour gate (m)
  bool dense = false;          // dense Cholesky instead of block elimination
  bool compute_covariance = true;
};

/// Unary Gaussian prior on one node: pose residual log(T_bi T_bi,mean^-1),
/// strain and velocity residuals additive. Clamped blocks are ignored.
struct NodePrior {
  NodeIndex node;
  StateNode mean;
  Matrix18d information = Matrix18d::Identity();
};

/// Gaussian prior over all free variables of time column 0, summarizing the
/// knots that left the window.
struct ColumnPrior {
  std::vector<StateNode> mean;
  Eigen::MatrixXd information;  // layout order of column 0
};

struct Problem {
  StateGrid grid;
  std::shared_ptr<const EnvironmentMap> map;
  std::vector<ToFScan> scans;
  std::vector<GyroMeasurement> gyros;
  std::vector<StrainMeasurement> strains;
  std::map<int, Eigen::Vector3d> gyro_bias;
  NoiseModel noise;
  PriorConfig priors;
  bool include_priors = true;
  std::vector<NodePrior> node_priors;
  std::optional<ColumnPrior> head_prior;
  SolverOptions options;
  double window_length = 2.0;

  double t_start() const { return grid.times().front(); }
  double t_end() const { return grid.times().back(); }
};

struct NodeCovariance {
  NodeIndex node;
  Matrix18d covariance;
};

struct SolveReport {
  int iterations = 0;
  double final_cost = 0.0;
  std::vector<double> cost_trace;  // cost before the first step, then after each accepted step
  bool converged = false;
  double final_damping = 0.0;
  int tof_matched = 0;
  int tof_unmatched = 0;
  double max_pose_covariance_trace = 0.0;
  std::vector<NodeCovariance> covariances;
};

namespace detail {

struct EvalStats {
  int matched = 0;
  int unmatched = 0;
};

inline bool cell_touches(const GridCell& c, int column) { return c.k0 == column || c.k1 == column; }

inline void add_linearized(BlockTridiagonalSystem& sys, const VariableLayout& layout, const LinearizedFactor& f) {
  std::vector<int> idx;
  std::vector<Eigen::MatrixXd> jac;
  for (const auto& b : f.blocks) {
    idx.push_back(layout.index(b.node, b.block));
    jac.push_back(b.jacobian);
  }
  sys.add_factor(idx, jac, f.information, f.residual);
}

// Factor whose Jacobian on corner a is w_a I over one block: adds
// w_a w_b h to H and -w_a g to the rhs, with h = I W I and g = W r.
inline void add_interpolated(BlockTridiagonalSystem& sys, const VariableLayout& layout, const GridCell& cell,
                             VarBlock block, const Matrix6d& h, const Vector6d& g) {
  const auto corners = cell.corners();
  const auto wts = cell.weights();
  std::array<int, 4> idx;
  for (int a = 0; a < 4; ++a) idx[a] = wts[a] == 0.0 ? -1 : layout.index(corners[a], block);
  for (int a = 0; a < 4; ++a) {
    if (idx[a] < 0) continue;
    sys.add_rhs(idx[a], -wts[a] * g);
    for (int b = 0; b < 4; ++b) {
      if (idx[b] < 0 || layout.column_of(idx[a]) > layout.column_of(idx[b])) continue;
      sys.add_hessian(idx[a], idx[b], (wts[a] * wts[b]) * h);
    }
  }
}

inline Eigen::VectorXd node_prior_residual(const StateNode& x, const StateNode& mean, Eigen::MatrixXd* jac) {
  Eigen::VectorXd r(18);
  const Twist rp = log_se3(x.pose.inverse() * mean.pose);  // log(T_bi T_bi,mean^-1)
  r.head<6>() = rp;
  r.segment<6>(6) = x.strain - mean.strain;
  r.tail<6>() = x.velocity - mean.velocity;
  if (jac) {
    jac->setIdentity(18, 18);
    jac->topLeftCorner<6, 6>() = se3_left_jacobian_inverse(rp);
  }
  return r;
}

// Adds a prior over the free blocks of the listed nodes; information is
// expressed over those blocks in layout order.
inline double add_column_prior(const StateGrid& grid, const VariableLayout& layout, int column,
                               const std::vector<StateNode>& mean, const Eigen::MatrixXd& information,
                               BlockTridiagonalSystem* sys) {
  const int m = layout.column_size(column);
  Eigen::VectorXd r(m);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, m);
  const int off = layout.column_offset(column);
  for (int n = 0; n < grid.num_arclengths(); ++n) {
    Eigen::MatrixXd jn;
    const Eigen::VectorXd rn = node_prior_residual(grid.node(n, column), mean.at(n), &jn);
    for (int b = 0; b < 3; ++b) {
      const int i = layout.index(n, column, static_cast<VarBlock>(b));
      if (i < 0) continue;
      r.segment<6>(i - off) = rn.segment<6>(6 * b);
      j.block<6, 6>(i - off, i - off) = jn.block<6, 6>(6 * b, 6 * b);
    }
  }
  if (sys) {
    const Eigen::MatrixXd jw = j.transpose() * information;
    sys->add_hessian(off, off, jw * j);
    sys->add_rhs(off, -(jw * r));
  }
  return 0.5 * r.dot(information * r);
}

}  // namespace detail

/// Total cost at `grid` and, if `sys` is given, the normal equations linearized
/// there. With `only_column` >= 0, only factors touching that time column are
/// included (used to marginalize the departing column).
inline double evaluate(const Problem& p, const StateGrid& grid, const VariableLayout& layout,
                       BlockTridiagonalSystem* sys, detail::EvalStats* stats = nullptr, int only_column = -1) {
  double cost = 0.0;
  detail::EvalStats local;
  const bool filter = only_column >= 0;

  // Range factors, accumulated per scan at the interpolated pose.
  if (!p.scans.empty() && !p.map) {
    throw std::invalid_argument("evaluate: range measurements require a map");
  }
  for (const ToFScan& scan : p.scans) {
    const GridCell cell = locate(grid, scan.arclength, scan.timestamp);
    if (filter && !detail::cell_touches(cell, only_column)) continue;
    PoseInterpolation interp;
    Transform pose;
    if (sys) {
      interp = interpolate_pose_with_jacobians(grid, scan.arclength, scan.timestamp);
      pose = interp.pose;
    } else {
      pose = interpolate_pose(grid, scan.arclength, scan.timestamp);
    }
    Matrix6d h6 = Matrix6d::Zero();
    Vector6d g6 = Vector6d::Zero();
    for (std::size_t i = 0; i < scan.returns.size(); ++i) {
      const ToFReturn& ret = scan.returns[i];
      if (!ret.valid || !(ret.distance >= p.noise.tof.min_valid)) continue;
      const Eigen::Vector3d q = scan.extrinsic * (ret.distance * scan.rays[static_cast<std::size_t>(ret.ray)]);
      const Eigen::Vector3d world = pose * q;
      const auto nn = p.map->nearest_index(world, p.options.match_radius);
      if (!nn) {
        ++local.unmatched;
        continue;
      }
      ++local.matched;
      const PointToPlane pp = point_to_plane(pose, q, p.map->point(nn->index));
      const double r = p.noise.tof_variance(ret.distance);
      double w;
      if (p.options.robust) {
        w = cauchy_weight(pp.error, r);
        cost += cauchy_cost(pp.error, r);
      } else {
        w = 1.0 / r;
        cost += 0.5 * pp.error * pp.error / r;
      }
      if (sys) {
        h6.noalias() += w * pp.jacobian.transpose() * pp.jacobian;
        g6.noalias() += w * pp.jacobian.transpose() * pp.error;
      }
    }
    if (sys) {
      const auto corners = interp.cell.corners();
      std::array<int, 4> idx;
      for (int a = 0; a < 4; ++a) idx[a] = layout.index(corners[a], VarBlock::kPose);
      for (int a = 0; a < 4; ++a) {
        if (idx[a] < 0) continue;
        const Matrix6d jth = interp.jacobians[a].transpose() * h6;
        sys->add_rhs(idx[a], -(interp.jacobians[a].transpose() * g6));
        for (int b = 0; b < 4; ++b) {
          if (idx[b] < 0 || layout.column_of(idx[a]) > layout.column_of(idx[b])) continue;
          sys->add_hessian(idx[a], idx[b], jth * interp.jacobians[b]);
        }
      }
    }
  }

  // Gyroscope factors on the angular part of the interpolated velocity.
  const double gyro_info = 1.0 / (p.noise.gyro_sigma * p.noise.gyro_sigma);
  for (const GyroMeasurement& m : p.gyros) {
    const GridCell cell = locate(grid, m.arclength, m.timestamp);
    if (filter && !detail::cell_touches(cell, only_column)) continue;
    const auto it = p.gyro_bias.find(m.sensor_id);
    const Eigen::Vector3d bias = it == p.gyro_bias.end() ? Eigen::Vector3d::Zero() : it->second;
    const Eigen::Vector3d r = gyro_residual(grid, m, bias);
    cost += 0.5 * gyro_info * r.squaredNorm();
    if (sys) {
      // J_a = w_a [0 I]; the normal-equation blocks are scalar multiples of
      // the angular selector.
      Matrix6d sel = Matrix6d::Zero();
      sel.bottomRightCorner<3, 3>().setIdentity();
      Vector6d g = Vector6d::Zero();
      g.tail<3>() = gyro_info * r;
      detail::add_interpolated(*sys, layout, cell, VarBlock::kVelocity, gyro_info * sel, g);
    }
  }

  // Strain factors.
  const double strain_info = 1.0 / (p.noise.strain_sigma * p.noise.strain_sigma);
  for (const StrainMeasurement& m : p.strains) {
    const GridCell cell = locate(grid, m.arclength, m.timestamp);
    if (filter && !detail::cell_touches(cell, only_column)) continue;
    const Twist r = strain_residual(grid, m);
    cost += 0.5 * strain_info * r.squaredNorm();
    if (sys) {
      detail::add_interpolated(*sys, layout, cell, VarBlock::kStrain, strain_info * Matrix6d::Identity(),
                               strain_info * r);
    }
  }

  if (p.include_priors) {
    for (const PriorFactor& pf : prior_factors(grid)) {
      if (pf.kind == PriorKind::kClampedBase) continue;
      if (filter && pf.a.k != only_column && pf.b.k != only_column) continue;
      const LinearizedFactor f = linearize(grid, pf, p.priors);
      cost += f.cost();
      if (sys) detail::add_linearized(*sys, layout, f);
    }
  }

  for (const NodePrior& np : p.node_priors) {
    if (filter && np.node.k != only_column) continue;
    Eigen::MatrixXd j;
    const Eigen::VectorXd r = detail::node_prior_residual(grid.node(np.node), np.mean, &j);
    cost += 0.5 * r.dot(np.information * r);
    if (sys) {
      std::vector<int> idx;
      std::vector<Eigen::MatrixXd> jac;
      for (int b = 0; b < 3; ++b) {
        idx.push_back(layout.index(np.node, static_cast<VarBlock>(b)));
        jac.push_back(j.middleCols(6 * b, 6));
      }
      sys->add_factor(idx, jac, np.information, r);
    }
  }

  if (p.head_prior && (!filter || only_column == 0)) {
    cost += detail::add_column_prior(grid, layout, 0, p.head_prior->mean, p.head_prior->information, sys);
  }

  if (stats) *stats = local;
  return cost;
}

inline double evaluate(const Problem& p, const StateGrid& grid) {
  return evaluate(p, grid, VariableLayout(grid), nullptr);
}

namespace detail {

inline BlockTridiagonalSystem::Solution solve_system(const BlockTridiagonalSystem& sys, bool dense, bool cov) {
  return dense ? sys.solve_dense(cov) : sys.solve(cov);
}

inline std::vector<NodeCovariance> scatter_covariance(const StateGrid& grid, const VariableLayout& layout,
                                                      const std::vector<Eigen::MatrixXd>& column_cov) {
  std::vector<NodeCovariance> out;
  for (int k = 0; k < grid.num_times(); ++k) {
    const int off = layout.column_offset(k);
    for (int n = 0; n < grid.num_arclengths(); ++n) {
      NodeCovariance nc{{n, k}, Matrix18d::Zero()};
      for (int a = 0; a < 3; ++a) {
        const int ia = layout.index(n, k, static_cast<VarBlock>(a));
        if (ia < 0) continue;
        for (int b = 0; b < 3; ++b) {
          const int ib = layout.index(n, k, static_cast<VarBlock>(b));
          if (ib < 0) continue;
          nc.covariance.block<6, 6>(6 * a, 6 * b) = column_cov[k].block<6, 6>(ia - off, ib - off);
        }
      }
      out.push_back(nc);
    }
  }
  return out;
}

}  // namespace detail

/// Gauss-Newton with IRLS. Correspondences and weights are recomputed at every
/// linearization point. Steps that raise the cost are retried with damping
/// lambda (diag(H) + I).
inline SolveReport gauss_newton_solve(Problem& p) {
  const SolverOptions& opt = p.options;
  const VariableLayout layout(p.grid);
  SolveReport report;
  if (layout.size() == 0) {
    report.converged = true;
    report.final_cost = evaluate(p, p.grid);
    report.cost_trace.push_back(report.final_cost);
    return report;
  }

  auto sys = std::make_unique<BlockTridiagonalSystem>(layout);
  detail::EvalStats stats;
  double cost = evaluate(p, p.grid, layout, sys.get(), &stats);
  report.cost_trace.push_back(cost);

  for (int it = 0; it < opt.max_iterations; ++it) {
    double lambda = 0.0;
    bool accepted = false;
    bool small_step = false;
    while (true) {
      BlockTridiagonalSystem damped = *sys;
      if (lambda > 0.0) damped.damp(lambda);
      Eigen::VectorXd delta;
      try {
        delta = detail::solve_system(damped, opt.dense, false).delta;
      } catch (const NotPositiveDefinite&) {
        lambda = lambda == 0.0 ? opt.initial_damping : lambda * opt.damping_factor;
        if (lambda > opt.max_damping) {
          throw UnobservableProblem("gauss_newton_solve: normal equations singular even with damping");
        }
        continue;
      }
      small_step = delta.lpNorm<Eigen::Infinity>() < opt.step_tolerance;
      StateGrid candidate = apply_update(p.grid, layout, delta);
      auto cand_sys = std::make_unique<BlockTridiagonalSystem>(layout);
      detail::EvalStats cand_stats;
      const double cand_cost = evaluate(p, candidate, layout, cand_sys.get(), &cand_stats);
      if (cand_cost <= cost * (1.0 + 1e-12) || small_step) {
        if (cand_cost <= cost * (1.0 + 1e-12)) {
          small_step = small_step || cost - cand_cost <= opt.cost_tolerance * cost;
          p.grid = std::move(candidate);
          sys = std::move(cand_sys);
          stats = cand_stats;
          cost = cand_cost;
          accepted = true;
        }
        break;
      }
      // Rejected. If the local model promised almost nothing, the remaining
      // increase is correspondence noise and the estimate has settled.
      const double predicted = sys->rhs().dot(delta) - 0.5 * delta.dot(sys->multiply(delta));
      if (predicted <= opt.cost_tolerance * cost) {
        small_step = true;
        break;
      }
      lambda = lambda == 0.0 ? opt.initial_damping : lambda * opt.damping_factor;
      if (lambda > opt.max_damping) break;
    }
    report.final_damping = lambda;
    if (accepted) {
      ++report.iterations;
      report.cost_trace.push_back(cost);
    }
    if (small_step) {
      report.converged = true;
      break;
    }
    if (!accepted) break;
  }

  report.final_cost = cost;
  report.tof_matched = stats.matched;
  report.tof_unmatched = stats.unmatched;

  if (opt.compute_covariance) {
    BlockTridiagonalSystem::Solution sol;
    try {
      sol = detail::solve_system(*sys, opt.dense, true);
    } catch (const NotPositiveDefinite&) {
      throw UnobservableProblem("gauss_newton_solve: information matrix singular at the solution");
    }
    report.covariances = detail::scatter_covariance(p.grid, layout, sol.column_covariance);
    for (const auto& nc : report.covariances) {
      p.grid.node(nc.node).covariance = nc.covariance;
      report.max_pose_covariance_trace =
          std::max(report.max_pose_covariance_trace, nc.covariance.topLeftCorner<6, 6>().trace());
    }
  }
  return report;
}

/// Standard deviations of the prior placed on the first knot column of a run.
struct InitialPriorSigmas {
  double pose = 0.01;
  double strain = 0.5;
  double velocity = 0.05;
};

/// Diagonal prior holding column 0 at its current value (the home shape at
/// start-up). Anchors the shape directions that priors alone leave free.
inline ColumnPrior initial_column_prior(const StateGrid& grid, const InitialPriorSigmas& sigmas) {
  const VariableLayout layout(grid);
  ColumnPrior prior{grid.column(0), Eigen::MatrixXd::Zero(layout.column_size(0), layout.column_size(0))};
  const double sig[3] = {sigmas.pose, sigmas.strain, sigmas.velocity};
  for (int n = 0; n < grid.num_arclengths(); ++n) {
    for (int b = 0; b < 3; ++b) {
      const int i = layout.index(n, 0, static_cast<VarBlock>(b));
      if (i < 0) continue;
      prior.information.block<6, 6>(i, i).diagonal().setConstant(1.0 / (sig[b] * sig[b]));
    }
  }
  return prior;
}

/// Column that left the window, with its final estimate and covariance.
struct FrozenColumn {
  double time = 0.0;
  std::vector<StateNode> nodes;
};

/// Constant-rate extrapolation T_ib(s, t_K) exp(dt varpi^), strain and velocity copied.
inline std::vector<StateNode> extrapolate_column(const StateGrid& grid, double new_time) {
  const int k = grid.num_times() - 1;
  const double dt = new_time - grid.times()[k];
  std::vector<StateNode> col = grid.column(k);
  for (auto& node : col) {
    node.pose = node.pose * exp_se3(dt * node.velocity);
  }
  return col;
}

/// Marginal information on column 1 from the factors that touch column 0
/// (Schur complement, linearized at the current estimate).
inline Eigen::MatrixXd marginalize_front(const Problem& p) {
  const VariableLayout layout(p.grid);
  BlockTridiagonalSystem sys(layout);
  evaluate(p, p.grid, layout, &sys, nullptr, 0);
  Eigen::MatrixXd h00 = sys.diagonal_block(0);
  h00.diagonal().array() += 1e-9;
  const Eigen::MatrixXd& h01 = sys.upper_block(0);
  const Eigen::MatrixXd h11 = sys.diagonal_block(1);
  Eigen::MatrixXd lambda = h11 - h01.transpose() * h00.ldlt().solve(h01);
  return 0.5 * (lambda + lambda.transpose());
}

/// Appends a knot column at new_time (extrapolated), then, if the window now
/// exceeds its length, marginalizes the oldest column into a prior on the new
/// head column and drops measurements older than the new head.
inline std::optional<FrozenColumn> slide_window(Problem& p, double new_time) {
  if (!(new_time > p.t_end())) {
    throw std::invalid_argument("slide_window: new_time must exceed the window end");
  }
  p.grid.append_column(new_time, extrapolate_column(p.grid, new_time));
  if (p.t_end() - p.t_start() <= p.window_length + 1e-9 || p.grid.num_times() < 3) {
    return std::nullopt;
  }
  FrozenColumn frozen{p.grid.times().front(), p.grid.column(0)};
  ColumnPrior prior{p.grid.column(1), marginalize_front(p)};
  const double t1 = p.grid.times()[1];
  p.grid.drop_front_column();
  p.head_prior = std::move(prior);
  auto older = [t1](const auto& m) { return m.timestamp < t1; };
  std::erase_if(p.scans, older);
  std::erase_if(p.gyros, older);
  std::erase_if(p.strains, older);
  std::erase_if(p.node_priors, [](const NodePrior& np) { return np.node.k == 0; });
  for (auto& np : p.node_priors) --np.node.k;
  return frozen;
}

/// Per-sensor mean of the supplied (stationary) gyroscope samples.
inline std::map<int, Eigen::Vector3d> estimate_gyro_bias(const std::vector<GyroMeasurement>& stationary,
                                                         std::size_t min_samples = 50) {
  std::map<int, std::pair<Eigen::Vector3d, std::size_t>> acc;
  for (const auto& m : stationary) {
    auto& [sum, count] = acc.try_emplace(m.sensor_id, Eigen::Vector3d::Zero(), 0).first->second;
    sum += m.angular_rate;
    ++count;
  }
  if (acc.empty()) {
    throw InsufficientCalibration("estimate_gyro_bias: no stationary samples");
  }
  std::map<int, Eigen::Vector3d> out;
  for (const auto& [id, sc] : acc) {
    if (sc.second < min_samples) {
      throw InsufficientCalibration("estimate_gyro_bias: sensor " + std::to_string(id) + " has " +
                                    std::to_string(sc.second) + " stationary samples, need " +
                                    std::to_string(min_samples));
    }
    out[id] = sc.first / static_cast<double>(sc.second);
  }
  return out;
}

}  // namespace crloc
