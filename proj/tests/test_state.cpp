#include "crloc/state.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace crloc {
namespace {

using test::Gen;

StateGrid random_grid(Gen& g, int num_s = 5, int num_t = 4) {
  std::vector<double> s, t;
  for (int i = 0; i < num_s; ++i) s.push_back(0.1 * i);
  for (int i = 0; i < num_t; ++i) t.push_back(0.1 * i);
  StateGrid grid(s, t, g.transform(0.5, 1.0));
  for (int k = 0; k < num_t; ++k) {
    for (int n = 1; n < num_s; ++n) {
      StateNode& x = grid.node(n, k);
      x.pose = x.pose * exp_se3(g.twist(0.05, 0.3));
      x.strain += g.twist(0.1, 2.0);
      x.velocity = g.twist(0.1, 0.5);
    }
  }
  return grid;
}

TEST(State, RejectsNonIncreasingKnots) {
  EXPECT_THROW(StateGrid({0.0, 0.1, 0.1}, {0.0}, Transform()), std::invalid_argument);
  EXPECT_THROW(StateGrid({0.0}, {1.0, 0.5}, Transform()), std::invalid_argument);
}

TEST(State, HomeColumnIsStraightAlongBaseX) {
  const Transform base = exp_se3((Twist() << 0.1, 0.2, 0.3, 0.4, -0.5, 0.6).finished());
  const StateGrid grid({0.0, 0.25, 0.5}, {0.0}, base);
  for (int n = 0; n < 3; ++n) {
    const Transform& p = grid.node(n, 0).pose;
    EXPECT_LE((p.translation() - (base * Eigen::Vector3d(0.25 * n, 0, 0))).norm(), 1e-15);
    EXPECT_LE((p.rotation() - base.rotation()).norm(), 1e-15);
  }
}

TEST(State, KnotsAreReproducedExactly) {
  Gen g(31);
  const StateGrid grid = random_grid(g);
  for (int k = 0; k < grid.num_times(); ++k) {
    for (int n = 0; n < grid.num_arclengths(); ++n) {
      const double s = grid.arclengths()[n], t = grid.times()[k];
      EXPECT_LE(test::transform_distance(interpolate_pose(grid, s, t), grid.node(n, k).pose), 1e-12);
      EXPECT_LE(test::transform_distance(interpolate_pose_with_jacobians(grid, s, t).pose, grid.node(n, k).pose),
                1e-12);
      EXPECT_EQ(interpolate_strain(grid, s, t), grid.node(n, k).strain);
      EXPECT_EQ(interpolate_velocity(grid, s, t), grid.node(n, k).velocity);
    }
  }
}

TEST(State, ConstantFieldIsReproduced) {
  Gen g(32);
  const Transform pose = g.transform();
  StateGrid grid({0.0, 0.2, 0.4}, {0.0, 0.5, 1.0}, pose);
  for (int k = 0; k < 3; ++k) {
    for (int n = 0; n < 3; ++n) grid.node(n, k).pose = pose;
  }
  for (int i = 0; i < 50; ++i) {
    const Transform q = interpolate_pose(grid, g.uniform(0.0, 0.4), g.uniform(0.0, 1.0));
    EXPECT_LE(test::transform_distance(q, pose), 1e-12);
  }
}

TEST(State, MidpointOfPureTranslation) {
  StateGrid grid({0.0, 1.0}, {0.0}, Transform());
  grid.node(1, 0).pose = Transform::Translation({0, 0, 0.1});
  const Transform mid = interpolate_pose(grid, 0.5, 0.0);
  EXPECT_LE((mid.translation() - Eigen::Vector3d(0, 0, 0.05)).norm(), 1e-15);
  EXPECT_TRUE(mid.rotation().isIdentity(1e-15));
}

TEST(State, OutOfRangeQueriesThrow) {
  const StateGrid grid({0.0, 0.5}, {1.0, 2.0}, Transform());
  EXPECT_THROW(interpolate_pose(grid, -0.01, 1.5), QueryOutOfBounds);
  EXPECT_THROW(interpolate_pose(grid, 0.51, 1.5), QueryOutOfBounds);
  EXPECT_THROW(interpolate_pose(grid, 0.2, 0.99), QueryOutOfBounds);
  EXPECT_THROW(interpolate_strain(grid, 0.2, 2.01), QueryOutOfBounds);
  EXPECT_NO_THROW(interpolate_pose(grid, 0.5, 2.0));
}

TEST(State, InterpolationIsLocal) {
  Gen g(33);
  for (int trial = 0; trial < 20; ++trial) {
    const StateGrid grid = random_grid(g);
    const int n = g.integer(1, grid.num_arclengths() - 1);
    const int k = g.integer(0, grid.num_times() - 1);
    StateGrid changed = grid;
    changed.node(n, k).pose = changed.node(n, k).pose * exp_se3(g.twist(0.1, 0.5));
    changed.node(n, k).strain += g.twist();
    const auto& s = grid.arclengths();
    const auto& t = grid.times();
    for (int i = 0; i < 100; ++i) {
      const double qs = g.uniform(s.front(), s.back()), qt = g.uniform(t.front(), t.back());
      const bool near = qs > s[std::max(n - 1, 0)] && qs < s[std::min<int>(n + 1, s.size() - 1)] &&
                        qt > t[std::max(k - 1, 0)] && qt < t[std::min<int>(k + 1, t.size() - 1)];
      if (near) continue;
      EXPECT_LE(test::transform_distance(interpolate_pose(grid, qs, qt), interpolate_pose(changed, qs, qt)), 0.0);
      EXPECT_EQ(interpolate_strain(grid, qs, qt), interpolate_strain(changed, qs, qt));
    }
  }
}

TEST(State, InterpolationIsContinuousAcrossKnots) {
  Gen g(34);
  const StateGrid grid = random_grid(g);
  const double eps = 1e-12;
  for (int trial = 0; trial < 50; ++trial) {
    // Random line through the lattice; probe just before and after each knot crossing.
    const double t = g.uniform(0.0, 0.3);
    for (int n = 1; n + 1 < grid.num_arclengths(); ++n) {
      const double s = grid.arclengths()[n];
      const Transform a = interpolate_pose(grid, s - eps, t), b = interpolate_pose(grid, s + eps, t);
      EXPECT_LE(test::transform_distance(a, b), 1e-9);
    }
    const double s = g.uniform(0.0, 0.4);
    for (int k = 1; k + 1 < grid.num_times(); ++k) {
      const double tk = grid.times()[k];
      const Transform a = interpolate_pose(grid, s, tk - eps), b = interpolate_pose(grid, s, tk + eps);
      EXPECT_LE(test::transform_distance(a, b), 1e-9);
    }
  }
}

TEST(State, BothInterpolationRoutesAgree) {
  Gen g(35);
  const StateGrid grid = random_grid(g);
  for (int i = 0; i < 100; ++i) {
    const double s = g.uniform(0.0, 0.4), t = g.uniform(0.0, 0.3);
    EXPECT_LE(test::transform_distance(interpolate_pose(grid, s, t), interpolate_pose_with_jacobians(grid, s, t).pose),
              1e-12);
  }
}

TEST(State, CornerJacobiansMatchFiniteDifferences) {
  Gen g(36);
  for (int trial = 0; trial < 20; ++trial) {
    const StateGrid grid = random_grid(g);
    const double s = g.uniform(0.0, 0.4), t = g.uniform(0.0, 0.3);
    const PoseInterpolation ip = interpolate_pose_with_jacobians(grid, s, t);
    const auto corners = ip.cell.corners();
    for (int c = 0; c < 4; ++c) {
      // Output perturbation in the same convention: T_bi = exp(δ^) T̄_bi.
      auto f = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
        StateGrid p = grid;
        StateNode& x = p.node(corners[c]);
        x.pose = x.pose * exp_se3(-Twist(d));
        const Transform q = interpolate_pose(p, s, t);
        return log_se3(q.inverse() * ip.pose);
      };
      const Eigen::MatrixXd num = test::numeric_jacobian(f, Eigen::VectorXd::Zero(6));
      EXPECT_LE(test::relative_error(ip.jacobians[c], num), 1e-6) << "corner " << c;
    }
  }
}

TEST(State, ZeroUpdateLeavesGridUnchanged) {
  Gen g(37);
  const StateGrid grid = random_grid(g);
  const StateGrid out = apply_update(grid, Eigen::VectorXd::Zero(VariableLayout(grid).size()));
  for (int k = 0; k < grid.num_times(); ++k) {
    for (int n = 0; n < grid.num_arclengths(); ++n) {
      EXPECT_EQ(out.node(n, k).pose.matrix(), grid.node(n, k).pose.matrix());
      EXPECT_EQ(out.node(n, k).strain, grid.node(n, k).strain);
    }
  }
}

TEST(State, UpdateRejectsWrongLength) {
  const StateGrid grid({0.0, 0.1}, {0.0}, Transform());
  EXPECT_THROW(apply_update(grid, Eigen::VectorXd::Zero(7)), DimensionMismatch);
}

TEST(State, LayoutClampsBasePoseAndVelocity) {
  const StateGrid grid({0.0, 0.1, 0.2}, {0.0, 0.1}, Transform());
  const VariableLayout layout(grid);
  EXPECT_EQ(layout.size(), 18 * 6 - 2 * 12);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(layout.index(0, k, VarBlock::kPose), -1);
    EXPECT_EQ(layout.index(0, k, VarBlock::kVelocity), -1);
    EXPECT_GE(layout.index(0, k, VarBlock::kStrain), 0);
  }
}

TEST(State, PoseUpdateActsOnTheInertialToBodyTransform) {
  // A delta (0,0,0.01, 0,0,0) moves the node 1 cm along its own -z axis.
  Gen g(38);
  const StateGrid grid = random_grid(g, 3, 1);
  const VariableLayout layout(grid);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(layout.size());
  delta(layout.index(1, 0, VarBlock::kPose) + 2) = 0.01;
  const StateGrid out = apply_update(grid, layout, delta);
  const Transform& before = grid.node(1, 0).pose;
  const Transform& after = out.node(1, 0).pose;
  // By hand: T_bi <- exp(δ^) T_bi.
  const Transform expected = (exp_se3(delta.segment<6>(layout.index(1, 0, VarBlock::kPose))) * before.inverse()).inverse();
  EXPECT_LE(test::transform_distance(after, expected), 1e-12);
  EXPECT_LE((after.translation() - (before.translation() - 0.01 * before.rotation().col(2))).norm(), 1e-12);
  EXPECT_LE((after.rotation() - before.rotation()).norm(), 1e-12);
  EXPECT_EQ(out.node(2, 0).pose.matrix(), grid.node(2, 0).pose.matrix());
  EXPECT_EQ(out.node(0, 0).pose.matrix(), grid.node(0, 0).pose.matrix());
}

TEST(State, StrainAndVelocityUpdatesAreAdditive) {
  Gen g(39);
  const StateGrid grid = random_grid(g, 3, 2);
  const VariableLayout layout(grid);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(layout.size());
  const Twist ds = g.twist(), dv = g.twist();
  delta.segment<6>(layout.index(0, 1, VarBlock::kStrain)) = ds;
  delta.segment<6>(layout.index(2, 1, VarBlock::kVelocity)) = dv;
  const StateGrid out = apply_update(grid, layout, delta);
  EXPECT_LE((out.node(0, 1).strain - (grid.node(0, 1).strain + ds)).norm(), 1e-15);
  EXPECT_LE((out.node(2, 1).velocity - (grid.node(2, 1).velocity + dv)).norm(), 1e-15);
  EXPECT_EQ(out.node(0, 1).velocity, grid.node(0, 1).velocity);
}

TEST(State, UpdateThenNegatedUpdateRoundTrips) {
  Gen g(40);
  for (int trial = 0; trial < 20; ++trial) {
    const StateGrid grid = random_grid(g);
    const VariableLayout layout(grid);
    Eigen::VectorXd delta(layout.size());
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta(i) = g.uniform(-1.0, 1.0);
    delta *= 1e-3 / delta.norm();
    const StateGrid back = apply_update(apply_update(grid, layout, delta), layout, -delta);
    for (int k = 0; k < grid.num_times(); ++k) {
      for (int n = 0; n < grid.num_arclengths(); ++n) {
        EXPECT_LE(test::transform_distance(back.node(n, k).pose, grid.node(n, k).pose), 1e-6);
      }
    }
  }
}

TEST(State, AppendAndDropColumns) {
  StateGrid grid({0.0, 0.1}, {0.0}, Transform::Translation({1, 2, 3}));
  auto col = grid.home_column();
  col[0].pose = Transform::Translation({9, 9, 9});
  col[0].velocity.setOnes();
  grid.append_column(0.1, col);
  EXPECT_EQ(grid.node(0, 1).pose.translation(), Eigen::Vector3d(1, 2, 3));
  EXPECT_TRUE(grid.node(0, 1).velocity.isZero(0.0));
  EXPECT_THROW(grid.append_column(0.1, col), std::invalid_argument);
  grid.drop_front_column();
  EXPECT_EQ(grid.num_times(), 1);
  EXPECT_EQ(grid.times().front(), 0.1);
}

}  // namespace
}  // namespace crloc
