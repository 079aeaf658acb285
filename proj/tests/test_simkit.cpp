#include "crloc/sim/mesh.hpp"
#include "crloc/sim/robot.hpp"
#include "crloc/sim/scene.hpp"
#include "crloc/sim/sensors.hpp"
#include "crloc/sim/simulate.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace crloc::sim {
namespace {

double sample_std(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

BendingField constant_field(double wy, double wz) {
  return [=](double, double) { return Eigen::Vector2d(wy, wz); };
}

SimRobot straight_robot() { return SimRobot(RobotGeometry{}, constant_field(0.0, 0.0)); }

// Wall in the plane z = depth, facing a sensor at the origin looking along +z.
Mesh wall_at(double depth, const std::string& label = "wall") {
  return make_box(label, {-10.0, -10.0, depth}, {10.0, 10.0, depth + 0.01});
}

// Distance from p to triangle t when p projects inside it; infinity otherwise.
double distance_onto_triangle(const Eigen::Vector3d& p, const Triangle& t) {
  const Eigen::Vector3d n = t.normal();
  const double h = n.dot(p - t.a);
  const Eigen::Vector3d q = p - h * n;
  const Eigen::Vector3d e0 = t.b - t.a, e1 = t.c - t.a, v = q - t.a;
  const double d00 = e0.dot(e0), d01 = e0.dot(e1), d11 = e1.dot(e1);
  const double det = d00 * d11 - d01 * d01;
  const double u = (d11 * v.dot(e0) - d01 * v.dot(e1)) / det;
  const double w = (d00 * v.dot(e1) - d01 * v.dot(e0)) / det;
  constexpr double kTol = 1e-9;
  if (u < -kTol || w < -kTol || u + w > 1.0 + kTol) return std::numeric_limits<double>::infinity();
  return std::abs(h);
}

TEST(Robot, StraightRobotTranslatesAlongTheBaseAxis) {
  const SimRobot robot = straight_robot();
  const Transform base = robot.geometry().base;
  for (double s : {0.0, 0.003, 0.0125, 0.25, 0.4999, 0.5}) {
    const Transform expected = base * Transform::Translation(Eigen::Vector3d(s, 0.0, 0.0));
    EXPECT_LE(test::transform_distance(robot.pose_at(s, 3.0), expected), 1e-12) << "s=" << s;
  }
}

TEST(Robot, SingleJointMatchesRigidChainAtDistalMidpoints) {
  RobotGeometry g;
  const double l = g.link_length;
  const int bent = 17;
  const Eigen::Vector2d w(2.0, -3.5);
  const SimRobot robot(g, [&](double s, double) {
    return std::abs(s - bent * l) < 1e-9 ? w : Eigen::Vector2d::Zero().eval();
  });
  const Eigen::Vector3d phi = Eigen::Vector3d(0.0, w.x(), w.y()) * l;
  for (int i = bent; i < g.link_count(); ++i) {
    const Transform oracle = g.base * Transform::Translation(Eigen::Vector3d(bent * l, 0.0, 0.0)) *
                             Transform::Rotation(so3_exp(phi)) *
                             Transform::Translation(Eigen::Vector3d((i - bent + 0.5) * l, 0.0, 0.0));
    EXPECT_LE(test::transform_distance(robot.pose_at((i + 0.5) * l, 0.0), oracle), 1e-12) << "link " << i;
  }
}

TEST(Robot, ArcsJoinConsecutiveMidpoints) {
  TrajectoryParams p;
  p.still_time = 0.0;
  const SimRobot robot(RobotGeometry{}, make_bending_field(p, 0.5));
  const double l = robot.geometry().link_length;
  for (double t : {0.7, 2.3, 5.1}) {
    for (int i = 0; i < robot.link_count(); ++i) {
      EXPECT_LE(test::transform_distance(robot.pose_at((i + 0.5) * l, t), robot.link_midpoint(i, t)), 1e-12);
    }
  }
}

TEST(Robot, ConstantJointBendGivesCurvatureOverLinkLength) {
  const double theta_link = 0.012;  // rad per joint
  const SimRobot robot(RobotGeometry{}, [&](double, double) {
    return Eigen::Vector2d(0.0, theta_link / 0.01);
  });
  StrainSpec spec;
  spec.noise = false;
  std::mt19937_64 rng(1);
  const auto meas = sim_strain(robot, 0.0, spec, rng);
  ASSERT_EQ(meas.size(), strain_stations(0.5, 0.03, 0.005).size());
  for (const auto& m : meas) EXPECT_NEAR(m.curvature, theta_link / 0.01, 1e-12) << "s=" << m.arclength;
}

TEST(Robot, GeometryValidation) {
  RobotGeometry g;
  g.link_length = 0.03;
  EXPECT_THROW(SimRobot(g, constant_field(0, 0)), std::invalid_argument);
  g = RobotGeometry{};
  g.ring_stations = {0.6};
  EXPECT_THROW(SimRobot(g, constant_field(0, 0)), std::invalid_argument);
  EXPECT_THROW(straight_robot().pose_at(0.51, 0.0), std::out_of_range);
}

TEST(Strain, StraightRobotReadsZeroCurvature) {
  StrainSpec spec;
  spec.noise = false;
  std::mt19937_64 rng(3);
  const auto meas = sim_strain(straight_robot(), 1.0, spec, rng);
  EXPECT_EQ(meas.size(), 16u);
  for (const auto& m : meas) EXPECT_EQ(m.curvature, 0.0);
}

TEST(Strain, StationsSitEveryThreeCentimetresInsideTheArcs) {
  const auto s = strain_stations(0.5, 0.03, 0.005);
  ASSERT_FALSE(s.empty());
  EXPECT_NEAR(s.front(), 0.015, 1e-15);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_NEAR(s[i] - s[i - 1], 0.03, 1e-12);
  EXPECT_LT(s.back(), 0.495);
}

TEST(Strain, PlanarArcOfRadiusTwoMetres) {
  const SimRobot robot(RobotGeometry{}, constant_field(0.0, 0.5));
  StrainSpec spec;
  spec.noise = false;
  std::mt19937_64 rng(5);
  const auto meas = sim_strain(robot, 0.0, spec, rng);
  for (const auto& m : meas) {
    EXPECT_NEAR(m.curvature, 0.5, 1e-12);
    EXPECT_NEAR(m.bending_angle, meas.front().bending_angle, 1e-12);
  }
  // Link midpoints lie on a circle of radius 2 m whose centre sits beside the
  // first midpoint; bending about body z curves toward +y.
  const Transform base = robot.geometry().base;
  const Eigen::Vector3d centre = base * Eigen::Vector3d(0.005, 2.0, 0.0);
  for (int i = 0; i < robot.link_count(); ++i) {
    const Eigen::Vector3d p = robot.pose_at((i + 0.5) * 0.01, 0.0).translation();
    EXPECT_NEAR((p - centre).norm(), 2.0, 1e-5) << "link " << i;
  }
}

TEST(Strain, NoiseMatchesConfiguredSigmas) {
  const SimRobot robot(RobotGeometry{}, constant_field(0.0, 1.0));
  StrainSpec spec;
  std::mt19937_64 rng(11);
  std::vector<double> kappa, theta;
  while (kappa.size() < 10000) {
    for (const auto& m : sim_strain(robot, 0.0, spec, rng)) {
      kappa.push_back(m.curvature);
      theta.push_back(m.bending_angle);
    }
  }
  EXPECT_NEAR(sample_std(kappa), 0.01, 0.05 * 0.01);
  EXPECT_NEAR(sample_std(theta), 0.015, 0.05 * 0.015);
}

TEST(Gyro, StaticRobotReadsZero) {
  GyroSpec spec;
  spec.noise = false;
  std::mt19937_64 rng(2);
  for (double s : {0.1, 0.3, 0.5}) {
    const auto m = sim_gyro(straight_robot(), s, 2.0, spec, Eigen::Vector3d::Zero(), rng);
    EXPECT_LE(m.angular_rate.norm(), 1e-12);
  }
}

TEST(Gyro, SpinningBaseReadsItsRate) {
  RobotGeometry g;
  const SimRobot robot(g, constant_field(0.0, 0.0), [](double t) {
    return Transform(rot_z(0.1 * t), Eigen::Vector3d(0.0, 0.0, 0.5));
  });
  GyroSpec spec;
  spec.noise = false;
  std::mt19937_64 rng(2);
  for (double s : g.ring_stations) {
    const auto m = sim_gyro(robot, s, 1.3, spec, Eigen::Vector3d::Zero(), rng);
    EXPECT_LE((m.angular_rate - Eigen::Vector3d(0.0, 0.0, 0.1)).norm(), 1e-9);
  }
}

TEST(Gyro, BiasIsAddedAndNoiseMatchesSigma) {
  GyroSpec spec;
  std::mt19937_64 rng(7);
  const Eigen::Vector3d bias(0.003, -0.002, 0.001);
  std::vector<double> samples[3];
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const auto m = sim_gyro(straight_robot(), 0.5, 2.0, spec, bias, rng);
    for (int a = 0; a < 3; ++a) samples[a].push_back(m.angular_rate[a]);
    mean += m.angular_rate / n;
  }
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(sample_std(samples[a]), 0.01, 0.05 * 0.01);
  EXPECT_LE((mean - bias).norm(), 5.0 * 0.01 / std::sqrt(n) * std::sqrt(3.0));
}

TEST(ToF, RayGridSpansTheFieldOfView) {
  const ToFSpec spec;
  const auto rays = tof_ray_grid(spec);
  ASSERT_EQ(rays.size(), 64u);
  const double half_step = M_PI / 4.0 / 16.0;
  EXPECT_NEAR(std::atan2(rays[0].x(), rays[0].z()), -M_PI / 8.0 + half_step, 1e-12);
  EXPECT_NEAR(std::atan2(rays[63].y(), rays[63].z()), M_PI / 8.0 - half_step, 1e-12);
  for (const auto& r : rays) EXPECT_NEAR(r.norm(), 1.0, 1e-15);
}

TEST(ToF, WallAtOneMetreMatchesPlaneIntersection) {
  ToFSpec spec;
  spec.noise = false;
  const Bvh bvh(wall_at(1.0).triangles);
  const auto rays = tof_ray_grid(spec);
  std::mt19937_64 rng(1);
  const ToFScan scan = raycast_tof(bvh, Transform::Identity(), spec, rays, rng);
  ASSERT_EQ(scan.returns.size(), 64u);
  for (const auto& r : scan.returns) {
    const Eigen::Vector3d dir = rays[static_cast<std::size_t>(r.ray)];
    EXPECT_NEAR(r.distance, 1.0 / dir.z(), 1e-9);
    EXPECT_TRUE(r.valid);
  }
  // Corner ray obliquity.
  const double tx = std::tan(M_PI / 8.0 - M_PI / 64.0);
  EXPECT_NEAR(scan.returns.back().distance, std::sqrt(1.0 + 2.0 * tx * tx), 1e-9);
}

TEST(ToF, RotatedSensorAgainstAnalyticPlane) {
  ToFSpec spec;
  spec.noise = false;
  const Bvh bvh(make_box("floor", {-5.0, -5.0, -0.01}, {5.0, 5.0, 0.0}).triangles);
  const auto rays = tof_ray_grid(spec);
  std::mt19937_64 rng(1);
  const Transform pose(rot_x(M_PI - 0.2), Eigen::Vector3d(0.1, 0.2, 0.8));
  const ToFScan scan = raycast_tof(bvh, pose, spec, rays, rng);
  ASSERT_EQ(scan.returns.size(), 64u);
  for (const auto& r : scan.returns) {
    const Eigen::Vector3d dir = pose.rotation() * rays[static_cast<std::size_t>(r.ray)];
    EXPECT_NEAR(r.distance, -0.8 / dir.z(), 1e-9);
  }
}

TEST(ToF, EmptySceneOrOutOfRangeGivesNoReturns) {
  const ToFSpec spec;
  const auto rays = tof_ray_grid(spec);
  std::mt19937_64 rng(1);
  EXPECT_TRUE(raycast_tof(Bvh{}, Transform::Identity(), spec, rays, rng).returns.empty());
  const Bvh far(wall_at(4.5).triangles);
  EXPECT_TRUE(raycast_tof(far, Transform::Identity(), spec, rays, rng).returns.empty());
}

TEST(ToF, ShortReturnsAreMarkedInvalid) {
  ToFSpec spec;
  spec.noise = false;
  const Bvh bvh(wall_at(0.02).triangles);
  std::mt19937_64 rng(1);
  const ToFScan scan = raycast_tof(bvh, Transform::Identity(), spec, tof_ray_grid(spec), rng);
  ASSERT_EQ(scan.returns.size(), 64u);
  for (const auto& r : scan.returns) EXPECT_FALSE(r.valid);
}

TEST(ToF, RangeNoiseAtOnePointFiveMetres) {
  ToFSpec spec;
  spec.rows = spec.cols = 1;
  const Bvh bvh(wall_at(1.5).triangles);
  const auto rays = tof_ray_grid(spec);
  std::mt19937_64 rng(13);
  std::vector<double> d;
  for (int k = 0; k < 10000; ++k) {
    const ToFScan scan = raycast_tof(bvh, Transform::Identity(), spec, rays, rng);
    ASSERT_EQ(scan.returns.size(), 1u);
    d.push_back(scan.returns[0].distance);
  }
  EXPECT_NEAR(sample_std(d), 0.009, 0.05 * 0.009);
}

TEST(ToF, BvhAgreesWithBruteForce) {
  const SimScene scene = apply_anomalies(default_scene(), {add_object(default_anomaly_cube())});
  const auto tris = scene.triangles();
  const Bvh bvh(tris);
  test::Gen gen(21);
  for (int k = 0; k < 2000; ++k) {
    const Eigen::Vector3d o(gen.uniform(-0.45, 0.45), gen.uniform(-0.45, 0.45), gen.uniform(0.05, 0.95));
    const Eigen::Vector3d dir = gen.vec3().normalized();
    const auto a = bvh.raycast(o, dir, 4.0);
    const auto b = raycast_brute(tris, o, dir, 4.0);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_NEAR(a->distance, b->distance, 1e-12);
    }
  }
}

TEST(Scene, AddedCubeReturnsItsFaceDistance) {
  const SimScene truth = apply_anomalies(default_scene(), {add_object(default_anomaly_cube())});
  const Eigen::Vector3d o(-0.1, 0.17, 0.62);
  const Eigen::Vector3d dir(-1.0, 0.0, 0.0);
  const auto with = Bvh(truth.triangles()).raycast(o, dir, 4.0);
  const auto without = Bvh(default_scene().triangles()).raycast(o, dir, 4.0);
  ASSERT_TRUE(with && without);
  EXPECT_NEAR(with->distance, 0.18, 1e-12);
  EXPECT_NEAR(without->distance, 0.4, 1e-12);
  EXPECT_EQ(truth.triangle_labels()[static_cast<std::size_t>(with->triangle)], "anomaly_cube");
}

TEST(Scene, RemovingAWallLosesItsReturns) {
  SimScene lone;
  lone.meshes.push_back(wall_at(1.0, "only_wall"));
  ToFSpec spec;
  const auto rays = tof_ray_grid(spec);
  std::mt19937_64 rng(1);
  EXPECT_EQ(raycast_tof(Bvh(lone.triangles()), Transform::Identity(), spec, rays, rng).returns.size(), 64u);
  const SimScene gone = apply_anomalies(lone, {remove_feature("only_wall")});
  EXPECT_TRUE(raycast_tof(Bvh(gone.triangles()), Transform::Identity(), spec, rays, rng).returns.empty());

  const SimScene room = apply_anomalies(default_scene(), {remove_feature("wall_-x")});
  EXPECT_FALSE(room.has("wall_-x"));
  EXPECT_FALSE(Bvh(room.triangles()).raycast({0.0, 0.0, 0.8}, {-1.0, 0.0, 0.0}, 4.0).has_value());
}

TEST(Scene, NoEditsLeaveTheSceneUnchanged) {
  const SimScene a = default_scene();
  const SimScene b = apply_anomalies(a, {});
  ASSERT_EQ(a.triangle_labels(), b.triangle_labels());
  const auto ta = a.triangles(), tb = b.triangles();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(std::memcmp(ta[i].a.data(), tb[i].a.data(), 3 * sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(ta[i].b.data(), tb[i].b.data(), 3 * sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(ta[i].c.data(), tb[i].c.data(), 3 * sizeof(double)), 0);
  }
}

TEST(Scene, UnknownRemovalLabelThrows) {
  EXPECT_THROW(apply_anomalies(default_scene(), {remove_feature("chandelier")}), std::invalid_argument);
}

TEST(Scene, TrianglesHaveFiniteArea) {
  for (const auto& t : default_scene().triangles()) {
    EXPECT_GT(t.area(), 0.0);
    EXPECT_TRUE(std::isfinite(t.area()));
  }
}

TEST(PriorMap, UnitPlaneDensityBounds) {
  SimScene plane;
  plane.meshes.push_back({"plane", {{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}}, {{0, 0, 0}, {1, 1, 0}, {0, 1, 0}}}});
  const auto pts = make_prior_map(plane, 0.01, 4);
  EXPECT_GE(pts.size(), 6000u);
  EXPECT_LE(pts.size(), 11000u);
}

TEST(PriorMap, SamplesRespectTheSpacing) {
  SimScene plane;
  plane.meshes.push_back({"plane", {{{0, 0, 0}, {0.2, 0, 0}, {0.2, 0.2, 0}}}});
  const auto pts = make_prior_map(plane, 0.01, 9);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) ASSERT_GE((pts[i] - pts[j]).norm(), 0.01);
  }
}

TEST(PriorMap, SamplesLieOnSourceTriangles) {
  const SimScene scene = default_scene();
  const auto tris = scene.triangles();
  const auto pts = make_prior_map(scene, 0.02, 5);
  ASSERT_GT(pts.size(), 1000u);
  for (const auto& p : pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : tris) best = std::min(best, distance_onto_triangle(p, t));
    ASSERT_LE(best, 1e-9);
  }
}

TEST(PriorMap, EmptySceneAndDeterminism) {
  EXPECT_TRUE(make_prior_map(SimScene{}, 0.01, 1).empty());
  EXPECT_THROW(make_prior_map(default_scene(), 0.0, 1), std::invalid_argument);
  const auto a = make_prior_map(default_scene(), 0.02, 8);
  const auto b = make_prior_map(default_scene(), 0.02, 8);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Mesh, ObjFacesAreFanTriangulated) {
  std::istringstream in("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\nf -4 -3 -2\n");
  const Mesh m = read_obj(in, "quad");
  ASSERT_EQ(m.triangles.size(), 3u);
  EXPECT_EQ(m.triangles[1].c, Eigen::Vector3d(0, 1, 0));
  EXPECT_NEAR(m.triangles[0].area() + m.triangles[1].area(), 1.0, 1e-15);
  std::istringstream bad("v 0 0 0\nf 1 2 3\n");
  EXPECT_THROW(read_obj(bad, "bad"), MeshError);
}

TEST(Mesh, AsciiAndBinaryStl) {
  std::istringstream ascii(
      "solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nendloop\nendfacet\n"
      "endsolid t\n");
  const Mesh a = read_stl(ascii, "a");
  ASSERT_EQ(a.triangles.size(), 1u);
  EXPECT_NEAR(a.triangles[0].area(), 0.5, 1e-15);

  std::string bin(80, '\0');
  const std::uint32_t n = 1;
  bin.append(reinterpret_cast<const char*>(&n), 4);
  const float rec[12] = {0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0};
  bin.append(reinterpret_cast<const char*>(rec), sizeof(rec));
  bin.append(2, '\0');
  std::istringstream b(bin);
  const Mesh m = read_stl(b, "b");
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_NEAR(m.triangles[0].area(), 2.0, 1e-12);

  std::istringstream truncated(bin.substr(0, 100));
  EXPECT_THROW(read_stl(truncated, "c"), MeshError);
}

TEST(Simulate, RatesAndTruthExport) {
  SimConfig cfg;
  cfg.duration = 2.0;
  const SimOutput out = simulate(cfg, default_scene());
  const int num_tof = static_cast<int>(tof_mounts(cfg.robot).size());
  EXPECT_EQ(num_tof, 10);
  std::map<int, std::vector<double>> stamps;
  for (const auto& s : out.scans) stamps[s.sensor_id].push_back(s.timestamp);
  for (const auto& [id, ts] : stamps) {
    for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_NEAR(ts[i] - ts[i - 1], 1.0 / 15.0, 1e-12);
  }
  EXPECT_EQ(out.gyros.size(), 3u * 201u);
  EXPECT_EQ(out.strains.size(), 41u * 16u);
  EXPECT_EQ(out.truth.size(), 3u * 201u);
  EXPECT_EQ(out.true_ranges.size(), out.scans.size());
  EXPECT_EQ(out.hit_labels.size(), out.scans.size());
  for (const auto& g : out.gyros) EXPECT_EQ(g.stationary, g.timestamp < 1.0);
}

TEST(Simulate, NoiseFreeRangesMatchTruth) {
  SimConfig cfg;
  cfg.duration = 1.5;
  cfg.sensors.tof.noise = false;
  const SimOutput out = simulate(cfg, default_scene());
  std::size_t checked = 0;
  for (std::size_t k = 0; k < out.scans.size(); ++k) {
    for (const auto& r : out.scans[k].returns) {
      const auto truth = out.true_ranges[k][static_cast<std::size_t>(r.ray)];
      ASSERT_TRUE(truth.has_value());
      EXPECT_EQ(r.distance, *truth);
      EXPECT_FALSE(out.hit_labels[k][static_cast<std::size_t>(r.ray)].empty());
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Simulate, IdenticalSeedsGiveIdenticalLogs) {
  SimConfig cfg;
  cfg.duration = 1.5;
  cfg.seed = 99;
  const SimScene scene = default_scene();
  const SimOutput a = simulate(cfg, scene);
  const SimOutput b = simulate(cfg, scene);
  ASSERT_EQ(a.scans.size(), b.scans.size());
  for (std::size_t k = 0; k < a.scans.size(); ++k) {
    ASSERT_EQ(a.scans[k].returns.size(), b.scans[k].returns.size());
    for (std::size_t i = 0; i < a.scans[k].returns.size(); ++i) {
      EXPECT_EQ(a.scans[k].returns[i].distance, b.scans[k].returns[i].distance);
    }
  }
  ASSERT_EQ(a.gyros.size(), b.gyros.size());
  for (std::size_t k = 0; k < a.gyros.size(); ++k) EXPECT_EQ(a.gyros[k].angular_rate, b.gyros[k].angular_rate);
  ASSERT_EQ(a.strains.size(), b.strains.size());
  for (std::size_t k = 0; k < a.strains.size(); ++k) EXPECT_EQ(a.strains[k].curvature, b.strains[k].curvature);

  cfg.seed = 100;
  const SimOutput c = simulate(cfg, scene);
  EXPECT_NE(a.gyros[0].angular_rate, c.gyros[0].angular_rate);
}

}  // namespace
}  // namespace crloc::sim
