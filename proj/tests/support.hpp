#pragma once

// Random generators and finite-difference helpers shared by the tests.

#include "crloc/geom.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace crloc::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Eigen::Vector3d vec3(double scale = 1.0) {
    return Eigen::Vector3d(uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale));
  }

  Eigen::Vector3d vec3_normal(double sigma = 1.0) { return Eigen::Vector3d(normal(sigma), normal(sigma), normal(sigma)); }

  Twist twist(double lin = 1.0, double ang = 1.0) { return make_twist(vec3(lin), vec3(ang)); }

  /// Rotation with angle strictly below max_angle.
  Eigen::Vector3d rotation_vector(double max_angle) {
    Eigen::Vector3d axis = vec3();
    while (axis.norm() < 1e-3) axis = vec3();
    return axis.normalized() * uniform(0.0, max_angle);
  }

  Transform transform(double lin = 1.0, double max_angle = 3.0) {
    return {so3_exp(rotation_vector(max_angle)), vec3(lin)};
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Central-difference Jacobian of f: R^n -> R^m at x.
template <typename F>
Eigen::MatrixXd numeric_jacobian(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

/// ‖a − b‖ / max(‖b‖, floor).
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-6) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

inline double transform_distance(const Transform& a, const Transform& b) {
  return (a.matrix() - b.matrix()).norm();
}

}  // namespace crloc::test
