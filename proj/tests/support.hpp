#pragma once

// Shared helpers for unit and acceptance tests: random states and
// finite-difference Jacobians under right perturbation.

#include "motodom/dynfilter.hpp"
#include "motodom/factors.hpp"
#include "motodom/geom.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace motodom::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec(Rng& rng, double scale) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

/// Rotation angle uniform in [0, max_angle] about a random axis.
inline Mat3 random_rotation(Rng& rng, double max_angle) {
  return so3_exp(random_unit(rng) * uniform(rng, 0.0, max_angle));
}

inline Pose random_pose(Rng& rng, double t_scale = 5.0, double max_angle = 2.5) {
  return {random_rotation(rng, max_angle), random_vec(rng, t_scale)};
}

inline EgoState random_ego(Rng& rng) {
  EgoState s;
  s.pose = random_pose(rng, 20.0, 2.5);
  s.velocity = random_vec(rng, 10.0);
  s.gyro_bias = random_vec(rng, 0.01);
  s.accel_bias = random_vec(rng, 0.1);
  return s;
}

/// d f(x exp(d)) / d d at d = 0 by central differences.
template <class F>
Eigen::MatrixXd numeric_pose_jacobian(F&& f, const Pose& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), 6);
  for (int i = 0; i < 6; ++i) {
    Tangent d = Tangent::Zero();
    d[i] = h;
    j.col(i) = (f(x * exp(d)) - f(x * exp(-d))) / (2.0 * h);
  }
  return j;
}

template <class F>
Eigen::MatrixXd numeric_vec3_jacobian(F&& f, const Vec3& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), 3);
  for (int i = 0; i < 3; ++i) {
    Vec3 d = Vec3::Zero();
    d[i] = h;
    j.col(i) = (f(x + d) - f(x - d)) / (2.0 * h);
  }
  return j;
}

/// Frobenius-norm relative error, 0 when both are zero.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).norm() / scale;
}

/// State at the end of `pre` that makes the IMU residual vanish.
inline EgoState consistent_successor(const EgoState& s, const Preintegrated& pre,
                                     const Vec3& g = kGravity) {
  EgoState n = s;
  const double dt = pre.dt;
  n.pose.rotation = s.pose.rotation * pre.delta_rotation;
  n.velocity = s.velocity + g * dt + s.pose.rotation * pre.delta_velocity;
  n.pose.translation = s.pose.translation + s.velocity * dt + 0.5 * g * dt * dt +
                       s.pose.rotation * pre.delta_position;
  return n;
}

/// Yaw-only box near the origin, sized so random pairs usually overlap.
inline OrientedBox random_yaw_box(Rng& rng) {
  OrientedBox b;
  b.center = Vec3(uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5), uniform(rng, -0.5, 0.5));
  b.dims = Vec3(uniform(rng, 0.5, 4.5), uniform(rng, 0.5, 2.5), uniform(rng, 0.5, 2.0));
  b.rotation = rot_z(uniform(rng, -3.14159, 3.14159)).rotation;
  return b;
}

inline bool inside(const Vec3& p, const OrientedBox& b) {
  const Vec3 local = b.rotation.transpose() * (p - b.center);
  return (local.cwiseAbs().array() <= 0.5 * b.dims.array()).all();
}

/// IoU from uniform samples over a cube enclosing both boxes.
inline double monte_carlo_iou(const OrientedBox& a, const OrientedBox& b, int samples, Rng& rng) {
  const double ra = 0.5 * a.dims.norm(), rb = 0.5 * b.dims.norm();
  const Vec3 lo = a.center.cwiseMin(b.center) - Vec3::Constant(std::max(ra, rb));
  const Vec3 hi = a.center.cwiseMax(b.center) + Vec3::Constant(std::max(ra, rb));
  long in_a = 0, in_b = 0, both = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 p(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()),
                 uniform(rng, lo.z(), hi.z()));
    const bool ia = inside(p, a), ib = inside(p, b);
    in_a += ia;
    in_b += ib;
    both += ia && ib;
  }
  const long uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

}  // namespace motodom::testing
