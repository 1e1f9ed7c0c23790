#include "motodom/factors.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <limits>
#include <vector>

using namespace motodom;
using namespace motodom::testing;

namespace {

constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

Tangent tangent(double x, double y, double z, double rx, double ry, double rz) {
  Tangent v;
  v << x, y, z, rx, ry, rz;
  return v;
}

std::vector<ImuSample> constant_samples(const Vec3& gyro, const Vec3& accel, int n, double dt) {
  return std::vector<ImuSample>(static_cast<size_t>(n), ImuSample{gyro, accel, dt});
}

Preintegrated random_preintegration(Rng& rng) {
  std::vector<ImuSample> samples;
  for (int i = 0; i < 10; ++i)
    samples.push_back({random_vec(rng, 0.5), random_vec(rng, 3.0) + Vec3(0, 0, 9.81), 0.01});
  return preintegrate(samples, random_vec(rng, 0.01), random_vec(rng, 0.1), ImuNoise{});
}

}  // namespace

TEST(ResidualOdometry, Examples) {
  const Pose t1 = Pose::from_translation(1, 0, 0);
  EXPECT_LT(residual_odometry(Pose::identity(), t1, t1).norm(), 1e-15);
  const Tangent r = residual_odometry(Pose::identity(), Pose::from_translation(1.1, 0, 0), t1);
  EXPECT_LT((r - tangent(0.1, 0, 0, 0, 0, 0)).norm(), 1e-12);
}

TEST(ResidualObservation, Examples) {
  EXPECT_LT(residual_observation(Pose::identity(), Pose::from_translation(5, 0, 0),
                                 Pose::from_translation(5, 0, 0))
                .norm(),
            1e-15);
  const Pose ego = Pose::from_translation(1, 0, 0);
  const Pose obj = Pose::from_translation(5, 0, 0);
  EXPECT_LT(residual_observation(ego, obj, Pose::from_translation(4, 0, 0)).norm(), 1e-15);
  const Tangent r = residual_observation(ego, obj, Pose::from_translation(4.2, 0, 0));
  EXPECT_LT((r - tangent(-0.2, 0, 0, 0, 0, 0)).norm(), 1e-12);
}

TEST(ResidualMotion, Examples) {
  const Pose p0 = Pose::identity(), p1 = Pose::from_translation(1, 0, 0);
  EXPECT_LT(residual_motion(p0, p1, Pose::from_translation(1, 0, 0)).norm(), 1e-15);
  const Tangent r = residual_motion(p0, p1, Pose::from_translation(0.8, 0, 0));
  EXPECT_LT((r - tangent(0.2, 0, 0, 0, 0, 0)).norm(), 1e-12);
}

TEST(ResidualSmooth, Examples) {
  const Pose d = rot_z(0.4, Vec3(1, 2, 0));
  EXPECT_LT(residual_smooth(d, d).norm(), 1e-15);
  const Tangent r =
      residual_smooth(Pose::from_translation(1, 0, 0), Pose::from_translation(1, 0.1, 0));
  EXPECT_LT((r - tangent(0, 0.1, 0, 0, 0, 0)).norm(), 1e-12);
  const Tangent rz = residual_smooth(rot_z(0.1), rot_z(0.2));
  EXPECT_LT((rz - tangent(0, 0, 0, 0, 0, 0.1)).norm(), 1e-12);
}

TEST(ResidualPrior, Examples) {
  const Pose p = rot_z(0.3, Vec3(1, 2, 3));
  EXPECT_LT(residual_prior(p, p).norm(), 1e-15);
  const Tangent r = residual_prior(p * Pose::from_translation(0.5, 0, 0), p);
  EXPECT_LT((r - tangent(0.5, 0, 0, 0, 0, 0)).norm(), 1e-12);
  const Tangent rr = residual_prior(p * rot_z(0.01), p);
  EXPECT_LT((rr - tangent(0, 0, 0, 0, 0, 0.01)).norm(), 1e-12);

  EgoState s;
  s.pose = p;
  EgoState moved = s;
  moved.velocity = Vec3(0.1, 0, 0);
  moved.accel_bias = Vec3(0, 0, 0.2);
  const Vec15 e = residual_prior(moved, s);
  EXPECT_NEAR(e[6], 0.1, 1e-15);
  EXPECT_NEAR(e[14], 0.2, 1e-15);
  EXPECT_LT(e.head<6>().norm(), 1e-15);
}

TEST(Residuals, VanishOnConsistentStates) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), m = random_pose(rng, 2.0, 1.0);
    EXPECT_LT(residual_odometry(a, a * m, m).norm(), 1e-10);
    EXPECT_LT(residual_observation(a, a * m, m).norm(), 1e-10);
    EXPECT_LT(residual_motion(a, a * m, m).norm(), 1e-10);
    EXPECT_LT(residual_smooth(m, m).norm(), 1e-10);
    const EgoState s = random_ego(rng);
    const Preintegrated pre = random_preintegration(rng);
    EgoState prev = s;
    prev.gyro_bias = pre.gyro_bias_ref;
    prev.accel_bias = pre.accel_bias_ref;
    const auto r = residual_imu(prev, consistent_successor(prev, pre), pre);
    ASSERT_TRUE(r.has_value());
    EXPECT_LT(r->norm(), 1e-10);
  }
}

TEST(Preintegrate, ZeroInputIsIdentity) {
  const auto s = constant_samples(Vec3::Zero(), Vec3::Zero(), 10, 0.01);
  const Preintegrated p = preintegrate(s, Vec3::Zero(), Vec3::Zero(), ImuNoise{});
  EXPECT_LT((p.delta_rotation - Mat3::Identity()).norm(), 1e-15);
  EXPECT_LT(p.delta_velocity.norm(), 1e-15);
  EXPECT_LT(p.delta_position.norm(), 1e-15);
  EXPECT_NEAR(p.dt, 0.1, 1e-15);
}

TEST(Preintegrate, ConstantRateRotation) {
  const double w = 0.7;
  const auto s = constant_samples(Vec3(0, 0, w), Vec3::Zero(), 100, 0.01);
  const Preintegrated p = preintegrate(s, Vec3::Zero(), Vec3::Zero(), ImuNoise{});
  EXPECT_LT((p.delta_rotation - rot_z(w * 1.0).rotation).norm(), 1e-6);
}

TEST(Preintegrate, ConstantAcceleration) {
  const double a = 2.0;
  const auto s = constant_samples(Vec3::Zero(), Vec3(a, 0, 0), 50, 0.01);
  const Preintegrated p = preintegrate(s, Vec3::Zero(), Vec3::Zero(), ImuNoise{});
  const double t = 0.5;
  EXPECT_LT((p.delta_velocity - Vec3(a * t, 0, 0)).norm(), 1e-6);
  EXPECT_LT((p.delta_position - Vec3(0.5 * a * t * t, 0, 0)).norm(), 1e-6);
}

TEST(Preintegrate, SubtractsReferenceBias) {
  const Vec3 bg(0.01, -0.02, 0.03), ba(0.1, 0.2, -0.1);
  const auto s = constant_samples(bg, ba, 10, 0.01);
  const Preintegrated p = preintegrate(s, bg, ba, ImuNoise{});
  EXPECT_LT((p.delta_rotation - Mat3::Identity()).norm(), 1e-15);
  EXPECT_LT(p.delta_velocity.norm(), 1e-15);
  EXPECT_EQ(p.gyro_bias_ref, bg);
}

TEST(Preintegrate, CovarianceIsSymmetricPositiveAndMeanMatches) {
  Rng rng(12);
  std::vector<ImuSample> s;
  for (int i = 0; i < 10; ++i) s.push_back({random_vec(rng, 0.3), random_vec(rng, 2.0), 0.01});
  const Preintegrated p = preintegrate(s, Vec3::Zero(), Vec3::Zero(), ImuNoise{});
  EXPECT_LT((p.covariance - p.covariance.transpose()).norm(), 1e-18);
  Eigen::SelfAdjointEigenSolver<Mat9> eig(p.covariance);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  const Preintegrated m = preintegrate_mean(s, Vec3::Zero(), Vec3::Zero());
  EXPECT_EQ(m.delta_rotation, p.delta_rotation);
  EXPECT_EQ(m.delta_position, p.delta_position);
}

TEST(Preintegrate, RejectsBadInput) {
  const std::vector<ImuSample> none;
  EXPECT_THROW(preintegrate(none, Vec3::Zero(), Vec3::Zero(), ImuNoise{}), std::invalid_argument);
  const auto bad = constant_samples(Vec3::Zero(), Vec3::Zero(), 3, 0.0);
  EXPECT_THROW(preintegrate(bad, Vec3::Zero(), Vec3::Zero(), ImuNoise{}), std::invalid_argument);
}

TEST(ResidualImu, StationaryEquilibrium) {
  const auto s = constant_samples(Vec3::Zero(), -kGravity, 10, 0.01);
  const Preintegrated p = preintegrate(s, Vec3::Zero(), Vec3::Zero(), ImuNoise{});
  EgoState a;
  a.pose = rot_z(0.3, Vec3(1, 2, 3));
  const auto r = residual_imu(a, a, p);
  ASSERT_TRUE(r.has_value());
  EXPECT_LT(r->norm(), 1e-8);
}

TEST(ResidualImu, ConstantVelocityLine) {
  const auto s = constant_samples(Vec3::Zero(), -kGravity, 10, 0.01);
  const Preintegrated p = preintegrate(s, Vec3::Zero(), Vec3::Zero(), ImuNoise{});
  EgoState a;
  a.velocity = Vec3(8, 0, 0);
  EgoState b = a;
  b.pose.translation = Vec3(0.8, 0, 0);
  ASSERT_LT(residual_imu(a, b, p)->norm(), 1e-6);

  b.pose.translation += Vec3(0.1, 0, 0);
  const Vec9 r = *residual_imu(a, b, p);
  EXPECT_LT((r.segment<3>(6) - Vec3(-0.1, 0, 0)).norm(), 1e-9);
  EXPECT_LT(r.head<6>().norm(), 1e-9);
}

TEST(ResidualImu, StaleBiasRequestsReintegration) {
  const auto s = constant_samples(Vec3::Zero(), -kGravity, 10, 0.01);
  const Preintegrated p = preintegrate(s, Vec3::Zero(), Vec3::Zero(), ImuNoise{});
  EgoState a;
  a.gyro_bias = Vec3(2e-3, 0, 0);
  EXPECT_FALSE(residual_imu(a, a, p).has_value());
  a.gyro_bias = Vec3(5e-4, 0, 0);
  EXPECT_TRUE(residual_imu(a, a, p).has_value());
}

TEST(ResidualBiasWalk, Difference) {
  EgoState a, b;
  b.gyro_bias = Vec3(1, 2, 3);
  b.accel_bias = Vec3(-1, 0, 1);
  Vec6 expected;
  expected << 1, 2, 3, -1, 0, 1;
  EXPECT_EQ(residual_bias_walk(a, b), expected);
}

// ---- Jacobians ----------------------------------------------------------

TEST(Jacobians, BetweenMatchesFiniteDifferences) {
  Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose c = a.inverse() * b * exp(tangent(0.1, -0.2, 0.05, 0.05, -0.1, 0.2) *
                                         uniform(rng, -2, 2));
    const auto l = linearize_between(a, b, c);
    auto fa = [&](const Pose& x) -> Eigen::VectorXd { return log(x.inverse() * b * c.inverse()); };
    auto fb = [&](const Pose& x) -> Eigen::VectorXd { return log(a.inverse() * x * c.inverse()); };
    auto fc = [&](const Pose& x) -> Eigen::VectorXd { return log(a.inverse() * b * x.inverse()); };
    EXPECT_LT(relative_error(l.d_a, numeric_pose_jacobian(fa, a)), 1e-5);
    EXPECT_LT(relative_error(l.d_b, numeric_pose_jacobian(fb, b)), 1e-5);
    EXPECT_LT(relative_error(l.d_c, numeric_pose_jacobian(fc, c)), 1e-5);
  }
}

TEST(Jacobians, SmoothAtEqualDeltas) {
  Rng rng(22);
  const Pose d = random_pose(rng, 1.0, 0.3);
  const auto j = jacobians_smooth(d, d);
  EXPECT_LT((j.d_curr - Mat6::Identity()).norm(), 1e-12);
  auto fp = [&](const Pose& x) -> Eigen::VectorXd { return residual_smooth(x, d); };
  EXPECT_LT(relative_error(j.d_prev, numeric_pose_jacobian(fp, d)), 1e-6);
}

TEST(Jacobians, PriorIsIdentityAtZeroError) {
  const Pose p = rot_z(0.2, Vec3(1, 1, 1));
  EXPECT_LT((jacobians_prior(p, p).d_state - Mat6::Identity()).norm(), 1e-15);
  EgoState s;
  s.pose = p;
  EXPECT_LT((jacobians_prior(s, s).d_state - Eigen::Matrix<double, 15, 15>::Identity()).norm(),
            1e-15);
}

TEST(Jacobians, OdometryAtConsistentStates) {
  Rng rng(23);
  const Pose a = random_pose(rng), m = random_pose(rng, 1.0, 0.2);
  const auto j = jacobians_odometry(a, a * m, m);
  EXPECT_LT((j.d_curr - adjoint(m)).norm(), 1e-10);
  EXPECT_LT((j.d_prev + Mat6::Identity()).norm(), 1e-10);
}

TEST(Jacobians, ImuMatchesFiniteDifferences) {
  Rng rng(24);
  for (int i = 0; i < 100; ++i) {
    const Preintegrated pre = random_preintegration(rng);
    EgoState a = random_ego(rng);
    a.gyro_bias = pre.gyro_bias_ref;
    a.accel_bias = pre.accel_bias_ref;
    EgoState b = consistent_successor(a, pre);
    b.pose = b.pose * exp(tangent(0.1, 0.05, -0.1, 0.02, -0.03, 0.01) * uniform(rng, -1, 1));
    b.velocity += random_vec(rng, 0.2);
    const ImuJacobians j = jacobians_imu(a, b, pre);

    auto with_pose_a = [&](const Pose& x) -> Eigen::VectorXd {
      EgoState s = a;
      s.pose = x;
      return *residual_imu(s, b, pre, kGravity, kNoThreshold);
    };
    auto with_pose_b = [&](const Pose& x) -> Eigen::VectorXd {
      EgoState s = b;
      s.pose = x;
      return *residual_imu(a, s, pre, kGravity, kNoThreshold);
    };
    auto with_vel_a = [&](const Vec3& v) -> Eigen::VectorXd {
      EgoState s = a;
      s.velocity = v;
      return *residual_imu(s, b, pre, kGravity, kNoThreshold);
    };
    auto with_vel_b = [&](const Vec3& v) -> Eigen::VectorXd {
      EgoState s = b;
      s.velocity = v;
      return *residual_imu(a, s, pre, kGravity, kNoThreshold);
    };
    EXPECT_LT(relative_error(j.d_pose_prev, numeric_pose_jacobian(with_pose_a, a.pose)), 1e-5);
    EXPECT_LT(relative_error(j.d_pose_curr, numeric_pose_jacobian(with_pose_b, b.pose)), 1e-5);
    EXPECT_LT(relative_error(j.d_vel_prev, numeric_vec3_jacobian(with_vel_a, a.velocity)), 1e-5);
    EXPECT_LT(relative_error(j.d_vel_curr, numeric_vec3_jacobian(with_vel_b, b.velocity)), 1e-5);
  }
}

// ---- noise models -------------------------------------------------------

TEST(NoiseModel, WhitensBySigmas) {
  Vec6 s;
  s << 0.1, 0.2, 0.3, 0.01, 0.02, 0.03;
  const NoiseModel m = NoiseModel::from_sigmas(s);
  const Eigen::MatrixXd expected = s.cwiseInverse().asDiagonal();
  EXPECT_LT((m.sqrt_information() - expected).norm(), 1e-12);
  const NoiseModel c = NoiseModel::from_covariance(Eigen::MatrixXd(s.cwiseAbs2().asDiagonal()));
  EXPECT_LT((c.information() - m.information()).norm(), 1e-6);
  EXPECT_THROW(m.scaled(0.0), std::invalid_argument);
}

TEST(NoiseModel, MeasuredAtWhitensPropagatedNoise) {
  Rng rng(25);
  Vec6 s;
  s << 0.05, 0.05, 0.05, 0.01, 0.01, 0.01;
  const NoiseModel base = NoiseModel::from_sigmas(s);
  const Pose z = random_pose(rng, 30.0, 1.0);
  const NoiseModel m = base.measured_at(z);
  const Mat6 cov_n = s.cwiseAbs2().asDiagonal();
  const Mat6 cov_r = adjoint(z) * cov_n * adjoint(z).transpose();
  const Eigen::MatrixXd l = m.sqrt_information();
  EXPECT_LT((l * cov_r * l.transpose() - Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-9);
}

TEST(ImuState, PropagateMatchesConsistentSuccessor) {
  Rng rng(26);
  const Preintegrated pre = random_preintegration(rng);
  EgoState a = random_ego(rng);
  const EgoState p = propagate(a, pre);
  const EgoState c = consistent_successor(a, pre);
  EXPECT_LT((p.pose.translation - c.pose.translation).norm(), 1e-12);
  EXPECT_LT((p.pose.rotation - c.pose.rotation).norm(), 1e-12);
  EXPECT_LT((p.velocity - c.velocity).norm(), 1e-12);
  EXPECT_EQ(p.gyro_bias, a.gyro_bias);
}

TEST(ImuState, RetractIsRightPerturbation) {
  Rng rng(27);
  const EgoState s = random_ego(rng);
  Vec15 d;
  d.setRandom();
  d *= 0.1;
  const EgoState r = retract(s, d);
  const Pose expected = s.pose * exp(d.head<6>());
  EXPECT_LT((r.pose.translation - expected.translation).norm(), 1e-12);
  EXPECT_LT((r.velocity - (s.velocity + d.segment<3>(6))).norm(), 1e-15);
  EXPECT_LT((r.accel_bias - (s.accel_bias + d.tail<3>())).norm(), 1e-15);
}

TEST(ImuState, BiasDivergence) {
  EgoState s;
  EXPECT_FALSE(bias_diverged(s));
  s.gyro_bias = Vec3(0.6, 0, 0);
  EXPECT_TRUE(bias_diverged(s));
}
