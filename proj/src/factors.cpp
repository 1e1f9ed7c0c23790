#include "motodom/factors.hpp"

#include <cmath>
#include <stdexcept>

namespace motodom {

bool bias_diverged(const EgoState& s, const BiasCaps& caps) {
  return s.gyro_bias.norm() > caps.gyro || s.accel_bias.norm() > caps.accel;
}

namespace {

Preintegrated integrate(std::span<const ImuSample> samples, const Vec3& gyro_bias,
                        const Vec3& accel_bias, const ImuNoise* noise) {
  if (samples.empty()) throw std::invalid_argument("preintegrate: no IMU samples");
  Preintegrated out;
  out.gyro_bias_ref = gyro_bias;
  out.accel_bias_ref = accel_bias;

  Mat3& dr = out.delta_rotation;
  Vec3& dv = out.delta_velocity;
  Vec3& dp = out.delta_position;
  Mat9& cov = out.covariance;

  for (const ImuSample& s : samples) {
    if (!(s.dt > 0.0)) throw std::invalid_argument("preintegrate: non-positive dt");
    const double dt = s.dt;
    const Vec3 w = s.gyro - gyro_bias;
    const Vec3 a = s.accel - accel_bias;

    const Mat3 step_rot = so3_exp(w * dt);
    if (noise != nullptr) {
      // Error-state transition, first order, (phi, v, p) ordering.
      Mat9 f = Mat9::Identity();
      f.block<3, 3>(0, 0) = step_rot.transpose();
      f.block<3, 3>(3, 0) = -dr * skew(a) * dt;
      f.block<3, 3>(6, 0) = -0.5 * dr * skew(a) * dt * dt;
      f.block<3, 3>(6, 3) = Mat3::Identity() * dt;
      Eigen::Matrix<double, 9, 6> g = Eigen::Matrix<double, 9, 6>::Zero();
      g.block<3, 3>(0, 0) = so3_right_jacobian(w * dt) * dt;
      g.block<3, 3>(3, 3) = dr * dt;
      g.block<3, 3>(6, 3) = 0.5 * dr * dt * dt;
      Eigen::Matrix<double, 6, 6> q = Eigen::Matrix<double, 6, 6>::Zero();
      q.diagonal().head<3>().setConstant(noise->gyro_density * noise->gyro_density / dt);
      q.diagonal().tail<3>().setConstant(noise->accel_density * noise->accel_density / dt);
      cov = f * cov * f.transpose() + g * q * g.transpose();
    }

    const Mat3 r_mid = dr * so3_exp(0.5 * w * dt);
    dp += dv * dt + 0.5 * r_mid * a * dt * dt;
    dv += r_mid * a * dt;
    dr = dr * step_rot;
    out.dt += dt;
  }
  dr = orthonormalize(dr);
  return out;
}

}  // namespace

Preintegrated preintegrate(std::span<const ImuSample> samples,
                           const Vec3& gyro_bias, const Vec3& accel_bias,
                           const ImuNoise& noise) {
  return integrate(samples, gyro_bias, accel_bias, &noise);
}

Preintegrated preintegrate_mean(std::span<const ImuSample> samples,
                                const Vec3& gyro_bias, const Vec3& accel_bias) {
  return integrate(samples, gyro_bias, accel_bias, nullptr);
}

// ---- noise ----------------------------------------------------------------

NoiseModel NoiseModel::from_sigmas(const Eigen::VectorXd& sigmas) {
  if ((sigmas.array() <= 0.0).any())
    throw std::invalid_argument("noise sigmas must be positive");
  NoiseModel m;
  m.sqrt_info_ = sigmas.cwiseInverse().asDiagonal();
  return m;
}

NoiseModel NoiseModel::from_information(const Eigen::MatrixXd& info) {
  if (info.rows() != info.cols()) throw std::invalid_argument("information not square");
  if ((info - info.transpose()).norm() > 1e-9 * std::max(1.0, info.norm()))
    throw std::invalid_argument("information not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("information not positive definite");
  NoiseModel m;
  m.sqrt_info_ = llt.matrixU();
  return m;
}

NoiseModel NoiseModel::from_covariance(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("covariance not positive definite");
  Eigen::MatrixXd info = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  info = 0.5 * (info + info.transpose());
  return from_information(info);
}

NoiseModel NoiseModel::scaled(double info_scale) const {
  if (!(info_scale > 0.0)) throw std::invalid_argument("scale must be positive");
  NoiseModel m;
  m.sqrt_info_ = sqrt_info_ * std::sqrt(info_scale);
  return m;
}

NoiseModel NoiseModel::measured_at(const Pose& z) const {
  if (dim() != 6) throw std::invalid_argument("measured_at needs a 6-dim model");
  NoiseModel m;
  m.sqrt_info_ = sqrt_info_ * adjoint(z.inverse());
  return m;
}

namespace {

NoiseModel pose_noise(const Vec3& t, const Vec3& r) {
  Vec6 s;
  s << t, r;
  return NoiseModel::from_sigmas(s);
}

}  // namespace

NoiseModel NoiseConfig::odometry() const { return pose_noise(odometry_sigma_t, odometry_sigma_r); }
NoiseModel NoiseConfig::observation() const {
  return pose_noise(observation_sigma_t, observation_sigma_r);
}
NoiseModel NoiseConfig::motion() const { return pose_noise(motion_sigma_t, motion_sigma_r); }
NoiseModel NoiseConfig::smooth() const { return pose_noise(smooth_sigma_t, smooth_sigma_r); }
NoiseModel NoiseConfig::object_prior() const {
  return pose_noise(object_prior_sigma_t, object_prior_sigma_r);
}

NoiseModel NoiseConfig::ego_prior() const {
  Vec15 s;
  s << prior_sigma_t, prior_sigma_r, prior_sigma_v, prior_sigma_bg, prior_sigma_ba;
  return NoiseModel::from_sigmas(s);
}

NoiseModel NoiseConfig::bias_walk(double dt) const {
  Vec6 s;
  double root = std::sqrt(std::max(dt, 1e-9));
  s << Vec3::Constant(imu.gyro_walk * root), Vec3::Constant(imu.accel_walk * root);
  return NoiseModel::from_sigmas(s);
}

// ---- residuals --------------------------------------------------------------

Tangent residual_odometry(const Pose& prev, const Pose& curr, const Pose& meas) {
  return log(prev.inverse() * curr * meas.inverse());
}

Tangent residual_observation(const Pose& ego, const Pose& obj_world, const Pose& det) {
  return log(ego.inverse() * obj_world * det.inverse());
}

Tangent residual_motion(const Pose& obj_prev, const Pose& obj_curr, const Pose& delta) {
  return log(obj_prev.inverse() * obj_curr * delta.inverse());
}

Tangent residual_smooth(const Pose& delta_prev, const Pose& delta_curr) {
  return log(delta_prev.inverse() * delta_curr);
}

namespace {

double bias_distance(const EgoState& s, const Preintegrated& pre) {
  Vec6 d;
  d << s.gyro_bias - pre.gyro_bias_ref, s.accel_bias - pre.accel_bias_ref;
  return d.norm();
}

Vec9 imu_error(const EgoState& i, const EgoState& j, const Preintegrated& pre,
               const Vec3& g) {
  const Mat3 rit = i.pose.rotation.transpose();
  const double dt = pre.dt;
  Vec9 r;
  r.segment<3>(0) = so3_log(j.pose.rotation.transpose() * i.pose.rotation * pre.delta_rotation);
  r.segment<3>(3) = pre.delta_velocity - rit * (j.velocity - i.velocity - g * dt);
  r.segment<3>(6) = pre.delta_position -
                    rit * (j.pose.translation - i.pose.translation - i.velocity * dt -
                           0.5 * g * dt * dt);
  return r;
}

}  // namespace

std::optional<Vec9> residual_imu(const EgoState& prev, const EgoState& curr,
                                 const Preintegrated& pre, const Vec3& gravity,
                                 double threshold) {
  if (bias_distance(prev, pre) > threshold) return std::nullopt;
  return imu_error(prev, curr, pre, gravity);
}

Vec6 residual_bias_walk(const EgoState& prev, const EgoState& curr) {
  Vec6 r;
  r << curr.gyro_bias - prev.gyro_bias, curr.accel_bias - prev.accel_bias;
  return r;
}

Tangent residual_prior(const Pose& state, const Pose& prior) {
  return log(prior.inverse() * state);
}

Vec15 residual_prior(const EgoState& state, const EgoState& prior) {
  Vec15 r;
  r << residual_prior(state.pose, prior.pose), state.velocity - prior.velocity,
      state.gyro_bias - prior.gyro_bias, state.accel_bias - prior.accel_bias;
  return r;
}

// ---- Jacobians --------------------------------------------------------------

BetweenLinearization linearize_between(const Pose& a, const Pose& b, const Pose& c) {
  const Pose e = a.inverse() * b * c.inverse();
  BetweenLinearization out;
  out.residual = log(e);
  const Mat6 jr_inv = se3_right_jacobian_inverse(out.residual);
  const Mat6 ad_c = adjoint(c);
  out.d_a = -jr_inv * adjoint(e.inverse());
  out.d_b = jr_inv * ad_c;
  out.d_c = -out.d_b;
  return out;
}

OdometryJacobians jacobians_odometry(const Pose& prev, const Pose& curr, const Pose& meas) {
  auto l = linearize_between(prev, curr, meas);
  return {l.residual, l.d_a, l.d_b};
}

ObservationJacobians jacobians_observation(const Pose& ego, const Pose& obj, const Pose& det) {
  auto l = linearize_between(ego, obj, det);
  return {l.residual, l.d_a, l.d_b};
}

MotionJacobians jacobians_motion(const Pose& obj_prev, const Pose& obj_curr, const Pose& delta) {
  auto l = linearize_between(obj_prev, obj_curr, delta);
  return {l.residual, l.d_a, l.d_b, l.d_c};
}

SmoothJacobians jacobians_smooth(const Pose& delta_prev, const Pose& delta_curr) {
  auto l = linearize_between(delta_prev, delta_curr, Pose::identity());
  return {l.residual, l.d_a, l.d_b};
}

PriorJacobians jacobians_prior(const Pose& state, const Pose& prior) {
  Tangent r = residual_prior(state, prior);
  return {r, se3_right_jacobian_inverse(r)};
}

EgoPriorJacobians jacobians_prior(const EgoState& state, const EgoState& prior) {
  EgoPriorJacobians out;
  out.residual = residual_prior(state, prior);
  out.d_state.setIdentity();
  out.d_state.topLeftCorner<6, 6>() = se3_right_jacobian_inverse(out.residual.head<6>());
  return out;
}

ImuJacobians jacobians_imu(const EgoState& prev, const EgoState& curr,
                           const Preintegrated& pre, const Vec3& gravity) {
  ImuJacobians out;
  out.residual = imu_error(prev, curr, pre, gravity);
  out.d_pose_prev.setZero();
  out.d_vel_prev.setZero();
  out.d_pose_curr.setZero();
  out.d_vel_curr.setZero();

  const Mat3& ri = prev.pose.rotation;
  const Mat3& rj = curr.pose.rotation;
  const Mat3 rit = ri.transpose();
  const double dt = pre.dt;
  const Mat3 e = rj.transpose() * ri * pre.delta_rotation;
  const Mat3 jr_inv = so3_right_jacobian_inverse(out.residual.segment<3>(0));

  const Vec3 u = curr.velocity - prev.velocity - gravity * dt;
  const Vec3 w = curr.pose.translation - prev.pose.translation - prev.velocity * dt -
                 0.5 * gravity * dt * dt;

  // Pose tangent is (rho, phi): columns 0..2 translation, 3..5 rotation.
  out.d_pose_prev.block<3, 3>(0, 3) = jr_inv * pre.delta_rotation.transpose();
  out.d_pose_curr.block<3, 3>(0, 3) = -jr_inv * e.transpose();

  out.d_pose_prev.block<3, 3>(3, 3) = -skew(rit * u);
  out.d_vel_prev.block<3, 3>(3, 0) = rit;
  out.d_vel_curr.block<3, 3>(3, 0) = -rit;

  out.d_pose_prev.block<3, 3>(6, 0) = Mat3::Identity();
  out.d_pose_prev.block<3, 3>(6, 3) = -skew(rit * w);
  out.d_vel_prev.block<3, 3>(6, 0) = rit * dt;
  out.d_pose_curr.block<3, 3>(6, 0) = -rit * rj;
  return out;
}

EgoState retract(const EgoState& s, const Vec15& d) {
  EgoState out = s;
  out.pose = s.pose * exp(d.head<6>());
  out.pose.rotation = orthonormalize(out.pose.rotation);
  out.velocity += d.segment<3>(6);
  out.gyro_bias += d.segment<3>(9);
  out.accel_bias += d.segment<3>(12);
  return out;
}

EgoState propagate(const EgoState& s, const Preintegrated& pre, const Vec3& gravity) {
  EgoState out = s;
  const Mat3& r = s.pose.rotation;
  const double dt = pre.dt;
  out.pose.rotation = orthonormalize(r * pre.delta_rotation);
  out.pose.translation = s.pose.translation + s.velocity * dt + 0.5 * gravity * dt * dt +
                         r * pre.delta_position;
  out.velocity = s.velocity + gravity * dt + r * pre.delta_velocity;
  return out;
}

}  // namespace motodom
