#pragma once

// Residuals and Jacobians for the factor types of the joint ego/object graph:
// LiDAR odometry, object observation, ternary object motion, smooth motion,
// IMU pre-integration, bias random walk and priors.
//
// Pose residuals have the form log(A^-1 * B * C^-1). All Jacobians use the
// right-perturbation convention T <- T * exp(delta).

#include "motodom/geom.hpp"

#include <Eigen/Cholesky>

#include <array>
#include <optional>
#include <span>

namespace motodom {

using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat96 = Eigen::Matrix<double, 9, 6>;
using Mat93 = Eigen::Matrix<double, 9, 3>;

/// Gravity in the world frame (m/s^2), not estimated.
inline const Vec3 kGravity{0.0, 0.0, -9.81};

struct EgoState {
  Pose pose;                          // T^W_k
  Vec3 velocity = Vec3::Zero();       // world frame, m/s
  Vec3 gyro_bias = Vec3::Zero();      // rad/s
  Vec3 accel_bias = Vec3::Zero();     // m/s^2
};

struct BiasCaps {
  double gyro = 0.5;   // rad/s
  double accel = 2.0;  // m/s^2
};

/// True when either bias exceeds its cap, i.e. the estimate has diverged.
bool bias_diverged(const EgoState& s, const BiasCaps& caps = {});

/// Ego tangent layout: rho(0..2) phi(3..5) v(6..8) bg(9..11) ba(12..14).
constexpr int kEgoDim = 15;
constexpr int kPoseDim = 6;

struct ImuSample {
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // m/s^2 specific force, body frame
  double dt = 0.0;            // s, interval this sample covers
};

struct ImuNoise {
  double gyro_density = 2e-4;   // rad/s/sqrt(Hz)
  double accel_density = 2e-3;  // m/s^2/sqrt(Hz)
  double gyro_walk = 1e-5;      // rad/s^2/sqrt(Hz)
  double accel_walk = 1e-4;     // m/s^3/sqrt(Hz)
};

/// Relative motion accumulated from IMU samples between two frames.
/// Residual/covariance block order is (rotation, velocity, position).
struct Preintegrated {
  Mat3 delta_rotation = Mat3::Identity();
  Vec3 delta_velocity = Vec3::Zero();
  Vec3 delta_position = Vec3::Zero();
  double dt = 0.0;
  Vec3 gyro_bias_ref = Vec3::Zero();
  Vec3 accel_bias_ref = Vec3::Zero();
  Mat9 covariance = Mat9::Zero();
};

/// Midpoint-rule pre-integration with the reference bias subtracted from
/// every sample. Throws std::invalid_argument on an empty sequence or a
/// non-positive dt.
Preintegrated preintegrate(std::span<const ImuSample> samples,
                           const Vec3& gyro_bias, const Vec3& accel_bias,
                           const ImuNoise& noise);
/// Same deltas without covariance propagation.
Preintegrated preintegrate_mean(std::span<const ImuSample> samples,
                                const Vec3& gyro_bias, const Vec3& accel_bias);

/// Square-root information L with Q^-1 = L^T L; whitened residual is L r.
class NoiseModel {
 public:
  NoiseModel() = default;
  static NoiseModel from_sigmas(const Eigen::VectorXd& sigmas);
  static NoiseModel from_covariance(const Eigen::MatrixXd& cov);
  static NoiseModel from_information(const Eigen::MatrixXd& info);

  int dim() const { return static_cast<int>(sqrt_info_.rows()); }
  const Eigen::MatrixXd& sqrt_information() const { return sqrt_info_; }
  Eigen::MatrixXd information() const { return sqrt_info_.transpose() * sqrt_info_; }
  NoiseModel scaled(double info_scale) const;
  /// For a 6-dim model of noise n in z = z_true * exp(n): the same noise seen
  /// by a residual of the form log(... * z^-1), i.e. covariance Ad(z) S Ad(z)^T.
  NoiseModel measured_at(const Pose& z) const;

 private:
  Eigen::MatrixXd sqrt_info_;
};

/// Per-factor-type noise, in (translation m, rotation rad) sigmas per axis.
struct NoiseConfig {
  Vec3 odometry_sigma_t = Vec3::Constant(0.05);
  Vec3 odometry_sigma_r = Vec3::Constant(0.01);
  Vec3 observation_sigma_t = Vec3::Constant(0.3);
  Vec3 observation_sigma_r = Vec3::Constant(0.1);
  Vec3 motion_sigma_t = Vec3::Constant(0.1);
  Vec3 motion_sigma_r = Vec3::Constant(0.05);
  Vec3 smooth_sigma_t = Vec3::Constant(0.5);
  Vec3 smooth_sigma_r = Vec3::Constant(0.2);
  // Prior installed on the oldest ego state when the window slides.
  Vec3 prior_sigma_t = Vec3::Constant(0.005);
  Vec3 prior_sigma_r = Vec3::Constant(2e-4);
  Vec3 prior_sigma_v = Vec3::Constant(0.02);
  Vec3 prior_sigma_bg = Vec3::Constant(1e-4);
  Vec3 prior_sigma_ba = Vec3::Constant(2e-3);
  // Prior for static-object nodes that lost all their observations.
  Vec3 object_prior_sigma_t = Vec3::Constant(0.3);
  Vec3 object_prior_sigma_r = Vec3::Constant(0.1);
  ImuNoise imu;

  NoiseModel odometry() const;
  NoiseModel observation() const;
  NoiseModel motion() const;
  NoiseModel smooth() const;
  NoiseModel ego_prior() const;
  NoiseModel object_prior() const;
  NoiseModel bias_walk(double dt) const;
};

// ---- residuals ------------------------------------------------------------

/// log((T_prev^-1 T_curr) meas^-1).
Tangent residual_odometry(const Pose& prev, const Pose& curr, const Pose& meas);
/// log((T_ego^-1 T_obj) det^-1), det being the sensor-frame detection.
Tangent residual_observation(const Pose& ego, const Pose& obj_world, const Pose& det);
/// log((T_obj_prev^-1 T_obj_curr) delta^-1).
Tangent residual_motion(const Pose& obj_prev, const Pose& obj_curr, const Pose& delta);
/// log(delta_prev^-1 delta_curr).
Tangent residual_smooth(const Pose& delta_prev, const Pose& delta_curr);

/// Default bias distance beyond which a pre-integration is considered stale.
constexpr double kReintegrationThreshold = 1e-3;

/// Rotation/velocity/position pre-integration residual, measured minus
/// predicted:
///   r_R = log(R_j^T R_i dR)
///   r_v = dv - R_i^T (v_j - v_i - g dt)
///   r_p = dp - R_i^T (p_j - p_i - v_i dt - g dt^2 / 2)
/// Returns nullopt when s_prev's bias is farther than `threshold` from the
/// bias the samples were integrated with; the caller must re-integrate.
std::optional<Vec9> residual_imu(const EgoState& prev, const EgoState& curr,
                                 const Preintegrated& pre,
                                 const Vec3& gravity = kGravity,
                                 double threshold = kReintegrationThreshold);

/// Bias random walk: (bg_j - bg_i, ba_j - ba_i).
Vec6 residual_bias_walk(const EgoState& prev, const EgoState& curr);

Tangent residual_prior(const Pose& state, const Pose& prior);
/// (log(prior^-1 T), v - v0, bg - bg0, ba - ba0).
Vec15 residual_prior(const EgoState& state, const EgoState& prior);

// ---- Jacobians ------------------------------------------------------------

/// r = log(A^-1 B C^-1) with Jacobians w.r.t. right perturbations of A, B, C.
struct BetweenLinearization {
  Tangent residual;
  Mat6 d_a;
  Mat6 d_b;
  Mat6 d_c;
};
BetweenLinearization linearize_between(const Pose& a, const Pose& b, const Pose& c);

struct OdometryJacobians { Tangent residual; Mat6 d_prev, d_curr; };
OdometryJacobians jacobians_odometry(const Pose& prev, const Pose& curr, const Pose& meas);

struct ObservationJacobians { Tangent residual; Mat6 d_ego, d_obj; };
ObservationJacobians jacobians_observation(const Pose& ego, const Pose& obj, const Pose& det);

struct MotionJacobians { Tangent residual; Mat6 d_prev, d_curr, d_delta; };
MotionJacobians jacobians_motion(const Pose& obj_prev, const Pose& obj_curr, const Pose& delta);

struct SmoothJacobians { Tangent residual; Mat6 d_prev, d_curr; };
SmoothJacobians jacobians_smooth(const Pose& delta_prev, const Pose& delta_curr);

struct PriorJacobians { Tangent residual; Mat6 d_state; };
PriorJacobians jacobians_prior(const Pose& state, const Pose& prior);

struct EgoPriorJacobians { Vec15 residual; Eigen::Matrix<double, 15, 15> d_state; };
EgoPriorJacobians jacobians_prior(const EgoState& state, const EgoState& prior);

/// Jacobians of the IMU residual with respect to the pose (rho, phi) and
/// velocity blocks of both states. Bias dependence is handled by
/// re-integration, so no bias blocks are returned here.
struct ImuJacobians {
  Vec9 residual;
  Mat96 d_pose_prev;
  Mat93 d_vel_prev;
  Mat96 d_pose_curr;
  Mat93 d_vel_curr;
};
/// Evaluates regardless of staleness.
ImuJacobians jacobians_imu(const EgoState& prev, const EgoState& curr,
                           const Preintegrated& pre, const Vec3& gravity = kGravity);

/// Ego state retraction: pose <- pose exp(d[0..5]), other blocks additive.
EgoState retract(const EgoState& s, const Vec15& d);

/// Predicts the state at the end of `pre` by IMU propagation; biases copied.
EgoState propagate(const EgoState& s, const Preintegrated& pre,
                   const Vec3& gravity = kGravity);

}  // namespace motodom
