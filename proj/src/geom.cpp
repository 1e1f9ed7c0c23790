#include "motodom/geom.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>

namespace motodom {

namespace {

constexpr double kSmallAngle = 1e-5;
constexpr double kPiGuard = 1e-6;

}  // namespace

DegenerateRotation::DegenerateRotation(double angle)
    : std::runtime_error("rotation angle " + std::to_string(angle) +
                         " rad is too close to pi for a unique logarithm"),
      angle_(angle) {}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  double n = q.norm();
  if (!(n > 1e-12)) throw std::invalid_argument("zero-norm quaternion");
  return {q.normalized().toRotationMatrix(), t};
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  // Canonical hemisphere keeps serialization stable.
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

Pose compose(const Pose& a, const Pose& b) { return a * b; }
Pose inverse(const Pose& p) { return p.inverse(); }
Vec3 transform_point(const Pose& p, const Vec3& x) { return p * x; }

Pose rot_z(double yaw, const Vec3& t) {
  return {Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), t};
}

double yaw_of(const Mat3& r) { return std::atan2(r(1, 0), r(0, 0)); }

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<  0.0,  -v.z(),  v.y(),
        v.z(),  0.0,  -v.x(),
       -v.y(),  v.x(),  0.0;
  // clang-format on
  return s;
}

Mat3 so3_exp(const Vec3& phi) {
  double theta = phi.norm();
  Mat3 k = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  double a = std::sin(theta) / theta;
  double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

double rotation_angle(const Mat3& r) {
  Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  double s = 0.5 * w.norm();
  double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

Vec3 so3_log(const Mat3& r) {
  Vec3 w = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  double s = w.norm();
  double c = 0.5 * (r.trace() - 1.0);
  double theta = std::atan2(s, c);
  if (theta > std::numbers::pi - kPiGuard) throw DegenerateRotation(theta);
  if (theta < kSmallAngle) {
    return w * (1.0 + theta * theta / 6.0);
  }
  return w * (theta / s);
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  double theta = phi.norm();
  Mat3 k = skew(phi);
  double a, b;
  if (theta < kSmallAngle) {
    a = 0.5 - theta * theta / 24.0;
    b = 1.0 / 6.0 - theta * theta / 120.0;
  } else {
    double t2 = theta * theta;
    a = (1.0 - std::cos(theta)) / t2;
    b = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 so3_right_jacobian(const Vec3& phi) { return so3_left_jacobian(-phi); }

namespace {

// Coefficient of phi^2 in both J_l^-1 and J_r^-1.
double inverse_jacobian_coeff(double theta) {
  if (theta < 1e-4) return 1.0 / 12.0 + theta * theta / 720.0;
  return 1.0 / (theta * theta) -
         (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  Mat3 k = skew(phi);
  return Mat3::Identity() - 0.5 * k + inverse_jacobian_coeff(phi.norm()) * k * k;
}

// Coupling block Q(rho, phi) of the SE(3) left Jacobian.
Mat3 se3_q_block(const Vec3& rho, const Vec3& phi) {
  double theta = phi.norm();
  Mat3 p = skew(phi);
  Mat3 r = skew(rho);
  double c1, c2, c3;
  double t2 = theta * theta;
  if (theta < 1e-2) {
    c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
  } else {
    double s = std::sin(theta), c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  Mat3 prp = p * r * p;
  return 0.5 * r + c1 * (p * r + r * p + prp) +
         c2 * (p * p * r + r * p * p - 3.0 * prp) +
         c3 * (prp * p + p * prp);
}

}  // namespace

Mat3 so3_right_jacobian_inverse(const Vec3& phi) {
  Mat3 k = skew(phi);
  return Mat3::Identity() + 0.5 * k + inverse_jacobian_coeff(phi.norm()) * k * k;
}

Pose exp(const Tangent& v) {
  Vec3 rho = v.head<3>();
  Vec3 phi = v.tail<3>();
  return {so3_exp(phi), so3_left_jacobian(phi) * rho};
}

Tangent log(const Pose& p) {
  Vec3 phi = so3_log(p.rotation);
  Tangent out;
  out.head<3>() = so3_left_jacobian_inverse(phi) * p.translation;
  out.tail<3>() = phi;
  return out;
}

Mat6 adjoint(const Pose& p) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = p.rotation;
  ad.topRightCorner<3, 3>() = skew(p.translation) * p.rotation;
  ad.bottomRightCorner<3, 3>() = p.rotation;
  return ad;
}

Mat6 se3_left_jacobian(const Tangent& xi) {
  Vec3 rho = xi.head<3>();
  Vec3 phi = xi.tail<3>();
  Mat6 j = Mat6::Zero();
  Mat3 jl = so3_left_jacobian(phi);
  j.topLeftCorner<3, 3>() = jl;
  j.bottomRightCorner<3, 3>() = jl;
  j.topRightCorner<3, 3>() = se3_q_block(rho, phi);
  return j;
}

Mat6 se3_right_jacobian_inverse(const Tangent& xi) {
  // J_r(xi) = J_l(-xi); invert the block upper-triangular form directly.
  Vec3 rho = -xi.head<3>();
  Vec3 phi = -xi.tail<3>();
  Mat3 jinv = so3_left_jacobian_inverse(phi);
  Mat3 q = se3_q_block(rho, phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.topRightCorner<3, 3>() = -jinv * q * jinv;
  return out;
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  Mat3 out = u * v.transpose();
  if (out.determinant() < 0.0) {
    u.col(2) *= -1.0;
    out = u * v.transpose();
  }
  return out;
}

bool is_rotation(const Mat3& r, double tol) {
  return (r * r.transpose() - Mat3::Identity()).norm() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace motodom
