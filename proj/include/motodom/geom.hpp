#pragma once

// SO(3)/SE(3) toolkit used by every residual in the back end.
//
// Tangent vectors are ordered (rho, phi): three translational components
// followed by three rotational components. Perturbations are applied on the
// right, T <- T * exp(delta).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>

namespace motodom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Tangent = Vec6;

/// Raised by log maps when the rotation angle is within 1e-6 of pi.
class DegenerateRotation : public std::runtime_error {
 public:
  explicit DegenerateRotation(double angle);
  double angle() const { return angle_; }

 private:
  double angle_;
};

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Pose from_translation(double x, double y, double z) {
    return from_translation(Vec3(x, y, z));
  }
  /// Normalizes q before use; a zero quaternion is rejected.
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);

  Eigen::Quaterniond quaternion() const;

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
Vec3 transform_point(const Pose& p, const Vec3& x);

/// Rotation about z by `yaw` radians, optionally with a translation.
Pose rot_z(double yaw, const Vec3& t = Vec3::Zero());
double yaw_of(const Mat3& r);

Mat3 skew(const Vec3& v);

Mat3 so3_exp(const Vec3& phi);
/// Throws DegenerateRotation near pi.
Vec3 so3_log(const Mat3& r);
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inverse(const Vec3& phi);
/// Rotation angle in [0, pi], never throws.
double rotation_angle(const Mat3& r);

Pose exp(const Tangent& v);
/// Throws DegenerateRotation near pi.
Tangent log(const Pose& p);

/// Ad_T with exp(Ad_T xi) = T exp(xi) T^-1.
Mat6 adjoint(const Pose& p);

/// SE(3) left Jacobian [[J, Q], [0, J]].
Mat6 se3_left_jacobian(const Tangent& xi);
/// Inverse of the SE(3) right Jacobian: log(exp(xi) exp(d)) ~ xi + Jr^-1 d.
Mat6 se3_right_jacobian_inverse(const Tangent& xi);

/// Projects an approximately orthonormal matrix back onto SO(3).
Mat3 orthonormalize(const Mat3& r);

bool is_rotation(const Mat3& r, double tol = 1e-9);

}  // namespace motodom
