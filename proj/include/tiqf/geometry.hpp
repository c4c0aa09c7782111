#pragma once

#include <Eigen/Dense>
#include <vector>

namespace tiqf {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Scalar-first quaternion, Hamilton product convention.
/// q and -q encode the same rotation; metric operations are sign-agnostic.
struct Quaternion {
  double w{1.0};
  double x{0.0};
  double y{0.0};
  double z{0.0};

  static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }
  static Quaternion from_axis_angle(const Vec3& axis, double angle_rad);
  /// Intrinsic X-Y-Z Euler composition (q = qx * qy * qz), angles in radians.
  static Quaternion from_euler_xyz(double rx, double ry, double rz);
  static Quaternion from_coeffs(const Vec4& c) { return {c[0], c[1], c[2], c[3]}; }

  Vec4 coeffs() const { return {w, x, y, z}; }
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  double norm() const;
  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
};

/// Unit rotation plus translation in meters.
struct Pose {
  Quaternion rotation{};
  Vec3 translation{Vec3::Zero()};

  static Pose identity() { return {}; }
};

Quaternion quat_normalize(const Quaternion& q);
Mat3 quat_to_matrix(const Quaternion& q);
Quaternion quat_multiply(const Quaternion& a, const Quaternion& b);
Mat3 skew(const Vec3& v);

Vec3 apply_pose(const Pose& p, const Vec3& pt);
std::vector<Vec3> apply_pose(const Pose& p, const std::vector<Vec3>& pts);
Pose pose_inverse(const Pose& p);

/// Geodesic angle between two unit quaternions in degrees, in [0, 180].
double rotation_error_deg(const Quaternion& q_est, const Quaternion& q_gt);

}  // namespace tiqf
