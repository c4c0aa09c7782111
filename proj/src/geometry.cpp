#include "tiqf/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace tiqf {

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (n <= 0.0) {
    throw std::invalid_argument("axis-angle: zero axis");
  }
  const double half = 0.5 * angle_rad;
  const Vec3 u = axis / n * std::sin(half);
  return {std::cos(half), u.x(), u.y(), u.z()};
}

Quaternion Quaternion::from_euler_xyz(double rx, double ry, double rz) {
  const Quaternion qx = from_axis_angle(Vec3::UnitX(), rx);
  const Quaternion qy = from_axis_angle(Vec3::UnitY(), ry);
  const Quaternion qz = from_axis_angle(Vec3::UnitZ(), rz);
  return quat_multiply(quat_multiply(qx, qy), qz);
}

double Quaternion::norm() const {
  return std::sqrt(w * w + x * x + y * y + z * z);
}

Quaternion quat_normalize(const Quaternion& q) {
  const double n = q.norm();
  if (n <= 0.0 || !std::isfinite(n)) {
    throw std::invalid_argument("degenerate quaternion");
  }
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

Mat3 quat_to_matrix(const Quaternion& q) {
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("quat_to_matrix: quaternion is not unit");
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(),
      v.z(), 0, -v.x(),
      -v.y(), v.x(), 0;
  return s;
}

Vec3 apply_pose(const Pose& p, const Vec3& pt) {
  return quat_to_matrix(p.rotation) * pt + p.translation;
}

std::vector<Vec3> apply_pose(const Pose& p, const std::vector<Vec3>& pts) {
  const Mat3 r = quat_to_matrix(p.rotation);
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& pt : pts) {
    out.push_back(r * pt + p.translation);
  }
  return out;
}

Pose pose_inverse(const Pose& p) {
  const Quaternion qi = p.rotation.conjugate();
  return {qi, -(quat_to_matrix(qi) * p.translation)};
}

double rotation_error_deg(const Quaternion& q_est, const Quaternion& q_gt) {
  double c = std::abs(q_est.dot(q_gt));
  c = std::min(c, 1.0);
  return 2.0 * std::acos(c) * 180.0 / M_PI;
}

}  // namespace tiqf
