#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace hugsim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

/// Rotation matrix of a (w, x, y, z) quaternion. The quaternion is normalized
/// first, so q and -q and any positive multiple map to the same rotation.
inline Mat3 quat_to_rotation(const Vec4& q_raw) {
  const Vec4 q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Vec4 rotation_to_quat(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

// Rotation about the world y axis (down) that turns the +x axis towards +z by
// `yaw`. This is the BEV heading convention used by every vehicle model:
// heading (cos yaw, sin yaw) in the (x, z) plane.
inline Mat3 yaw_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 r;
  r << c, 0, -s, 0, 1, 0, s, 0, c;
  return r;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2 * kPi);
  if (a < 0) a += 2 * kPi;
  return a - kPi;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace hugsim
