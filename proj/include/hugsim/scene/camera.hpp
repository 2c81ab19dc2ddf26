#pragma once

#include <optional>

#include <json.hpp>

#include "hugsim/core/math.hpp"

namespace hugsim::scene {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
/// `rotation`/`translation` map world points into the camera frame:
/// p_cam = rotation * p_world + translation.
struct Camera {
  Intrinsics intrinsics;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 0;
  int height = 0;

  Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Pixel coordinates of a camera-frame point; nullopt when z <= near.
  std::optional<Vec2> project_camera_point(const Vec3& p_cam, double near = 1e-6) const;
  std::optional<Vec2> project(const Vec3& p_world, double near = 1e-6) const {
    return project_camera_point(to_camera(p_world), near);
  }

  /// Builds a camera at `position` whose optical axis is `forward` with
  /// image-down close to `down` (both world-frame directions).
  static Camera look_along(const Intrinsics& k, int width, int height,
                           const Vec3& position, const Vec3& forward,
                           const Vec3& down = Vec3(0, 1, 0));

  nlohmann::json to_json() const;
  static Camera from_json(const nlohmann::json& j);
};

}  // namespace hugsim::scene
