#pragma once

#include <vector>

#include <json.hpp>

#include "hugsim/scene/gaussian.hpp"

namespace hugsim::scene {

/// A camera-anchored local ground plane. The ground is assumed flat in the
/// anchor camera frame for points with camera depth in [0, depth].
struct GroundWindow {
  Mat3 rotation = Mat3::Identity();  // world -> anchor camera
  Vec3 translation = Vec3::Zero();
  double depth = 10.0;
  std::vector<int> members;  // indices into the ground Gaussian set
  double height = 0.0;       // mean camera-frame y of the members

  double camera_height_of(const Vec3& p_world) const {
    return rotation.row(1).dot(p_world) + translation.y();
  }
  double camera_depth_of(const Vec3& p_world) const {
    return rotation.row(2).dot(p_world) + translation.z();
  }
  Vec3 anchor_position() const { return -rotation.transpose() * translation; }
};

struct GroundPlaneSet {
  std::vector<GroundWindow> windows;

  /// Assigns every ground Gaussian to each window whose depth range contains
  /// it; Gaussians outside every window join the nearest anchor's window.
  static GroundPlaneSet build(const std::vector<std::pair<Mat3, Vec3>>& anchors,
                              const GaussianSet& ground, double window_depth);

  /// Recomputes each window's plane height from the current member positions.
  void refresh_heights(const GaussianSet& ground);

  /// World y of the ground surface below BEV point (x, z). Picks the covering
  /// window with the nearest anchor; falls back to the nearest anchor when no
  /// window covers the point. Windows without members are ignored. Returns `fallback` when there are no windows.
  double height_at(double x, double z, double fallback = 0.0) const;

  nlohmann::json to_json() const;
  static GroundPlaneSet from_json(const nlohmann::json& j);
};

}  // namespace hugsim::scene
