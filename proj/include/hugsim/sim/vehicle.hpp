#pragma once

#include <vector>

#include <json.hpp>

#include "hugsim/scene/scene_graph.hpp"
#include "hugsim/sim/geometry.hpp"

namespace hugsim::sim {

/// Ego kinematic parameters and actuation limits.
struct KinematicParams {
  double wheelbase = 2.7;   // meters
  double max_steer = 0.6;   // rad
  double min_accel = -6.0;  // m/s^2
  double max_accel = 3.0;
  int substeps = 5;         // Euler substeps per control interval
  scene::Extents extents{4.5, 1.9, 1.6};

  /// Throws kConfig naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static KinematicParams from_json(const nlohmann::json& j);
};

/// Ego state in the BEV world plane. (x, z) is the box center.
struct EgoState {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
  double v = 0.0;

  nlohmann::json to_json() const;
  static EgoState from_json(const nlohmann::json& j);
};

struct Control {
  double steer = 0.0;  // rad, positive turns towards +z of the heading (left)
  double accel = 0.0;  // m/s^2
};

/// One explicit-Euler step of
///   dx/dt = v cos(theta), dz/dt = v sin(theta), dtheta/dt = v tan(steer) / L, dv/dt = accel
/// with steer and accel clamped to the actuation limits.
EgoState bicycle_step(const EgoState& s, double steer, double accel, double dt,
                      const KinematicParams& params);

/// Holds `u` for one control interval of length dt, integrated with
/// params.substeps Euler steps.
EgoState bicycle_advance(const EgoState& s, const Control& u, double dt,
                         const KinematicParams& params);

Control clamp_control(const Control& u, const KinematicParams& params);

BevBox ego_box(const EgoState& s, const KinematicParams& params);

/// Ego frame: x forward, y left (meters).
Vec2 ego_to_world(const EgoState& s, const Vec2& p_ego);
Vec2 world_to_ego(const EgoState& s, const Vec2& p_world);

}  // namespace hugsim::sim
