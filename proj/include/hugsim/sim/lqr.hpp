#pragma once

#include <array>
#include <vector>

#include <json.hpp>

#include "hugsim/sim/vehicle.hpp"

namespace hugsim::sim {

/// Planned point in the ego frame (x forward, y left) at t seconds from now.
struct Waypoint {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
};

struct LqrConfig {
  std::array<double, 4> q{1.0, 1.0, 2.0, 0.5};  // x, z, theta, v
  std::array<double, 2> r{4.0, 1.0};            // steer, accel
  int horizon = 20;                             // control intervals

  void validate() const;
  nlohmann::json to_json() const;
  static LqrConfig from_json(const nlohmann::json& j);
};

/// Tracks the waypoint reference with a finite-horizon time-varying LQR on
/// the bicycle model linearized about the reference. The reference is the
/// piecewise-linear interpolation of the waypoints in time, extended back to
/// t = 0 along the first segment. Returns one clamped control per interval
/// of length dt over the horizon (the first one is applied now).
/// Throws kStalePlan when no waypoint lies ahead of the ego and
/// kInvalidArgument for fewer than two waypoints or non-increasing times.
std::vector<Control> lqr_control(const std::vector<Waypoint>& waypoints, const EgoState& ego,
                                 double dt, const KinematicParams& params,
                                 const LqrConfig& config = {});

}  // namespace hugsim::sim
