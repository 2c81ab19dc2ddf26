#pragma once

#include <vector>

#include <json.hpp>

namespace hugsim::recon {

struct UnicycleState {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
};

/// Knot states plus per-interval velocities. Velocities are rates
/// (m/s, rad/s); interval k spans [times[k], times[k+1]].
struct UnicycleTrajectory {
  std::vector<double> times;
  std::vector<UnicycleState> states;
  std::vector<double> v;
  std::vector<double> omega;

  std::size_t knot_count() const { return states.size(); }
  double interval(std::size_t k) const { return times[k + 1] - times[k]; }

  /// Throws kInvariantViolation on non-increasing knots or size mismatch.
  void validate() const;

  nlohmann::json to_json() const;
  static UnicycleTrajectory from_json(const nlohmann::json& j);
};

/// One discrete unicycle transition with per-step displacement `v` and
/// heading change `omega`:
///   theta' = theta + omega
///   x'     = x + v/omega (sin theta' - sin theta)
///   z'     = z - v/omega (cos theta' - cos theta)
/// For |omega| < 1e-6 the straight-line limit x' = x + v cos theta,
/// z' = z + v sin theta is used.
UnicycleState unicycle_step(const UnicycleState& s, double v, double omega);

struct InterpolatedState {
  UnicycleState state;
  bool clamped = false;  // t was outside [first, last] knot
};

/// State at time t: knot k advanced by unicycle_step with (v_k, omega_k)
/// scaled to the elapsed part of the interval. Exact at knots.
InterpolatedState unicycle_interpolate(const UnicycleTrajectory& traj, double t);

/// Trajectory whose knot states are an exact rollout of the given rates.
UnicycleTrajectory unicycle_rollout(const UnicycleState& start,
                                    const std::vector<double>& times,
                                    const std::vector<double>& v,
                                    const std::vector<double>& omega);

}  // namespace hugsim::recon
