#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "hugsim/recon/losses.hpp"
#include "hugsim/recon/unicycle.hpp"

namespace hugsim::recon {

struct TrackFitConfig {
  int iterations = 20000;
  double lr_start = 0.05;  // states (m, rad) and rates (m/s, rad/s)
  double lr_end = 2e-4;

  void validate() const;
  nlohmann::json to_json() const;
  static TrackFitConfig from_json(const nlohmann::json& j);
};

/// Rates (v, omega) that carry state `a` exactly onto the position of state
/// `b` over `dt` seconds, with omega taken from the heading change.
std::pair<double, double> unicycle_rates_between(const UnicycleState& a, const UnicycleState& b,
                                                 double dt);

/// Trajectory through the given boxes with rates from unicycle_rates_between.
/// Headings are unwrapped so consecutive knots differ by less than pi.
UnicycleTrajectory trajectory_from_boxes(const std::vector<double>& times,
                                         std::vector<UnicycleState> boxes);

/// Minimizes track * loss_track + unicycle * loss_unicycle + reg * loss_smooth
/// over knot states and rates with Adam, starting from trajectory_from_boxes.
/// Requires at least three knots; throws kNonFinite if the loss blows up.
UnicycleTrajectory fit_unicycle(const std::vector<double>& times,
                                const std::vector<UnicycleState>& noisy_boxes,
                                const LossWeights& weights, const TrackFitConfig& config = {});

/// Noisy copies of the knot states: Gaussian noise of standard deviation
/// fraction * 5 m on x and z and fraction * 50 degrees on the heading.
std::vector<UnicycleState> jitter_boxes(const std::vector<UnicycleState>& states, double fraction,
                                        std::mt19937_64& rng);

/// Mean BEV position error (m) and mean absolute wrapped heading error (rad).
struct TrackError {
  double translation = 0.0;
  double rotation = 0.0;
};
TrackError track_error(const std::vector<UnicycleState>& estimate,
                       const std::vector<UnicycleState>& truth);

}  // namespace hugsim::recon
