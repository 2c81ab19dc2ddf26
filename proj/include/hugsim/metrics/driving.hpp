#pragma once

#include <vector>

#include <json.hpp>

#include "hugsim/sim/collision.hpp"
#include "hugsim/sim/geometry.hpp"

namespace hugsim::metrics {

/// Per-timestep sub-scores, each in [0, 1].
struct SubScores {
  double nc = 1.0;
  double dac = 1.0;
  double ttc = 1.0;
  double com = 1.0;

  nlohmann::json to_json() const;
  static SubScores from_json(const nlohmann::json& j);
};

struct ScoreWeights {
  double ttc = 5.0;
  double com = 2.0;
};

struct ScoreConfig {
  ScoreWeights weights;
  double ttc_horizon = 1.0;   // seconds
  double ttc_step = 0.05;     // projection sampling period
  double max_accel = 3.0;     // |longitudinal acceleration|, m/s^2
  double max_jerk = 5.0;      // m/s^3
  double max_yaw_rate = 0.95; // rad/s

  void validate() const;
  nlohmann::json to_json() const;
  static ScoreConfig from_json(const nlohmann::json& j);
};

/// A box moving at constant speed along its heading.
struct MovingBox {
  sim::BevBox box;
  double speed = 0.0;

  sim::BevBox at(double dt) const;
};

/// Everything one timestep's sub-scores depend on. Collision flags come from
/// the detectors; the motion quantities from the ego history.
struct StepContext {
  MovingBox ego;
  double ego_center_y = 0.0;
  double ego_height = 1.6;
  std::vector<MovingBox> actors;
  const sim::ObstacleIndex* obstacles = nullptr;  // optional background
  const std::vector<sim::Polygon>* drivable = nullptr;
  bool fg_collision = false;
  bool bg_collision = false;
  double accel = 0.0;
  double jerk = 0.0;
  double yaw_rate = 0.0;
};

/// Earliest sampled time in (0, horizon] at which the constant-velocity
/// projections collide; negative when none does.
double time_to_collision(const StepContext& ctx, const ScoreConfig& config);

/// NC, DAC, TTC, COM. Throws kConfig when no drivable polygons are given.
SubScores sub_scores(const StepContext& ctx, const ScoreConfig& config);

/// (NC * DAC) * (w_ttc * TTC + w_com * COM) / (w_ttc + w_com).
double hd_score_step(const SubScores& s, const ScoreWeights& weights);

/// Arc length of the route up to the furthest projection of any path point,
/// over the route length, in [0, 1].
double route_completion(const std::vector<Vec2>& path, const sim::Polyline& route);

struct ScoreTrace {
  std::vector<SubScores> steps;
  ScoreWeights weights;
  double route_completion = 0.0;
};

/// R_c times the mean of hd_score_step over the recorded timesteps; 0 for an
/// empty trace.
double hd_score(const ScoreTrace& trace);

/// {per_step, R_c, hd_score, sub_score_means, steps}.
nlohmann::json score_report(const ScoreTrace& trace);

}  // namespace hugsim::metrics
