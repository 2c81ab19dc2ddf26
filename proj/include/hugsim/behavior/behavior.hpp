#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugsim/recon/unicycle.hpp"
#include "hugsim/scene/scene_graph.hpp"
#include "hugsim/sim/geometry.hpp"
#include "hugsim/sim/vehicle.hpp"

namespace hugsim::behavior {

/// BEV vehicle state: box center, heading (from +x towards +z) and speed
/// along the heading.
struct ActorState {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
  double v = 0.0;

  Vec2 position() const { return {x, z}; }
  scene::ActorPose pose() const { return {x, z, theta}; }
  nlohmann::json to_json() const;
};

struct ReplayPose {
  scene::ActorPose pose;
  bool clamped = false;  // t outside the trajectory support
};

ReplayPose replay_behavior(const recon::UnicycleTrajectory& traj, double t);

/// start advanced speed * t along `direction`; the heading stays that of
/// `start` (a reversing vehicle uses direction = heading + pi).
scene::ActorPose constant_speed_behavior(const scene::ActorPose& start, double speed, double direction,
                                         double t);

struct IdmParams {
  double desired_speed = 10.0;  // v0, m/s
  double time_headway = 1.5;    // T, s
  double min_gap = 2.0;         // s0, m
  double max_accel = 1.5;       // a, m/s^2
  double comfort_decel = 2.0;   // b, m/s^2
  double min_accel = -8.0;      // emergency deceleration, m/s^2
  double exponent = 4.0;
  double lookahead = 8.0;       // pure-pursuit lookahead, m
  double lane_width = 3.5;      // corridor for leader detection, m
  double wheelbase = 2.7;
  double max_steer = 0.6;

  void validate() const;
  nlohmann::json to_json() const;
  static IdmParams from_json(const nlohmann::json& j);
};

struct Leader {
  double gap = 0.0;    // bumper to bumper, m
  double speed = 0.0;  // along the follower's heading, m/s
};

/// a = a_max [1 - (v/v0)^delta - (s*/s)^2], s* = s0 + v T + v dv / (2 sqrt(a_max b)),
/// clamped to [min_accel, max_accel]; no leader drops the interaction term and
/// a gap s <= 0 returns min_accel.
double idm_acceleration(double v, const std::optional<Leader>& leader, const IdmParams& p);

/// Pure-pursuit steering towards the lane point `lookahead` meters beyond
/// the projection of the actor.
double pure_pursuit_steer(const ActorState& s, const sim::Polyline& lane, double lookahead,
                          double wheelbase);

/// Constant-velocity, constant-heading states at dt, 2 dt, ..., horizon.
std::vector<ActorState> predict_trajectory(const ActorState& s, double horizon, double dt);

struct AttackConfig {
  double horizon = 3.0;  // s
  double dt = 0.1;
  std::vector<double> lateral{-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0};  // m, positive left
  std::vector<double> longitudinal{5.0, 10.0, 20.0, 30.0, 40.0};    // m travelled along the heading
  int top_k = 3;
  double replan_period = 1.0;  // s
  double lambda = 10.0;        // collision weight
  double tolerance = 2.0;      // m
  double max_curvature = 0.3;  // 1/m
  double max_accel = 6.0;      // |a|, m/s^2

  void validate() const;
  nlohmann::json to_json() const;
  /// Fields missing from `j` keep the values of `base`.
  static AttackConfig from_json(const nlohmann::json& j, const AttackConfig& base);
  static AttackConfig from_json(const nlohmann::json& j);
  /// hard: top_k 3, replan 1.0 s; extreme: top_k 1, replan 0.5 s.
  static AttackConfig for_tier(const std::string& tier);
};

struct CandidateTrajectory {
  std::vector<ActorState> states;  // at dt, 2 dt, ..., horizon
  int grid_index = 0;              // lateral_index * longitudinal.size() + longitudinal_index
  double lateral = 0.0;
  double longitudinal = 0.0;
  bool feasible = true;
};

/// Terminal states on the lateral x longitudinal grid in the actor heading
/// frame (or measured from `lane` when given), joined by l(s) = l_f (3u^2 - 2u^3),
/// u = s / s_f, under a constant-acceleration speed profile reaching s_f at
/// the horizon. Candidates exceeding max_curvature or max_accel, or whose
/// speed turns negative, are dropped. Ordered by grid index.
std::vector<CandidateTrajectory> spline_candidates(const ActorState& s, const AttackConfig& config,
                                                   const sim::Polyline* lane = nullptr);

struct AttackCost {
  double attack = 0.0;     // min_t |ego_t - cand_t|
  double collision = 0.0;  // number of other actors within tolerance at some t
  double total = 0.0;      // attack + lambda * collision
};

/// Costs use BEV positions; the common prefix of the sequences is compared.
AttackCost attack_cost(const CandidateTrajectory& cand, const std::vector<ActorState>& ego,
                       const std::vector<std::vector<ActorState>>& others, const AttackConfig& config);

struct AttackSelection {
  std::size_t index = 0;            // into the candidate list
  std::vector<AttackCost> costs;    // per candidate
  std::vector<std::size_t> ranked;  // ascending total, ties by grid index
};

/// Uniform pick among the top_k lowest-cost candidates. Throws
/// kInvalidArgument on an empty list.
AttackSelection attack_select(const std::vector<CandidateTrajectory>& candidates,
                              const std::vector<ActorState>& ego,
                              const std::vector<std::vector<ActorState>>& others,
                              const AttackConfig& config, std::mt19937_64& rng);

/// Snapshot of the world at the start of a step. Behaviors see nothing from
/// later times.
struct BehaviorContext {
  double time = 0.0;
  double dt = 0.1;
  ActorState ego;
  double ego_length = 4.5;
  std::vector<ActorState> actors;
  std::vector<double> actor_lengths;
  std::size_t self = 0;
};

class Behavior {
 public:
  virtual ~Behavior() = default;
  /// State at ctx.time + ctx.dt.
  virtual ActorState step(const BehaviorContext& ctx) = 0;
  virtual std::string type() const = 0;
};

/// Builds a behavior from {type: replay|constant|idm|attack, params: {...}}.
/// `trajectory` backs replay (native actors pass their own); attack
/// parameters default to the difficulty tier.
std::unique_ptr<Behavior> make_behavior(const nlohmann::json& spec, const ActorState& start,
                                        const recon::UnicycleTrajectory* trajectory,
                                        const std::string& tier, std::uint64_t seed);

}  // namespace hugsim::behavior
