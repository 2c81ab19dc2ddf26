#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugsim/assets/library.hpp"
#include "hugsim/behavior/behavior.hpp"
#include "hugsim/metrics/driving.hpp"
#include "hugsim/render/rasterizer.hpp"
#include "hugsim/sim/scenario.hpp"

namespace hugsim::sim {

/// Agent command for one control interval: either ego-frame waypoints
/// (converted by LQR) or controls (the first is applied).
struct Action {
  std::vector<Waypoint> waypoints;
  std::vector<Control> controls;

  /// {"waypoints": [[x, y, t], ...]} or {"controls": [[steer, accel], ...]};
  /// exactly one key. Throws kShapeMismatch / kInvalidArgument.
  static Action from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ActorStatus {
  int id = 0;
  std::string kind;  // "native" or "inserted"
  behavior::ActorState state;
  scene::Extents extents;
};

struct StepResult {
  int step = 0;
  double time = 0.0;
  std::vector<render::RenderOutput> observations;  // per camera, no exposure
  std::vector<std::string> observation_hashes;     // FNV-1a of the 8-bit RGB
  EgoState ego;
  Control control;
  bool stale_plan = false;
  std::vector<ActorStatus> actors;
  bool fg_collision = false;
  bool bg_collision = false;
  int collided_actor = -1;
  metrics::SubScores scores;
  double hd_step = 0.0;
  double route_completion = 0.0;
  bool done = false;
  std::string reason;  // collision | route_complete | horizon | off_route
  double wall_ms = 0.0;

  /// Trace record; contains no wall-clock fields.
  nlohmann::json to_trace_json() const;
};

/// Loads the scene a scenario refers to (container path or inline synthetic
/// spec). Throws kIo / kBadContainer / kConfig.
std::shared_ptr<const scene::SceneGraph> load_scenario_scene(const ScenarioConfig& config);

/// One closed-loop episode runner. Instances share nothing mutable; the
/// scene may be shared between instances.
class Environment {
 public:
  explicit Environment(ScenarioConfig config, std::shared_ptr<const scene::SceneGraph> scene = nullptr,
                       std::shared_ptr<const assets::AssetLibrary> library = nullptr);

  /// Starts a new episode; `seed` overrides the scenario seed.
  StepResult reset(std::optional<std::uint64_t> seed = std::nullopt);
  /// Throws kEpisodeDone after the episode ended and before reset().
  StepResult step(const Action& action);

  bool done() const { return done_; }
  bool started() const { return started_; }
  const ScenarioConfig& config() const { return config_; }
  const scene::SceneGraph& scene() const { return *scene_; }
  std::uint64_t seed() const { return seed_; }

  metrics::ScoreTrace score_trace() const;
  nlohmann::json score_report() const { return metrics::score_report(score_trace()); }
  /// First line of a trace file.
  nlohmann::json trace_header() const;

  /// World cameras of the rig for an ego state.
  std::vector<scene::Camera> rig(const EgoState& ego) const;
  /// World-frame Gaussians for the current actor poses.
  const scene::GaussianSet& composed() const { return composed_; }

 private:
  struct ActorRuntime {
    int id = 0;
    int native = -1;
    const scene::VehicleAsset* asset = nullptr;
    std::shared_ptr<const scene::VehicleAsset> asset_ref;
    scene::Extents extents;
    std::unique_ptr<behavior::Behavior> behavior;
    behavior::ActorState state;
  };

  StepResult evaluate(const Control& applied, double yaw_rate, bool stale);
  void compose_actors();
  std::vector<BevBox> actor_boxes() const;

  ScenarioConfig config_;
  std::shared_ptr<const scene::SceneGraph> scene_;
  std::shared_ptr<const assets::AssetLibrary> library_;
  ObstacleIndex obstacles_;
  Polyline route_;
  scene::GaussianSet composed_;
  std::size_t prefix_count_ = 0;
  render::RenderOptions render_options_;

  std::uint64_t seed_ = 0;
  bool started_ = false;
  bool done_ = false;
  int step_ = 0;
  double time_ = 0.0;
  EgoState ego_;
  double prev_accel_ = 0.0;
  double progress_ = 0.0;
  std::vector<ActorRuntime> actors_;
  std::vector<metrics::SubScores> scores_;
};

}  // namespace hugsim::sim
