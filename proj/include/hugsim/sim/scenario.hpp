#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugsim/behavior/behavior.hpp"
#include "hugsim/metrics/driving.hpp"
#include "hugsim/scene/camera.hpp"
#include "hugsim/sim/collision.hpp"
#include "hugsim/sim/lqr.hpp"
#include "hugsim/sim/vehicle.hpp"

namespace hugsim::sim {

/// Camera rigidly mounted on the ego. `position` is in the ego frame
/// (x forward, y down, z left) relative to the ground point below the box
/// center; yaw turns the optical axis left, pitch tilts it down.
struct CameraMount {
  std::string name = "front";
  scene::Intrinsics intrinsics{64, 64, 64, 64};
  int width = 128;
  int height = 128;
  Vec3 position = Vec3(0.5, -1.5, 0.0);
  double yaw = 0.0;
  double pitch = 0.0;

  nlohmann::json to_json() const;
};

struct ActorSpec {
  std::string asset;   // inserted actor asset id, or empty
  int native = -1;     // index into the scene's native actors, or -1
  nlohmann::json behavior = nlohmann::json::object();
  behavior::ActorState start;
  std::optional<scene::Extents> extents;  // defaults to the asset/native box

  nlohmann::json to_json() const;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::filesystem::path base_dir;  // relative paths resolve against it
  nlohmann::json scene;            // "path/to/scene.hsc" or {"synthetic": {...}}
  std::string asset_library;       // directory, optional
  std::vector<CameraMount> cameras;
  EgoState ego_start;
  KinematicParams kinematics;
  double control_hz = 10.0;
  std::vector<ActorSpec> actors;
  std::vector<Vec2> route;
  std::vector<Polygon> drivable;
  std::string tier = "easy";  // easy | medium | hard | extreme
  double horizon = 20.0;      // seconds
  std::uint64_t seed = 0;
  LqrConfig lqr;
  BackgroundCollisionConfig collision;
  metrics::ScoreConfig scoring;
  double off_route_distance = 10.0;
  bool render = true;
  unsigned render_threads = 1;

  double dt() const { return 1.0 / control_hz; }

  /// Throws kConfig with the path of the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Throws kConfig with field-path diagnostics ("scenario.actors[1].start.x: ...").
  static ScenarioConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ScenarioConfig load(const std::filesystem::path& path);
};

/// Seed from the HUGSIM_SEED environment variable when set and numeric.
std::optional<std::uint64_t> seed_override_from_env();

/// Camera in world coordinates for an ego at `ego` standing on ground height
/// `ground_y`.
scene::Camera mount_camera(const CameraMount& mount, const EgoState& ego, double ground_y);

}  // namespace hugsim::sim
