#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugsim/recon/unicycle.hpp"
#include "hugsim/scene/gaussian.hpp"
#include "hugsim/scene/ground.hpp"
#include "hugsim/scene/semantics.hpp"

namespace hugsim::scene {

/// Box dimensions in the object frame: length along +x (forward), height
/// along y (down), width along z (left). The object origin is the box center.
struct Extents {
  double length = 4.5;
  double width = 1.9;
  double height = 1.6;

  bool operator==(const Extents&) const = default;
};

/// BEV pose: position in the world (x, z) plane, heading from +x towards +z.
struct ActorPose {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
};

struct NativeActor {
  GaussianSet gaussians;  // object frame
  recon::UnicycleTrajectory trajectory;
  Extents extents;
};

struct InsertedActor {
  std::string asset_id;
  ActorPose pose;
  nlohmann::json behavior = nlohmann::json::object();
};

/// Standalone vehicle: body and shadow Gaussians in the canonical object frame.
struct VehicleAsset {
  std::string id;
  GaussianSet body;
  GaussianSet shadow;
  Extents extents;
  nlohmann::json provenance = nlohmann::json::object();
};

enum class Partition : std::uint8_t { kGround = 0, kStatic = 1, kNative = 2, kInserted = 3 };

struct SceneGraph {
  SemanticSchema schema;
  int sh_degree = 1;
  GaussianSet ground;
  GroundPlaneSet ground_planes;
  GaussianSet static_bg;
  std::vector<NativeActor> native_actors;
  std::vector<InsertedActor> inserted_actors;

  /// Throws kInvariantViolation naming the first offending item.
  void validate() const;

  std::size_t gaussian_count() const;

  /// World y of an actor's box center standing on the ground at (x, z).
  double actor_center_y(double x, double z, const Extents& e) const {
    return ground_planes.height_at(x, z) - 0.5 * e.height;
  }
};

using AssetLookup = std::function<const VehicleAsset*(const std::string&)>;

}  // namespace hugsim::scene
