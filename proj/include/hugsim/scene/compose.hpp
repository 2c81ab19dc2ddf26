#pragma once

#include <map>
#include <optional>
#include <vector>

#include "hugsim/scene/scene_graph.hpp"

namespace hugsim::scene {

/// Rigid object-to-world transform for an actor standing at `pose` with box
/// center at world height `center_y`.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

RigidTransform actor_transform(const ActorPose& pose, double center_y);

/// Applies a rigid transform to one Gaussian (position and orientation).
Gaussian transform_gaussian(const Gaussian& g, const RigidTransform& tf);

struct ComposedScene {
  GaussianSet gaussians;
  std::vector<Partition> partition;
  std::vector<int> instance;  // -1 for ground/static
  bool clamped = false;       // some trajectory was queried outside its support
};

/// Options for composition. Inserted-actor poses default to the pose stored
/// in the graph; the simulator supplies live poses per instance index.
struct ComposeOptions {
  std::map<int, ActorPose> inserted_poses;
  std::map<int, ActorPose> native_poses;  // overrides trajectory replay
  bool include_shadows = true;
};

/// World-frame Gaussians of the whole scene at time t.
ComposedScene compose_scene(const SceneGraph& graph, double t,
                            const AssetLookup& assets = {},
                            const ComposeOptions& options = {});

}  // namespace hugsim::scene
