#include "hugsim/scene/compose.hpp"

#include "hugsim/core/error.hpp"

namespace hugsim::scene {

RigidTransform actor_transform(const ActorPose& pose, double center_y) {
  return {yaw_rotation(pose.theta), Vec3(pose.x, center_y, pose.z)};
}

Gaussian transform_gaussian(const Gaussian& g, const RigidTransform& tf) {
  Gaussian out = g;
  out.mu = tf.apply(g.mu);
  const Vec4 q_tf = rotation_to_quat(tf.rotation);
  out.quat = quat_multiply(q_tf, g.quat);
  out.quat /= out.quat.norm();
  return out;
}

namespace {

void append(ComposedScene& out, const GaussianSet& set, Partition p, int instance) {
  for (const auto& g : set) {
    out.gaussians.push_back(g);
    out.partition.push_back(p);
    out.instance.push_back(instance);
  }
}

void append_transformed(ComposedScene& out, const GaussianSet& set, const RigidTransform& tf,
                        Partition p, int instance) {
  for (const auto& g : set) {
    out.gaussians.push_back(transform_gaussian(g, tf));
    out.partition.push_back(p);
    out.instance.push_back(instance);
  }
}

}  // namespace

ComposedScene compose_scene(const SceneGraph& graph, double t, const AssetLookup& assets,
                            const ComposeOptions& options) {
  ComposedScene out;
  out.gaussians.reserve(graph.gaussian_count());
  append(out, graph.ground, Partition::kGround, -1);
  append(out, graph.static_bg, Partition::kStatic, -1);

  for (std::size_t a = 0; a < graph.native_actors.size(); ++a) {
    const auto& actor = graph.native_actors[a];
    ActorPose pose;
    if (auto it = options.native_poses.find(static_cast<int>(a)); it != options.native_poses.end()) {
      pose = it->second;
    } else {
      const auto s = recon::unicycle_interpolate(actor.trajectory, t);
      out.clamped = out.clamped || s.clamped;
      pose = {s.state.x, s.state.z, s.state.theta};
    }
    const auto tf = actor_transform(pose, graph.actor_center_y(pose.x, pose.z, actor.extents));
    append_transformed(out, actor.gaussians, tf, Partition::kNative, static_cast<int>(a));
  }

  for (std::size_t a = 0; a < graph.inserted_actors.size(); ++a) {
    const auto& actor = graph.inserted_actors[a];
    const VehicleAsset* asset = assets ? assets(actor.asset_id) : nullptr;
    if (asset == nullptr) {
      fail(ErrorCode::kMissingAsset, "missing asset '" + actor.asset_id + "' for inserted actor " +
                                         std::to_string(a));
    }
    ActorPose pose = actor.pose;
    if (auto it = options.inserted_poses.find(static_cast<int>(a));
        it != options.inserted_poses.end()) {
      pose = it->second;
    }
    const auto tf = actor_transform(pose, graph.actor_center_y(pose.x, pose.z, asset->extents));
    append_transformed(out, asset->body, tf, Partition::kInserted, static_cast<int>(a));
    if (options.include_shadows) {
      append_transformed(out, asset->shadow, tf, Partition::kInserted, static_cast<int>(a));
    }
  }
  return out;
}

}  // namespace hugsim::scene
