#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugsim/core/image.hpp"
#include "hugsim/recon/optimize.hpp"
#include "hugsim/scene/camera.hpp"
#include "hugsim/scene/ground.hpp"
#include "hugsim/scene/scene_graph.hpp"

namespace hugsim::assets {

/// One masked view of a standalone vehicle, posed in its canonical frame.
struct VehicleView {
  scene::Camera camera;
  Image color;  // H x W x 3
  Image mask;   // H x W x 1, 1 on the vehicle
};

struct VehicleReconConfig {
  std::string asset_id = "vehicle";
  int initial_gaussians = 400;
  double search_radius = 4.0;  // half-size of the carving volume (m)
  int carve_resolution = 40;   // voxels per axis
  int min_views = 12;
  double max_azimuth_gap_deg = 60.0;
  int sh_degree = 1;
  recon::LossWeights weights = [] {
    recon::LossWeights w;
    w.ground = w.track = w.unicycle = w.reg = w.semantic = 0.0;
    w.alpha = 1.0;
    return w;
  }();
  recon::FitConfig fit = [] {
    recon::FitConfig c;
    c.iterations = 1500;
    c.exposure = false;
    c.densify.start = 300;
    c.densify.interval = 300;
    return c;
  }();

  nlohmann::json to_json() const;
  static VehicleReconConfig from_json(const nlohmann::json& j);
};

struct VehicleReconResult {
  scene::VehicleAsset asset;
  std::vector<std::string> warnings;  // e.g. sparse azimuth coverage
  std::vector<recon::FitLogRecord> log;
};

/// Fits a standalone vehicle to masked views: the visual hull of the masks
/// seeds the Gaussians, then color is fitted inside the mask with the
/// alpha loss driving coverage to zero outside it. Extents are the
/// symmetric bounding box of the visual hull; Gaussians whose centers end up
/// beyond extents + 10% are dropped. Semantic logits use the default driving
/// schema, peaked on the vehicle class. Throws kInvalidArgument on
/// an empty view set or an all-empty mask set and kShapeMismatch on
/// image/mask/camera disagreement.
VehicleReconResult reconstruct_vehicle(const std::vector<VehicleView>& views,
                                       const VehicleReconConfig& config = {});

/// PSNR restricted to pixels where the mask is set.
double masked_psnr(const Image& rendered, const Image& target, const Image& mask);

struct ShadowConfig {
  double strength = 0.6;      // opacity at the bottom center
  double grid = 0.15;         // spacing of the shadow Gaussians (m)
  double corner_ratio = 0.3;  // corner radius relative to min(length, width)
  double thickness = 0.005;   // flat-axis scale (m)
  Vec3 color = Vec3(0.02, 0.02, 0.02);

  nlohmann::json to_json() const;
  static ShadowConfig from_json(const nlohmann::json& j);
};

/// Replaces the asset's shadow with a grid of flat, dark Gaussians on the
/// canonical ground plane inside the rounded footprint. Opacity follows
/// strength * smoothstep(1 - d / d_max), d measured from the bottom center.
/// Gaussians with zero opacity are omitted.
scene::VehicleAsset add_shadow(scene::VehicleAsset asset, const ShadowConfig& config = {});

/// Body and shadow Gaussians in world coordinates for an asset standing at
/// `pose` on the ground described by `ground`.
scene::GaussianSet place_actor(const scene::VehicleAsset& asset, const scene::ActorPose& pose,
                               const scene::GroundPlaneSet& ground, bool include_shadow = true);

/// Synthetic vehicle for captures and tests: `count` Gaussians inside the
/// box, body colored below the beltline and glass-tinted above it.
scene::VehicleAsset synthetic_vehicle(const scene::Extents& extents, int count, const Vec3& color,
                                      int sh_degree, std::uint64_t seed);

/// Cameras on a circle of `radius` around the object origin at height
/// `height` above the box center, all looking at the origin.
std::vector<scene::Camera> orbit_cameras(int count, double radius, double height,
                                         const scene::Intrinsics& k, int width, int height_px);

/// Renders the body of an asset into masked views (mask = alpha > 0.5).
std::vector<VehicleView> capture_vehicle(const scene::VehicleAsset& asset,
                                         const std::vector<scene::Camera>& cameras);

}  // namespace hugsim::assets
