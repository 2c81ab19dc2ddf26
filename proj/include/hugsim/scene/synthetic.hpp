#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "hugsim/scene/camera.hpp"
#include "hugsim/scene/scene_graph.hpp"

namespace hugsim::scene {

struct GradeSegment {
  double start_z = 0.0;  // meters along the road
  double grade = 0.0;    // rise over run; positive climbs (towards -y)
};

struct BuildingSpec {
  double center_x = 0.0;
  double center_z = 0.0;
  double size_x = 5.0;
  double size_y = 8.0;  // height
  double size_z = 5.0;
  int gaussian_count = 200;
  Vec3 color = Vec3(0.6, 0.5, 0.45);
};

struct SyntheticActorSpec {
  Extents extents;
  int gaussian_count = 120;
  Vec3 color = Vec3(0.7, 0.1, 0.1);
  ActorPose start;
  double speed = 0.0;     // m/s
  double yaw_rate = 0.0;  // rad/s
  int knots = 20;
  double knot_dt = 0.1;
};

/// Declarative description of a desk-scale driving scene. The road runs
/// along +z from `road_start` to `road_length`, centered on x = 0.
struct SyntheticSceneSpec {
  double road_length = 50.0;
  double road_start = -5.0;
  double road_width = 7.0;
  int lane_count = 2;
  double marking_width = 0.15;
  double dash_length = 3.0;
  double dash_gap = 3.0;
  double sidewalk_width = 1.5;
  double ground_spacing = 0.35;  // grid pitch of ground Gaussians
  double ground_jitter = 0.08;   // per-Gaussian albedo jitter
  double camera_height = 1.5;
  double anchor_spacing = 2.0;
  double window_depth = 10.0;
  std::vector<GradeSegment> slope;
  std::vector<BuildingSpec> buildings;
  std::vector<SyntheticActorSpec> actors;
  bool sky = false;
  int sh_degree = 1;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const;
  static SyntheticSceneSpec from_json(const nlohmann::json& j);
};

/// Road elevation (meters, up positive) at distance z along the road.
double road_elevation(const SyntheticSceneSpec& spec, double z);
/// Local grade at z.
double road_grade(const SyntheticSceneSpec& spec, double z);
/// World y of the road surface at z (y points down; first camera at y = 0).
double road_surface_y(const SyntheticSceneSpec& spec, double z);

/// Camera poses along the road centerline, pitched with the local grade.
/// These are the ground-window anchors of the built scene.
std::vector<Camera> synthetic_camera_path(const SyntheticSceneSpec& spec,
                                          const Intrinsics& k, int width, int height,
                                          double lateral_offset = 0.0);

/// Deterministic scene for a given spec (including seed).
SceneGraph build_synthetic_scene(const SyntheticSceneSpec& spec);

}  // namespace hugsim::scene
