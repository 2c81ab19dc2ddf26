#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hugsim/scene/scene_graph.hpp"
#include "hugsim/sim/geometry.hpp"

namespace hugsim::sim {

/// Oriented 3D box: BEV footprint plus a vertical range around center_y.
struct Box3 {
  BevBox bev;
  double center_y = 0.0;
  double height = 1.6;

  bool contains(const Vec3& p) const {
    return std::abs(p.y() - center_y) <= 0.5 * height && bev.contains({p.x(), p.z()});
  }
};

struct BackgroundCollisionConfig {
  double min_opacity = 0.3;
  int min_count = 20;  // collision iff strictly more Gaussians are inside

  void validate() const;
  nlohmann::json to_json() const;
  static BackgroundCollisionConfig from_json(const nlohmann::json& j);
};

/// Per-actor overlap of the ego footprint with each actor footprint.
std::vector<bool> detect_collision_fg(const BevBox& ego, const std::vector<BevBox>& actors);

/// True when a background Gaussian counts as an obstacle: its argmax class
/// is collidable and not ground, and its opacity is at least min_opacity.
bool is_obstacle(const scene::Gaussian& g, const scene::SemanticSchema& schema,
                 const BackgroundCollisionConfig& config);

/// Brute-force count of obstacle Gaussians centered inside the box.
int count_obstacles_in_box(const Box3& box, const scene::GaussianSet& gaussians,
                           const scene::SemanticSchema& schema,
                           const BackgroundCollisionConfig& config);

bool detect_collision_bg(const Box3& box, const scene::GaussianSet& gaussians,
                         const scene::SemanticSchema& schema,
                         const BackgroundCollisionConfig& config);

/// Obstacle centers of a scene's ground and static partitions bucketed on a
/// BEV grid, for repeated box queries.
class ObstacleIndex {
 public:
  ObstacleIndex() = default;
  ObstacleIndex(const scene::SceneGraph& graph, const BackgroundCollisionConfig& config,
                double cell = 2.0);

  int count_in_box(const Box3& box) const;
  bool collides(const Box3& box) const { return count_in_box(box) > config_.min_count; }
  std::size_t size() const { return points_.size(); }

 private:
  std::pair<std::int64_t, std::int64_t> cell_of(double x, double z) const;

  BackgroundCollisionConfig config_;
  double cell_ = 2.0;
  std::vector<Vec3> points_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::uint32_t>> grid_;
};

}  // namespace hugsim::sim
