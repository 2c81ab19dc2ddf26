#include "hugsim/sim/collision.hpp"

#include <algorithm>

#include "hugsim/core/error.hpp"

namespace hugsim::sim {

void BackgroundCollisionConfig::validate() const {
  require(min_opacity >= 0 && min_opacity <= 1, ErrorCode::kConfig,
          "collision.min_opacity: must lie in [0, 1]");
  require(min_count >= 0, ErrorCode::kConfig, "collision.min_count: must be >= 0");
}

nlohmann::json BackgroundCollisionConfig::to_json() const {
  return {{"min_opacity", min_opacity}, {"min_count", min_count}};
}

BackgroundCollisionConfig BackgroundCollisionConfig::from_json(const nlohmann::json& j) {
  BackgroundCollisionConfig c;
  c.min_opacity = j.value("min_opacity", c.min_opacity);
  c.min_count = j.value("min_count", c.min_count);
  return c;
}

std::vector<bool> detect_collision_fg(const BevBox& ego, const std::vector<BevBox>& actors) {
  std::vector<bool> out;
  out.reserve(actors.size());
  for (const auto& a : actors) out.push_back(boxes_overlap(ego, a));
  return out;
}

bool is_obstacle(const scene::Gaussian& g, const scene::SemanticSchema& schema,
                 const BackgroundCollisionConfig& config) {
  if (g.opacity < config.min_opacity) return false;
  const int c = scene::semantic_argmax(g);
  if (c < 0 || static_cast<std::size_t>(c) >= schema.size()) return false;
  return schema[c].is_collidable && !schema[c].is_ground;
}

int count_obstacles_in_box(const Box3& box, const scene::GaussianSet& gaussians,
                           const scene::SemanticSchema& schema,
                           const BackgroundCollisionConfig& config) {
  int n = 0;
  for (const auto& g : gaussians) {
    if (box.contains(g.mu) && is_obstacle(g, schema, config)) ++n;
  }
  return n;
}

bool detect_collision_bg(const Box3& box, const scene::GaussianSet& gaussians,
                         const scene::SemanticSchema& schema,
                         const BackgroundCollisionConfig& config) {
  return count_obstacles_in_box(box, gaussians, schema, config) > config.min_count;
}

ObstacleIndex::ObstacleIndex(const scene::SceneGraph& graph, const BackgroundCollisionConfig& config,
                             double cell)
    : config_(config), cell_(cell) {
  for (const auto* set : {&graph.ground, &graph.static_bg}) {
    for (const auto& g : *set) {
      if (!is_obstacle(g, graph.schema, config)) continue;
      grid_[cell_of(g.mu.x(), g.mu.z())].push_back(static_cast<std::uint32_t>(points_.size()));
      points_.push_back(g.mu);
    }
  }
}

std::pair<std::int64_t, std::int64_t> ObstacleIndex::cell_of(double x, double z) const {
  return {static_cast<std::int64_t>(std::floor(x / cell_)), static_cast<std::int64_t>(std::floor(z / cell_))};
}

int ObstacleIndex::count_in_box(const Box3& box) const {
  if (points_.empty()) return 0;
  const auto corners = box.bev.corners();
  double x0 = corners[0].x(), x1 = x0, z0 = corners[0].y(), z1 = z0;
  for (const auto& c : corners) {
    x0 = std::min(x0, c.x()), x1 = std::max(x1, c.x());
    z0 = std::min(z0, c.y()), z1 = std::max(z1, c.y());
  }
  const auto lo = cell_of(x0, z0), hi = cell_of(x1, z1);
  int n = 0;
  for (auto ix = lo.first; ix <= hi.first; ++ix) {
    for (auto iz = lo.second; iz <= hi.second; ++iz) {
      const auto it = grid_.find({ix, iz});
      if (it == grid_.end()) continue;
      for (auto i : it->second) n += box.contains(points_[i]) ? 1 : 0;
    }
  }
  return n;
}

}  // namespace hugsim::sim
