#include "hugsim/scene/ground.hpp"

#include <limits>

#include "hugsim/core/error.hpp"

namespace hugsim::scene {

GroundPlaneSet GroundPlaneSet::build(const std::vector<std::pair<Mat3, Vec3>>& anchors,
                                     const GaussianSet& ground, double window_depth) {
  require(window_depth > 0, ErrorCode::kInvalidArgument, "ground window depth must be positive");
  GroundPlaneSet set;
  for (const auto& [r, t] : anchors) {
    GroundWindow w;
    w.rotation = r;
    w.translation = t;
    w.depth = window_depth;
    set.windows.push_back(std::move(w));
  }
  if (set.windows.empty()) return set;
  for (std::size_t i = 0; i < ground.size(); ++i) {
    bool covered = false;
    for (auto& w : set.windows) {
      const double d = w.camera_depth_of(ground[i].mu);
      if (d >= 0.0 && d <= w.depth) {
        w.members.push_back(static_cast<int>(i));
        covered = true;
      }
    }
    if (!covered) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < set.windows.size(); ++k) {
        const double d = (set.windows[k].anchor_position() - ground[i].mu).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      set.windows[best].members.push_back(static_cast<int>(i));
    }
  }
  set.refresh_heights(ground);
  return set;
}

void GroundPlaneSet::refresh_heights(const GaussianSet& ground) {
  for (auto& w : windows) {
    if (w.members.empty()) continue;
    double sum = 0.0;
    for (int m : w.members) sum += w.camera_height_of(ground[m].mu);
    w.height = sum / static_cast<double>(w.members.size());
  }
}

double GroundPlaneSet::height_at(double x, double z, double fallback) const {
  if (windows.empty()) return fallback;
  const GroundWindow* best = nullptr;
  double best_depth = std::numeric_limits<double>::infinity();
  for (const auto& w : windows) {
    if (w.members.empty()) continue;
    const Vec3 probe(x, w.anchor_position().y(), z);
    const double d = w.camera_depth_of(probe);
    if (d >= 0.0 && d <= w.depth && d < best_depth) {
      best_depth = d;
      best = &w;
    }
  }
  if (best == nullptr) {
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& w : windows) {
      if (w.members.empty()) continue;
      const Vec3 a = w.anchor_position();
      const double dist = (a.x() - x) * (a.x() - x) + (a.z() - z) * (a.z() - z);
      if (dist < best_dist) {
        best_dist = dist;
        best = &w;
      }
    }
  }
  if (best == nullptr) return fallback;
  // Solve row1 . (x, y, z) + t_y = height for y.
  const auto row = best->rotation.row(1);
  if (std::abs(row(1)) < 1e-9) return fallback;
  return (best->height - best->translation.y() - row(0) * x - row(2) * z) / row(1);
}

nlohmann::json GroundPlaneSet::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& w : windows) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) r.push_back({w.rotation(i, 0), w.rotation(i, 1), w.rotation(i, 2)});
    out.push_back({{"rotation", r},
                   {"translation", {w.translation.x(), w.translation.y(), w.translation.z()}},
                   {"depth", w.depth},
                   {"height", w.height},
                   {"members", w.members}});
  }
  return out;
}

GroundPlaneSet GroundPlaneSet::from_json(const nlohmann::json& j) {
  GroundPlaneSet set;
  for (const auto& wj : j) {
    GroundWindow w;
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 3; ++c) w.rotation(i, c) = wj.at("rotation").at(i).at(c).get<double>();
      w.translation[i] = wj.at("translation").at(i).get<double>();
    }
    w.depth = wj.at("depth").get<double>();
    w.height = wj.at("height").get<double>();
    w.members = wj.at("members").get<std::vector<int>>();
    set.windows.push_back(std::move(w));
  }
  return set;
}

}  // namespace hugsim::scene
