#pragma once

#include <array>
#include <vector>

#include "hugsim/core/math.hpp"

namespace hugsim::sim {

/// Oriented rectangle in the BEV (x, z) plane. Heading runs from +x towards
/// +z; length lies along the heading, width across it.
struct BevBox {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
  double length = 4.5;
  double width = 1.9;

  Vec2 center() const { return {x, z}; }
  Vec2 forward() const { return {std::cos(theta), std::sin(theta)}; }
  Vec2 left() const { return {-std::sin(theta), std::cos(theta)}; }
  /// Front-left, front-right, rear-right, rear-left.
  std::array<Vec2, 4> corners() const;
  bool contains(const Vec2& p) const;
};

/// Separating-axis overlap test. Touching boxes overlap.
bool boxes_overlap(const BevBox& a, const BevBox& b);

using Polygon = std::vector<Vec2>;

/// Even-odd rule; points on an edge may land on either side.
bool point_in_polygon(const Polygon& poly, const Vec2& p);
bool point_in_any(const std::vector<Polygon>& polys, const Vec2& p);

/// At least three vertices and no two non-adjacent edges intersect.
bool polygon_is_simple(const Polygon& poly);

/// Piecewise-linear path with cumulative arc length.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points);

  struct Projection {
    double arc = 0.0;       // arc length of the closest point
    double distance = 0.0;  // distance to it
    Vec2 point = Vec2::Zero();
    double heading = 0.0;   // direction of the segment holding the point
  };

  Projection project(const Vec2& p) const;
  Vec2 point_at(double arc) const;
  double heading_at(double arc) const;
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  const std::vector<Vec2>& points() const { return points_; }

 private:
  std::size_t segment_at(double arc) const;

  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

}  // namespace hugsim::sim
