#include "hugsim/sim/geometry.hpp"

#include <algorithm>
#include <limits>

namespace hugsim::sim {

std::array<Vec2, 4> BevBox::corners() const {
  const Vec2 c = center();
  const Vec2 f = 0.5 * length * forward();
  const Vec2 l = 0.5 * width * left();
  return {c + f + l, c + f - l, c - f - l, c - f + l};
}

bool BevBox::contains(const Vec2& p) const {
  const Vec2 d = p - center();
  return std::abs(d.dot(forward())) <= 0.5 * length && std::abs(d.dot(left())) <= 0.5 * width;
}

bool boxes_overlap(const BevBox& a, const BevBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {a.forward(), a.left(), b.forward(), b.left()};
  for (const Vec2& axis : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (int i = 0; i < 4; ++i) {
      const double pa = ca[i].dot(axis), pb = cb[i].dot(axis);
      amin = std::min(amin, pa), amax = std::max(amax, pa);
      bmin = std::min(bmin, pb), bmax = std::max(bmax, pb);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

bool point_in_polygon(const Polygon& poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

bool point_in_any(const std::vector<Polygon>& polys, const Vec2& p) {
  return std::any_of(polys.begin(), polys.end(),
                     [&](const Polygon& poly) { return point_in_polygon(poly, p); });
}

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = cross(q2 - q1, p1 - q1), d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1), d4 = cross(p2 - p1, q2 - p1);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  auto on_segment = [](const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
  };
  return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
         (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

}  // namespace

bool polygon_is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
  cumulative_.reserve(points_.size());
  double s = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (i > 0) s += (points_[i] - points_[i - 1]).norm();
    cumulative_.push_back(s);
  }
}

Polyline::Projection Polyline::project(const Vec2& p) const {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (points_.size() == 1) return {0.0, (p - points_[0]).norm(), points_[0], 0.0};
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const Vec2 a = points_[i], d = points_[i + 1] - a;
    const double len2 = d.squaredNorm();
    const double u = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
    const Vec2 q = a + u * d;
    const double dist = (p - q).norm();
    if (dist < best.distance) {
      best = {cumulative_[i] + u * std::sqrt(len2), dist, q, std::atan2(d.y(), d.x())};
    }
  }
  return best;
}

std::size_t Polyline::segment_at(double arc) const {
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), arc);
  const std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  return std::min(i, points_.size() - 2);
}

Vec2 Polyline::point_at(double arc) const {
  if (points_.size() == 1) return points_[0];
  arc = std::clamp(arc, 0.0, length());
  const std::size_t i = segment_at(arc);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double u = seg > 0 ? (arc - cumulative_[i]) / seg : 0.0;
  return points_[i] + u * (points_[i + 1] - points_[i]);
}

double Polyline::heading_at(double arc) const {
  if (points_.size() < 2) return 0.0;
  const std::size_t i = segment_at(std::clamp(arc, 0.0, length()));
  const Vec2 d = points_[i + 1] - points_[i];
  return std::atan2(d.y(), d.x());
}

}  // namespace hugsim::sim
