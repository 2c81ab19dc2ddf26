#include "hugsim/sim/vehicle.hpp"

#include <algorithm>

#include "hugsim/core/error.hpp"

namespace hugsim::sim {

void KinematicParams::validate() const {
  auto check = [](bool ok, const char* field, const std::string& why) {
    require(ok, ErrorCode::kConfig, std::string("ego.") + field + ": " + why);
  };
  check(wheelbase > 0 && std::isfinite(wheelbase), "wheelbase", "must be positive");
  check(max_steer > 0 && max_steer < kPi / 2, "max_steer", "must lie in (0, pi/2)");
  check(min_accel < 0, "min_accel", "must be negative");
  check(max_accel > 0, "max_accel", "must be positive");
  check(substeps >= 1, "substeps", "must be at least 1");
  check(extents.length > 0 && extents.width > 0 && extents.height > 0, "extents",
        "must be positive");
}

nlohmann::json KinematicParams::to_json() const {
  return {{"wheelbase", wheelbase}, {"max_steer", max_steer}, {"min_accel", min_accel},
          {"max_accel", max_accel}, {"substeps", substeps},
          {"extents", {extents.length, extents.width, extents.height}}};
}

KinematicParams KinematicParams::from_json(const nlohmann::json& j) {
  KinematicParams p;
  p.wheelbase = j.value("wheelbase", p.wheelbase);
  p.max_steer = j.value("max_steer", p.max_steer);
  p.min_accel = j.value("min_accel", p.min_accel);
  p.max_accel = j.value("max_accel", p.max_accel);
  p.substeps = j.value("substeps", p.substeps);
  if (j.contains("extents")) {
    const auto& e = j.at("extents");
    p.extents = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
  }
  return p;
}

nlohmann::json EgoState::to_json() const {
  return {{"x", x}, {"z", z}, {"theta", theta}, {"v", v}};
}

EgoState EgoState::from_json(const nlohmann::json& j) {
  EgoState s;
  s.x = j.value("x", 0.0);
  s.z = j.value("z", 0.0);
  s.theta = j.value("theta", 0.0);
  s.v = j.value("v", 0.0);
  return s;
}

Control clamp_control(const Control& u, const KinematicParams& params) {
  return {std::clamp(u.steer, -params.max_steer, params.max_steer),
          std::clamp(u.accel, params.min_accel, params.max_accel)};
}

EgoState bicycle_step(const EgoState& s, double steer, double accel, double dt,
                      const KinematicParams& params) {
  const Control u = clamp_control({steer, accel}, params);
  EgoState n = s;
  n.x += s.v * std::cos(s.theta) * dt;
  n.z += s.v * std::sin(s.theta) * dt;
  n.theta += s.v * std::tan(u.steer) / params.wheelbase * dt;
  n.v += u.accel * dt;
  return n;
}

EgoState bicycle_advance(const EgoState& s, const Control& u, double dt,
                         const KinematicParams& params) {
  EgoState out = s;
  const double h = dt / params.substeps;
  for (int i = 0; i < params.substeps; ++i) out = bicycle_step(out, u.steer, u.accel, h, params);
  return out;
}

BevBox ego_box(const EgoState& s, const KinematicParams& params) {
  return {s.x, s.z, s.theta, params.extents.length, params.extents.width};
}

Vec2 ego_to_world(const EgoState& s, const Vec2& p) {
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  return {s.x + c * p.x() - sn * p.y(), s.z + sn * p.x() + c * p.y()};
}

Vec2 world_to_ego(const EgoState& s, const Vec2& p) {
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  const Vec2 d(p.x() - s.x, p.y() - s.z);
  return {c * d.x() + sn * d.y(), -sn * d.x() + c * d.y()};
}

}  // namespace hugsim::sim
