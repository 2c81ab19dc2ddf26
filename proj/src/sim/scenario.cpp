#include "hugsim/sim/scenario.hpp"

#include <cstdlib>
#include <fstream>

#include "hugsim/core/error.hpp"

namespace hugsim::sim {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  fail(ErrorCode::kConfig, path + ": " + what);
}

// Runs fn and rewrites JSON type errors into kConfig errors naming `path`.
template <typename Fn>
auto at_path(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    config_error(path, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    config_error(path, e.what());
  }
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) config_error(path, "expected a number, got " + std::string(j.type_name()));
  return j.get<double>();
}

Vec2 point2(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) config_error(path, "expected [x, z]");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

std::vector<Vec2> points(const json& j, const std::string& path) {
  if (!j.is_array()) config_error(path, "expected an array of [x, z] points");
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(point2(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

behavior::ActorState actor_state(const json& j, const std::string& path) {
  if (!j.is_object()) config_error(path, "expected an object {x, z, theta, v}");
  behavior::ActorState s;
  for (const auto& [key, value] : j.items()) {
    const double v = number(value, path + "." + key);
    if (key == "x") s.x = v;
    else if (key == "z") s.z = v;
    else if (key == "theta") s.theta = v;
    else if (key == "v") s.v = v;
    else config_error(path + "." + key, "unknown field");
  }
  return s;
}

scene::Extents extents(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) config_error(path, "expected [length, width, height]");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]")};
}

CameraMount camera_mount(const json& j, const std::string& path) {
  CameraMount m;
  m.name = at_path(path + ".name", [&] { return j.value("name", m.name); });
  if (j.contains("intrinsics")) {
    const auto& k = j.at("intrinsics");
    const std::string kp = path + ".intrinsics";
    m.intrinsics = {number(k.at("fx"), kp + ".fx"), number(k.at("fy"), kp + ".fy"),
                    number(k.at("cx"), kp + ".cx"), number(k.at("cy"), kp + ".cy")};
  }
  m.width = at_path(path + ".width", [&] { return j.value("width", m.width); });
  m.height = at_path(path + ".height", [&] { return j.value("height", m.height); });
  if (!j.contains("intrinsics")) {
    m.intrinsics = {0.5 * m.width, 0.5 * m.width, 0.5 * m.width, 0.5 * m.height};
  }
  if (j.contains("position")) {
    const auto& p = j.at("position");
    if (!p.is_array() || p.size() != 3) config_error(path + ".position", "expected [x, y, z]");
    m.position = Vec3(number(p[0], path + ".position[0]"), number(p[1], path + ".position[1]"),
                      number(p[2], path + ".position[2]"));
  }
  if (j.contains("yaw")) m.yaw = number(j.at("yaw"), path + ".yaw");
  if (j.contains("pitch")) m.pitch = number(j.at("pitch"), path + ".pitch");
  return m;
}

}  // namespace

nlohmann::json CameraMount::to_json() const {
  return {{"name", name},
          {"intrinsics", {{"fx", intrinsics.fx}, {"fy", intrinsics.fy}, {"cx", intrinsics.cx}, {"cy", intrinsics.cy}}},
          {"width", width},
          {"height", height},
          {"position", {position.x(), position.y(), position.z()}},
          {"yaw", yaw},
          {"pitch", pitch}};
}

nlohmann::json ActorSpec::to_json() const {
  json j = {{"start", start.to_json()}, {"behavior", behavior}};
  if (!asset.empty()) j["asset"] = asset;
  if (native >= 0) j["native"] = native;
  if (extents) j["extents"] = {extents->length, extents->width, extents->height};
  return j;
}

void ScenarioConfig::validate() const {
  if (scene.is_null()) config_error("scenario.scene", "missing");
  require(control_hz > 0 && std::isfinite(control_hz), ErrorCode::kConfig,
          "scenario.ego.control_hz: must be positive");
  require(horizon > 0, ErrorCode::kConfig, "scenario.horizon: must be positive");
  require(route.size() >= 2, ErrorCode::kConfig,
          "scenario.route: needs at least 2 points, got " + std::to_string(route.size()));
  require(!drivable.empty(), ErrorCode::kConfig, "scenario.drivable: at least one polygon is required");
  for (std::size_t i = 0; i < drivable.size(); ++i) {
    require(polygon_is_simple(drivable[i]), ErrorCode::kConfig,
            "scenario.drivable[" + std::to_string(i) + "]: polygon is not simple");
  }
  require(tier == "easy" || tier == "medium" || tier == "hard" || tier == "extreme", ErrorCode::kConfig,
          "scenario.tier: expected easy, medium, hard or extreme, got '" + tier + "'");
  require(off_route_distance > 0, ErrorCode::kConfig, "scenario.off_route_distance: must be positive");
  require(std::isfinite(ego_start.v), ErrorCode::kConfig, "scenario.ego.start.v: must be finite");
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto& c = cameras[i];
    require(c.width > 0 && c.height > 0 && c.intrinsics.fx > 0 && c.intrinsics.fy > 0, ErrorCode::kConfig,
            "scenario.cameras[" + std::to_string(i) + "]: size and focal lengths must be positive");
  }
  for (std::size_t i = 0; i < actors.size(); ++i) {
    const auto& a = actors[i];
    const std::string p = "scenario.actors[" + std::to_string(i) + "]";
    require(a.asset.empty() != (a.native < 0), ErrorCode::kConfig, p + ": give exactly one of asset or native");
    if (a.extents) {
      require(a.extents->length > 0 && a.extents->width > 0 && a.extents->height > 0, ErrorCode::kConfig,
              p + ".extents: must be positive");
    }
  }
  at_path("scenario.ego.kinematics", [&] { kinematics.validate(); });
  at_path("scenario.lqr", [&] { lqr.validate(); });
  at_path("scenario.collision", [&] { collision.validate(); });
  at_path("scenario.scoring", [&] { scoring.validate(); });
}

nlohmann::json ScenarioConfig::to_json() const {
  json cams = json::array(), acts = json::array(), poly = json::array(), rt = json::array();
  for (const auto& c : cameras) cams.push_back(c.to_json());
  for (const auto& a : actors) acts.push_back(a.to_json());
  for (const auto& p : route) rt.push_back({p.x(), p.y()});
  for (const auto& pg : drivable) {
    json one = json::array();
    for (const auto& p : pg) one.push_back({p.x(), p.y()});
    poly.push_back(one);
  }
  json j = {{"name", name},
            {"scene", scene},
            {"cameras", cams},
            {"ego", {{"start", ego_start.to_json()}, {"kinematics", kinematics.to_json()}, {"control_hz", control_hz}}},
            {"actors", acts},
            {"route", rt},
            {"drivable", poly},
            {"tier", tier},
            {"horizon", horizon},
            {"seed", seed},
            {"lqr", lqr.to_json()},
            {"collision", collision.to_json()},
            {"scoring", scoring.to_json()},
            {"off_route_distance", off_route_distance},
            {"render", render},
            {"render_threads", render_threads}};
  if (!asset_library.empty()) j["assets"] = asset_library;
  return j;
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) config_error("scenario", "expected a JSON object");
  ScenarioConfig c;
  c.base_dir = base_dir;
  c.name = at_path("scenario.name", [&] { return j.value("name", c.name); });
  if (!j.contains("scene")) config_error("scenario.scene", "missing");
  c.scene = j.at("scene");
  if (!c.scene.is_string() && !(c.scene.is_object() && c.scene.contains("synthetic"))) {
    config_error("scenario.scene", "expected a path or {\"synthetic\": {...}}");
  }
  c.asset_library = at_path("scenario.assets", [&] { return j.value("assets", std::string()); });

  if (j.contains("cameras")) {
    const auto& cams = j.at("cameras");
    if (!cams.is_array()) config_error("scenario.cameras", "expected an array");
    for (std::size_t i = 0; i < cams.size(); ++i) {
      const std::string p = "scenario.cameras[" + std::to_string(i) + "]";
      c.cameras.push_back(at_path(p, [&] { return camera_mount(cams[i], p); }));
    }
  }

  if (j.contains("ego")) {
    const auto& e = j.at("ego");
    if (e.contains("start")) {
      const auto s = actor_state(e.at("start"), "scenario.ego.start");
      c.ego_start = {s.x, s.z, s.theta, s.v};
    }
    if (e.contains("kinematics")) {
      c.kinematics = at_path("scenario.ego.kinematics", [&] { return KinematicParams::from_json(e.at("kinematics")); });
    }
    if (e.contains("control_hz")) c.control_hz = number(e.at("control_hz"), "scenario.ego.control_hz");
  }

  if (j.contains("actors")) {
    const auto& acts = j.at("actors");
    if (!acts.is_array()) config_error("scenario.actors", "expected an array");
    for (std::size_t i = 0; i < acts.size(); ++i) {
      const std::string p = "scenario.actors[" + std::to_string(i) + "]";
      const auto& a = acts[i];
      if (!a.is_object()) config_error(p, "expected an object");
      ActorSpec s;
      s.asset = at_path(p + ".asset", [&] { return a.value("asset", std::string()); });
      s.native = at_path(p + ".native", [&] { return a.value("native", -1); });
      if (a.contains("start")) s.start = actor_state(a.at("start"), p + ".start");
      if (a.contains("behavior")) {
        s.behavior = a.at("behavior");
        if (!s.behavior.is_object()) config_error(p + ".behavior", "expected an object");
      }
      if (a.contains("extents")) s.extents = extents(a.at("extents"), p + ".extents");
      c.actors.push_back(std::move(s));
    }
  }

  if (!j.contains("route")) config_error("scenario.route", "missing");
  c.route = points(j.at("route"), "scenario.route");
  if (!j.contains("drivable")) config_error("scenario.drivable", "missing");
  const auto& dr = j.at("drivable");
  if (!dr.is_array()) config_error("scenario.drivable", "expected an array of polygons");
  for (std::size_t i = 0; i < dr.size(); ++i) {
    c.drivable.push_back(points(dr[i], "scenario.drivable[" + std::to_string(i) + "]"));
  }

  c.tier = at_path("scenario.tier", [&] { return j.value("tier", c.tier); });
  if (j.contains("horizon")) c.horizon = number(j.at("horizon"), "scenario.horizon");
  c.seed = at_path("scenario.seed", [&] { return j.value("seed", c.seed); });
  if (j.contains("lqr")) c.lqr = at_path("scenario.lqr", [&] { return LqrConfig::from_json(j.at("lqr")); });
  if (j.contains("collision")) {
    c.collision = at_path("scenario.collision", [&] { return BackgroundCollisionConfig::from_json(j.at("collision")); });
  }
  if (j.contains("scoring")) {
    c.scoring = at_path("scenario.scoring", [&] { return metrics::ScoreConfig::from_json(j.at("scoring")); });
  }
  if (j.contains("off_route_distance")) {
    c.off_route_distance = number(j.at("off_route_distance"), "scenario.off_route_distance");
  }
  c.render = at_path("scenario.render", [&] { return j.value("render", c.render); });
  c.render_threads = at_path("scenario.render_threads", [&] { return j.value("render_threads", c.render_threads); });
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    config_error("scenario", std::string("invalid JSON in ") + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::optional<std::uint64_t> seed_override_from_env() {
  const char* v = std::getenv("HUGSIM_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  require(end != nullptr && *end == '\0', ErrorCode::kConfig,
          std::string("HUGSIM_SEED: expected an unsigned integer, got '") + v + "'");
  return static_cast<std::uint64_t>(s);
}

scene::Camera mount_camera(const CameraMount& mount, const EgoState& ego, double ground_y) {
  const Mat3 r = yaw_rotation(ego.theta);
  const Vec3 base(ego.x, ground_y, ego.z);
  const Vec3 fwd_obj(std::cos(mount.yaw) * std::cos(mount.pitch), std::sin(mount.pitch),
                     std::sin(mount.yaw) * std::cos(mount.pitch));
  return scene::Camera::look_along(mount.intrinsics, mount.width, mount.height, base + r * mount.position,
                                   r * fwd_obj, Vec3(0, 1, 0));
}

}  // namespace hugsim::sim
