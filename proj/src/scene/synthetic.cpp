#include "hugsim/scene/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hugsim/core/error.hpp"

namespace hugsim::scene {

namespace {

Vec3 json_vec3(const nlohmann::json& j, const Vec3& fallback) {
  if (j.is_null()) return fallback;
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

void require_positive(double v, const std::string& field) {
  require(v > 0.0 && std::isfinite(v), ErrorCode::kInvalidArgument,
          "synthetic scene: " + field + " must be positive (got " + std::to_string(v) + ")");
}

std::vector<double> one_hot_logits(std::size_t classes, int cls, double peak = 5.0) {
  std::vector<double> l(classes, 0.0);
  l[static_cast<std::size_t>(cls)] = peak;
  return l;
}

Vec4 pitch_quat(double grade) {
  const double phi = std::atan(grade);
  return Vec4(std::cos(phi / 2), std::sin(phi / 2), 0, 0);
}

}  // namespace

nlohmann::json SyntheticSceneSpec::to_json() const {
  nlohmann::json j;
  j["road_length"] = road_length;
  j["road_start"] = road_start;
  j["road_width"] = road_width;
  j["lane_count"] = lane_count;
  j["marking_width"] = marking_width;
  j["dash_length"] = dash_length;
  j["dash_gap"] = dash_gap;
  j["sidewalk_width"] = sidewalk_width;
  j["ground_spacing"] = ground_spacing;
  j["ground_jitter"] = ground_jitter;
  j["camera_height"] = camera_height;
  j["anchor_spacing"] = anchor_spacing;
  j["window_depth"] = window_depth;
  j["sky"] = sky;
  j["sh_degree"] = sh_degree;
  j["seed"] = seed;
  j["slope"] = nlohmann::json::array();
  for (const auto& s : slope) j["slope"].push_back({{"start_z", s.start_z}, {"grade", s.grade}});
  j["buildings"] = nlohmann::json::array();
  for (const auto& b : buildings) {
    j["buildings"].push_back({{"center", {b.center_x, b.center_z}},
                              {"size", {b.size_x, b.size_y, b.size_z}},
                              {"gaussian_count", b.gaussian_count},
                              {"color", {b.color.x(), b.color.y(), b.color.z()}}});
  }
  j["actors"] = nlohmann::json::array();
  for (const auto& a : actors) {
    j["actors"].push_back({{"extents", {a.extents.length, a.extents.width, a.extents.height}},
                           {"gaussian_count", a.gaussian_count},
                           {"color", {a.color.x(), a.color.y(), a.color.z()}},
                           {"start", {a.start.x, a.start.z, a.start.theta}},
                           {"speed", a.speed},
                           {"yaw_rate", a.yaw_rate},
                           {"knots", a.knots},
                           {"knot_dt", a.knot_dt}});
  }
  return j;
}

SyntheticSceneSpec SyntheticSceneSpec::from_json(const nlohmann::json& j) {
  SyntheticSceneSpec s;
  try {
    s.road_length = j.value("road_length", s.road_length);
    s.road_start = j.value("road_start", s.road_start);
    s.road_width = j.value("road_width", s.road_width);
    s.lane_count = j.value("lane_count", s.lane_count);
    s.marking_width = j.value("marking_width", s.marking_width);
    s.dash_length = j.value("dash_length", s.dash_length);
    s.dash_gap = j.value("dash_gap", s.dash_gap);
    s.sidewalk_width = j.value("sidewalk_width", s.sidewalk_width);
    s.ground_spacing = j.value("ground_spacing", s.ground_spacing);
    s.ground_jitter = j.value("ground_jitter", s.ground_jitter);
    s.camera_height = j.value("camera_height", s.camera_height);
    s.anchor_spacing = j.value("anchor_spacing", s.anchor_spacing);
    s.window_depth = j.value("window_depth", s.window_depth);
    s.sky = j.value("sky", s.sky);
    s.sh_degree = j.value("sh_degree", s.sh_degree);
    s.seed = j.value("seed", s.seed);
    for (const auto& g : j.value("slope", nlohmann::json::array())) {
      s.slope.push_back({g.at("start_z").get<double>(), g.at("grade").get<double>()});
    }
    for (const auto& b : j.value("buildings", nlohmann::json::array())) {
      BuildingSpec bs;
      bs.center_x = b.at("center").at(0).get<double>();
      bs.center_z = b.at("center").at(1).get<double>();
      bs.size_x = b.at("size").at(0).get<double>();
      bs.size_y = b.at("size").at(1).get<double>();
      bs.size_z = b.at("size").at(2).get<double>();
      bs.gaussian_count = b.value("gaussian_count", bs.gaussian_count);
      bs.color = json_vec3(b.value("color", nlohmann::json()), bs.color);
      s.buildings.push_back(bs);
    }
    for (const auto& a : j.value("actors", nlohmann::json::array())) {
      SyntheticActorSpec as;
      if (a.contains("extents")) {
        as.extents = {a["extents"].at(0).get<double>(), a["extents"].at(1).get<double>(),
                      a["extents"].at(2).get<double>()};
      }
      as.gaussian_count = a.value("gaussian_count", as.gaussian_count);
      as.color = json_vec3(a.value("color", nlohmann::json()), as.color);
      as.start = {a.at("start").at(0).get<double>(), a.at("start").at(1).get<double>(),
                  a.at("start").at(2).get<double>()};
      as.speed = a.value("speed", as.speed);
      as.yaw_rate = a.value("yaw_rate", as.yaw_rate);
      as.knots = a.value("knots", as.knots);
      as.knot_dt = a.value("knot_dt", as.knot_dt);
      s.actors.push_back(as);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("synthetic scene spec: ") + e.what());
  }
  return s;
}

double road_grade(const SyntheticSceneSpec& spec, double z) {
  double g = 0.0;
  for (const auto& seg : spec.slope) {
    if (z >= seg.start_z) g = seg.grade;
  }
  return g;
}

double road_elevation(const SyntheticSceneSpec& spec, double z) {
  // Integrate the piecewise-constant grade from z = 0.
  std::vector<GradeSegment> segs = spec.slope;
  std::sort(segs.begin(), segs.end(),
            [](const auto& a, const auto& b) { return a.start_z < b.start_z; });
  auto grade_at = [&](double q) {
    double g = 0.0;
    for (const auto& s : segs)
      if (q >= s.start_z) g = s.grade;
    return g;
  };
  std::vector<double> breaks{0.0, z};
  for (const auto& s : segs) {
    if ((s.start_z > 0.0 && s.start_z < z) || (s.start_z < 0.0 && s.start_z > z)) {
      breaks.push_back(s.start_z);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  double elev = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1];
    elev += grade_at(0.5 * (a + b)) * (b - a);
  }
  return z >= 0.0 ? elev : -elev;
}

double road_surface_y(const SyntheticSceneSpec& spec, double z) {
  return spec.camera_height - road_elevation(spec, z);
}

std::vector<Camera> synthetic_camera_path(const SyntheticSceneSpec& spec, const Intrinsics& k,
                                          int width, int height, double lateral_offset) {
  std::vector<Camera> cams;
  for (double z = 0.0; z <= spec.road_length + 1e-9; z += spec.anchor_spacing) {
    const double grade = road_grade(spec, z);
    const Vec3 pos(lateral_offset, road_surface_y(spec, z) - spec.camera_height, z);
    const Vec3 forward = Vec3(0.0, -grade, 1.0).normalized();
    const Vec3 down = Vec3(0.0, 1.0, grade).normalized();
    cams.push_back(Camera::look_along(k, width, height, pos, forward, down));
  }
  return cams;
}

SceneGraph build_synthetic_scene(const SyntheticSceneSpec& spec) {
  require_positive(spec.road_length, "road_length");
  require_positive(spec.road_width, "road_width");
  require_positive(spec.ground_spacing, "ground_spacing");
  require_positive(spec.camera_height, "camera_height");
  require_positive(spec.anchor_spacing, "anchor_spacing");
  require_positive(spec.window_depth, "window_depth");
  require(spec.lane_count >= 1, ErrorCode::kInvalidArgument, "synthetic scene: lane_count must be >= 1");
  require(spec.sidewalk_width >= 0.0, ErrorCode::kInvalidArgument,
          "synthetic scene: sidewalk_width must be non-negative");
  require(spec.sh_degree >= 0 && spec.sh_degree <= 3, ErrorCode::kInvalidArgument,
          "synthetic scene: sh_degree must be in 0..3");
  require(spec.road_start < spec.road_length, ErrorCode::kInvalidArgument,
          "synthetic scene: road_start must precede road_length");

  SceneGraph graph;
  graph.schema = SemanticSchema::driving_default();
  graph.sh_degree = spec.sh_degree;
  const std::size_t classes = graph.schema.size();
  const int road = graph.schema.index_of("road");
  const int marking = graph.schema.index_of("road_marking");
  const int sidewalk = graph.schema.index_of("sidewalk");
  const int building = graph.schema.index_of("building");
  const int vehicle = graph.schema.index_of("vehicle");
  const int sky = graph.schema.index_of("sky");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Ground: regular grid of flat Gaussians following the road surface.
  const double half_road = 0.5 * spec.road_width;
  const double half_total = half_road + spec.sidewalk_width;
  const double lane_w = spec.road_width / spec.lane_count;
  const double step = spec.ground_spacing;
  auto is_marking = [&](double x, double z) {
    const double hw = 0.5 * spec.marking_width;
    if (std::abs(std::abs(x) - (half_road - 0.3)) < hw) return true;  // solid edge lines
    for (int i = 1; i < spec.lane_count; ++i) {
      const double lx = -half_road + i * lane_w;
      if (std::abs(x - lx) < hw) {
        const double period = spec.dash_length + spec.dash_gap;
        double phase = std::fmod(z - spec.road_start, period);
        if (phase < 0) phase += period;
        return phase < spec.dash_length;
      }
    }
    return false;
  };
  const int nx = static_cast<int>(std::floor(2 * half_total / step)) + 1;
  const int nz = static_cast<int>(std::floor((spec.road_length - spec.road_start) / step)) + 1;
  for (int iz = 0; iz < nz; ++iz) {
    const double z = spec.road_start + iz * step;
    const double grade = road_grade(spec, z);
    const double y = road_surface_y(spec, z);
    for (int ix = 0; ix < nx; ++ix) {
      const double x = -half_total + ix * step;
      int cls = road;
      double base = 0.32;
      if (std::abs(x) > half_road) {
        cls = sidewalk;
        base = 0.58;
      } else if (is_marking(x, z)) {
        cls = marking;
        base = 0.92;
      }
      const double tone = base + spec.ground_jitter * (unit(rng) - 0.5);
      Gaussian g;
      g.mu = Vec3(x, y, z);
      g.quat = pitch_quat(grade);
      g.scale = Vec3(0.6 * step, 0.01, 0.6 * step);
      g.opacity = 0.95;
      g.set_base_color(Vec3(tone, tone, tone * 1.02), spec.sh_degree);
      g.sem_logits = one_hot_logits(classes, cls);
      graph.ground.push_back(std::move(g));
    }
  }

  for (std::size_t b = 0; b < spec.buildings.size(); ++b) {
    const auto& bs = spec.buildings[b];
    require_positive(bs.size_x, "building size_x");
    require_positive(bs.size_y, "building size_y");
    require_positive(bs.size_z, "building size_z");
    require(bs.gaussian_count > 0, ErrorCode::kInvalidArgument,
            "synthetic scene: building gaussian_count must be positive");
    const double base_y = road_surface_y(spec, bs.center_z);
    const double volume = bs.size_x * bs.size_y * bs.size_z;
    const double radius = std::min({0.6 * std::cbrt(volume / bs.gaussian_count),
                                    0.25 * bs.size_x, 0.25 * bs.size_z, 0.25 * bs.size_y});
    for (int i = 0; i < bs.gaussian_count; ++i) {
      Gaussian g;
      g.mu = Vec3(bs.center_x + (unit(rng) - 0.5) * bs.size_x, base_y - unit(rng) * bs.size_y,
                  bs.center_z + (unit(rng) - 0.5) * bs.size_z);
      g.scale = Vec3::Constant(radius);
      g.opacity = 0.9;
      const double jitter = 0.1 * (unit(rng) - 0.5);
      g.set_base_color((bs.color.array() + jitter).cwiseMax(0.0).cwiseMin(1.0), spec.sh_degree);
      g.sem_logits = one_hot_logits(classes, building);
      graph.static_bg.push_back(std::move(g));
    }
  }

  if (spec.sky) {
    for (int i = 0; i < 60; ++i) {
      const double az = (unit(rng) - 0.5) * 2.2;
      const double el = 0.05 + unit(rng) * 0.6;
      const double r = 150.0;
      Gaussian g;
      g.mu = Vec3(r * std::sin(az) * std::cos(el), -r * std::sin(el), r * std::cos(az) * std::cos(el));
      g.scale = Vec3::Constant(18.0);
      g.opacity = 1.0;
      g.set_base_color(Vec3(0.55, 0.7, 0.92), spec.sh_degree);
      g.sem_logits = one_hot_logits(classes, sky);
      graph.static_bg.push_back(std::move(g));
    }
  }

  for (std::size_t a = 0; a < spec.actors.size(); ++a) {
    const auto& as = spec.actors[a];
    require_positive(as.extents.length, "actor length");
    require_positive(as.extents.width, "actor width");
    require_positive(as.extents.height, "actor height");
    require_positive(as.knot_dt, "actor knot_dt");
    require(as.knots >= 2 && as.gaussian_count > 0, ErrorCode::kInvalidArgument,
            "synthetic scene: actors need >= 2 knots and a positive gaussian_count");
    NativeActor actor;
    actor.extents = as.extents;
    const double radius = 0.18 * std::min({as.extents.length, as.extents.width, as.extents.height});
    for (int i = 0; i < as.gaussian_count; ++i) {
      Gaussian g;
      g.mu = Vec3((unit(rng) - 0.5) * as.extents.length, (unit(rng) - 0.5) * as.extents.height,
                  (unit(rng) - 0.5) * as.extents.width);
      g.scale = Vec3::Constant(radius);
      g.opacity = 0.9;
      const double jitter = 0.1 * (unit(rng) - 0.5);
      g.set_base_color((as.color.array() + jitter).cwiseMax(0.0).cwiseMin(1.0), spec.sh_degree);
      g.sem_logits = one_hot_logits(classes, vehicle);
      actor.gaussians.push_back(std::move(g));
    }
    std::vector<double> times, v, omega;
    for (int k = 0; k < as.knots; ++k) times.push_back(k * as.knot_dt);
    v.assign(static_cast<std::size_t>(as.knots - 1), as.speed);
    omega.assign(static_cast<std::size_t>(as.knots - 1), as.yaw_rate);
    actor.trajectory =
        recon::unicycle_rollout({as.start.x, as.start.z, as.start.theta}, times, v, omega);
    graph.native_actors.push_back(std::move(actor));
  }

  quantize_to_storage(graph.ground);
  quantize_to_storage(graph.static_bg);
  for (auto& a : graph.native_actors) quantize_to_storage(a.gaussians);

  std::vector<std::pair<Mat3, Vec3>> anchors;
  for (const auto& cam : synthetic_camera_path(spec, Intrinsics{}, 1, 1)) {
    anchors.emplace_back(cam.rotation, cam.translation);
  }
  graph.ground_planes = GroundPlaneSet::build(anchors, graph.ground, spec.window_depth);
  return graph;
}

}  // namespace hugsim::scene
