#include "hugsim/assets/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hugsim/core/error.hpp"
#include "hugsim/render/rasterizer.hpp"
#include "hugsim/scene/compose.hpp"
#include "hugsim/scene/semantics.hpp"

namespace hugsim::assets {

namespace {

constexpr double kLogitPeak = 5.0;

std::vector<double> class_logits(std::size_t classes, int cls) {
  std::vector<double> l(classes, 0.0);
  if (cls >= 0) l[static_cast<std::size_t>(cls)] = kLogitPeak;
  return l;
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Signed distance to a rounded rectangle centered at the origin.
double rounded_rect_sdf(double x, double z, double half_l, double half_w, double r) {
  const double qx = std::abs(x) - (half_l - r), qz = std::abs(z) - (half_w - r);
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qz, 0.0));
  return outside + std::min(std::max(qx, qz), 0.0) - r;
}

std::optional<std::pair<int, int>> pixel_of(const scene::Camera& cam, const Vec3& p) {
  const auto uv = cam.project(p, 1e-3);
  if (!uv) return std::nullopt;
  const int x = static_cast<int>(std::lround((*uv)[0])), y = static_cast<int>(std::lround((*uv)[1]));
  if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) return std::nullopt;
  return std::make_pair(x, y);
}

void check_views(const std::vector<VehicleView>& views) {
  require(!views.empty(), ErrorCode::kInvalidArgument, "reconstruct_vehicle: no views");
  double covered = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& view = views[v];
    const std::string where = "reconstruct_vehicle: view " + std::to_string(v);
    require(view.color.channels == 3 && view.color.width == view.camera.width &&
                view.color.height == view.camera.height,
            ErrorCode::kShapeMismatch, where + " color image does not match its camera");
    require(view.mask.channels == 1 && view.mask.width == view.color.width &&
                view.mask.height == view.color.height,
            ErrorCode::kShapeMismatch, where + " mask does not match its color image");
    for (double m : view.mask.data) covered += m;
  }
  require(covered > 0, ErrorCode::kInvalidArgument, "reconstruct_vehicle: every mask is empty");
}

std::vector<std::string> coverage_warnings(const std::vector<VehicleView>& views, const VehicleReconConfig& c) {
  std::vector<std::string> w;
  if (static_cast<int>(views.size()) < c.min_views) {
    w.push_back("only " + std::to_string(views.size()) + " views (recommended at least " +
                std::to_string(c.min_views) + ")");
  }
  std::vector<double> az;
  for (const auto& v : views) {
    const Vec3 p = v.camera.center();
    az.push_back(std::atan2(p.z(), p.x()));
  }
  std::sort(az.begin(), az.end());
  double gap = 2 * M_PI - (az.back() - az.front());
  for (std::size_t i = 1; i < az.size(); ++i) gap = std::max(gap, az[i] - az[i - 1]);
  const double gap_deg = gap * 180.0 / M_PI;
  if (gap_deg > c.max_azimuth_gap_deg) {
    w.push_back("azimuth coverage has a " + std::to_string(static_cast<int>(std::lround(gap_deg))) +
                " degree gap (limit " + std::to_string(static_cast<int>(c.max_azimuth_gap_deg)) + ")");
  }
  return w;
}

}  // namespace

nlohmann::json VehicleReconConfig::to_json() const {
  return {{"asset_id", asset_id},
          {"initial_gaussians", initial_gaussians},
          {"search_radius", search_radius},
          {"carve_resolution", carve_resolution},
          {"min_views", min_views},
          {"max_azimuth_gap_deg", max_azimuth_gap_deg},
          {"sh_degree", sh_degree},
          {"weights", weights.to_json()},
          {"fit", fit.to_json()}};
}

VehicleReconConfig VehicleReconConfig::from_json(const nlohmann::json& j) {
  VehicleReconConfig c;
  try {
    c.asset_id = j.value("asset_id", c.asset_id);
    c.initial_gaussians = j.value("initial_gaussians", c.initial_gaussians);
    c.search_radius = j.value("search_radius", c.search_radius);
    c.carve_resolution = j.value("carve_resolution", c.carve_resolution);
    c.min_views = j.value("min_views", c.min_views);
    c.max_azimuth_gap_deg = j.value("max_azimuth_gap_deg", c.max_azimuth_gap_deg);
    c.sh_degree = j.value("sh_degree", c.sh_degree);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("vehicle reconstruction config: ") + e.what());
  }
  if (j.contains("weights")) c.weights = recon::LossWeights::from_json(j.at("weights"));
  if (j.contains("fit")) c.fit = recon::FitConfig::from_json(j.at("fit"));
  require(c.initial_gaussians > 0 && c.carve_resolution > 1 && c.search_radius > 0, ErrorCode::kConfig,
          "vehicle reconstruction config: initial_gaussians, carve_resolution and search_radius must be positive");
  require(c.sh_degree >= 0 && c.sh_degree <= 3, ErrorCode::kConfig,
          "vehicle reconstruction config: sh_degree must lie in [0, 3]");
  return c;
}

VehicleReconResult reconstruct_vehicle(const std::vector<VehicleView>& views, const VehicleReconConfig& config) {
  check_views(views);
  VehicleReconResult result;
  result.warnings = coverage_warnings(views, config);

  const auto schema = scene::SemanticSchema::driving_default();
  const int vehicle = schema.index_of("vehicle");

  // Visual hull: voxel centers that land inside the mask of every view that sees them.
  const int n = config.carve_resolution;
  const double R = config.search_radius, step = 2 * R / n;
  std::vector<Vec3> hull;
  std::vector<Vec3> hull_color;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const Vec3 p(-R + (i + 0.5) * step, -R + (j + 0.5) * step, -R + (k + 0.5) * step);
        bool inside = true;
        int seen = 0;
        Vec3 color = Vec3::Zero();
        for (const auto& v : views) {
          const auto px = pixel_of(v.camera, p);
          if (!px) continue;
          if (v.mask.at(px->first, px->second) < 0.5) {
            inside = false;
            break;
          }
          ++seen;
          for (int c = 0; c < 3; ++c) color[c] += v.color.at(px->first, px->second, c);
        }
        if (inside && seen > 0) {
          hull.push_back(p);
          hull_color.push_back(color / seen);
        }
      }
    }
  }
  require(!hull.empty(), ErrorCode::kInvalidArgument,
          "reconstruct_vehicle: the masks have no consistent visual hull inside the search volume");

  Vec3 extent = Vec3::Zero();
  for (const auto& p : hull) extent = extent.cwiseMax(p.cwiseAbs() + Vec3::Constant(0.5 * step));
  scene::Extents ext{2 * extent.x(), 2 * extent.z(), 2 * extent.y()};

  // Evenly spaced subset of the hull as the initial Gaussians.
  std::mt19937_64 rng(config.fit.seed);
  std::vector<std::size_t> idx(hull.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(idx.size(), static_cast<std::size_t>(config.initial_gaussians)));
  std::sort(idx.begin(), idx.end());
  const double spacing = std::cbrt(static_cast<double>(hull.size()) / idx.size()) * step;

  scene::SceneGraph graph;
  graph.schema = schema;
  graph.sh_degree = config.sh_degree;
  for (std::size_t i : idx) {
    scene::Gaussian g;
    g.mu = hull[i];
    g.scale = Vec3::Constant(0.5 * spacing);
    g.opacity = 0.5;
    g.set_base_color(hull_color[i].cwiseMax(0.0).cwiseMin(1.0), config.sh_degree);
    g.sem_logits = class_logits(schema.size(), vehicle);
    graph.static_bg.push_back(std::move(g));
  }

  std::vector<recon::Observation> obs;
  for (const auto& v : views) {
    recon::Observation o;
    o.camera = v.camera;
    o.color = v.color;
    for (int y = 0; y < v.color.height; ++y) {
      for (int x = 0; x < v.color.width; ++x) {
        for (int c = 0; c < 3; ++c) o.color.at(x, y, c) *= v.mask.at(x, y);
      }
    }
    o.mask = v.mask;
    obs.push_back(std::move(o));
  }
  auto fit = recon::optimize_scene(graph, obs, config.weights, config.fit);

  auto& asset = result.asset;
  asset.id = config.asset_id;
  asset.extents = ext;
  const Vec3 limit = 0.55 * Vec3(ext.length, ext.height, ext.width);
  for (auto& g : fit.scene.static_bg) {
    if ((g.mu.cwiseAbs().array() <= limit.array()).all()) asset.body.push_back(std::move(g));
  }
  scene::quantize_to_storage(asset.body);
  double psnr_sum = 0;
  for (const auto& o : obs) {
    const auto r = recon::render_observation(fit.scene, o.camera, 0.0);
    psnr_sum += masked_psnr(r.color, o.color, o.mask);
  }
  asset.provenance = {{"source", "reconstruct_vehicle"},
                      {"views", views.size()},
                      {"iterations", config.fit.iterations},
                      {"hull_voxels", hull.size()},
                      {"masked_psnr", psnr_sum / static_cast<double>(obs.size())},
                      {"warnings", result.warnings}};
  result.log = std::move(fit.log);
  return result;
}

double masked_psnr(const Image& rendered, const Image& target, const Image& mask) {
  require(rendered.same_shape(target) && mask.width == rendered.width && mask.height == rendered.height &&
              mask.channels == 1,
          ErrorCode::kShapeMismatch, "masked_psnr: image shapes differ");
  double se = 0, count = 0;
  for (int y = 0; y < rendered.height; ++y) {
    for (int x = 0; x < rendered.width; ++x) {
      if (mask.at(x, y) < 0.5) continue;
      for (int c = 0; c < rendered.channels; ++c) {
        const double d = rendered.at(x, y, c) - target.at(x, y, c);
        se += d * d;
        count += 1;
      }
    }
  }
  require(count > 0, ErrorCode::kInvalidArgument, "masked_psnr: empty mask");
  if (se == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(count / se);
}

nlohmann::json ShadowConfig::to_json() const {
  return {{"strength", strength},
          {"grid", grid},
          {"corner_ratio", corner_ratio},
          {"thickness", thickness},
          {"color", {color.x(), color.y(), color.z()}}};
}

ShadowConfig ShadowConfig::from_json(const nlohmann::json& j) {
  ShadowConfig c;
  try {
    c.strength = j.value("strength", c.strength);
    c.grid = j.value("grid", c.grid);
    c.corner_ratio = j.value("corner_ratio", c.corner_ratio);
    c.thickness = j.value("thickness", c.thickness);
    if (j.contains("color")) {
      const auto& a = j.at("color");
      c.color = Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("shadow config: ") + e.what());
  }
  require(c.strength >= 0 && c.strength <= 1, ErrorCode::kConfig, "shadow config: strength must lie in [0, 1]");
  require(c.grid > 0 && c.thickness > 0, ErrorCode::kConfig, "shadow config: grid and thickness must be positive");
  require(c.corner_ratio >= 0 && c.corner_ratio <= 0.5, ErrorCode::kConfig,
          "shadow config: corner_ratio must lie in [0, 0.5]");
  return c;
}

scene::VehicleAsset add_shadow(scene::VehicleAsset asset, const ShadowConfig& config) {
  require(config.strength >= 0 && config.strength <= 1, ErrorCode::kInvalidArgument,
          "add_shadow: strength must lie in [0, 1]");
  require(config.grid > 0, ErrorCode::kInvalidArgument, "add_shadow: grid spacing must be positive");
  const auto& e = asset.extents;
  const double hl = 0.5 * e.length, hw = 0.5 * e.width;
  const double r = config.corner_ratio * std::min(e.length, e.width);
  const double d_max = std::hypot(hl - r, hw - r) + r;
  const int degree = asset.body.empty() ? 1 : asset.body.front().sh_degree();
  const std::size_t classes =
      asset.body.empty() ? scene::SemanticSchema::driving_default().size() : asset.body.front().sem_logits.size();
  const int road = scene::SemanticSchema::driving_default().index_of("road");

  asset.shadow.clear();
  const int nx = static_cast<int>(std::floor(hl / config.grid)), nz = static_cast<int>(std::floor(hw / config.grid));
  for (int i = -nx; i <= nx; ++i) {
    for (int k = -nz; k <= nz; ++k) {
      const double x = i * config.grid, z = k * config.grid;
      if (rounded_rect_sdf(x, z, hl, hw, r) > 0) continue;
      const double alpha = config.strength * smoothstep(1.0 - std::hypot(x, z) / d_max);
      if (alpha <= 0) continue;
      scene::Gaussian g;
      g.mu = Vec3(x, 0.5 * e.height, z);
      g.scale = Vec3(0.6 * config.grid, config.thickness, 0.6 * config.grid);
      g.opacity = alpha;
      g.set_base_color(config.color, degree);
      g.sem_logits = class_logits(classes, road < static_cast<int>(classes) ? road : -1);
      asset.shadow.push_back(std::move(g));
    }
  }
  scene::quantize_to_storage(asset.shadow);
  return asset;
}

scene::GaussianSet place_actor(const scene::VehicleAsset& asset, const scene::ActorPose& pose,
                               const scene::GroundPlaneSet& ground, bool include_shadow) {
  const double center_y = ground.height_at(pose.x, pose.z) - 0.5 * asset.extents.height;
  const auto tf = scene::actor_transform(pose, center_y);
  scene::GaussianSet out;
  out.reserve(asset.body.size() + (include_shadow ? asset.shadow.size() : 0));
  for (const auto& g : asset.body) out.push_back(scene::transform_gaussian(g, tf));
  if (include_shadow) {
    for (const auto& g : asset.shadow) out.push_back(scene::transform_gaussian(g, tf));
  }
  return out;
}

scene::VehicleAsset synthetic_vehicle(const scene::Extents& extents, int count, const Vec3& color, int sh_degree,
                                      std::uint64_t seed) {
  require(count > 0 && extents.length > 0 && extents.width > 0 && extents.height > 0, ErrorCode::kInvalidArgument,
          "synthetic_vehicle: count and extents must be positive");
  const auto schema = scene::SemanticSchema::driving_default();
  const int vehicle = schema.index_of("vehicle");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::normal_distribution<double> n(0.0, 1.0);
  scene::VehicleAsset a;
  a.id = "synthetic";
  a.extents = extents;
  const double radius = 0.12 * std::min({extents.length, extents.width, extents.height});
  const Vec3 glass(0.25, 0.32, 0.4);
  for (int i = 0; i < count; ++i) {
    scene::Gaussian g;
    const double y = 0.85 * u(rng) * extents.height;
    const bool cabin = y < -0.1 * extents.height;  // y points down
    const double len = cabin ? 0.55 : 0.85;
    g.mu = Vec3(len * u(rng) * extents.length, y, 0.85 * u(rng) * extents.width);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    g.quat = q / q.norm();
    g.scale = radius * Vec3(std::exp(0.3 * n(rng)), std::exp(0.3 * n(rng)), std::exp(0.3 * n(rng)));
    g.opacity = 0.9;
    const double jitter = 0.08 * u(rng);
    g.set_base_color(((cabin ? glass : color).array() + jitter).cwiseMax(0.0).cwiseMin(1.0), sh_degree);
    g.sem_logits = class_logits(schema.size(), vehicle);
    a.body.push_back(std::move(g));
  }
  scene::quantize_to_storage(a.body);
  a.provenance = {{"source", "synthetic_vehicle"}, {"seed", seed}, {"count", count}};
  return a;
}

std::vector<scene::Camera> orbit_cameras(int count, double radius, double height, const scene::Intrinsics& k,
                                         int width, int height_px) {
  std::vector<scene::Camera> cams;
  for (int i = 0; i < count; ++i) {
    const double a = 2 * M_PI * i / count;
    const Vec3 pos(radius * std::cos(a), -height, radius * std::sin(a));
    cams.push_back(scene::Camera::look_along(k, width, height_px, pos, -pos));
  }
  return cams;
}

std::vector<VehicleView> capture_vehicle(const scene::VehicleAsset& asset, const std::vector<scene::Camera>& cameras) {
  std::vector<VehicleView> views;
  render::RenderOptions opt;
  opt.modes.alpha = true;
  for (const auto& cam : cameras) {
    const auto r = render::rasterize(asset.body, cam, opt);
    VehicleView v;
    v.camera = cam;
    v.color = r.color;
    v.mask = Image(cam.width, cam.height, 1);
    for (std::size_t i = 0; i < v.mask.data.size(); ++i) v.mask.data[i] = r.alpha.data[i] > 0.5 ? 1.0 : 0.0;
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace hugsim::assets
