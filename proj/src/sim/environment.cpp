#include "hugsim/sim/environment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include "hugsim/core/error.hpp"
#include "hugsim/render/image_io.hpp"
#include "hugsim/scene/compose.hpp"
#include "hugsim/scene/scene_io.hpp"
#include "hugsim/scene/synthetic.hpp"

namespace hugsim::sim {

namespace {

using nlohmann::json;

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<Waypoint> parse_waypoints(const json& j) {
  if (!j.is_array()) fail(ErrorCode::kShapeMismatch, "action.waypoints: expected an array of [x, y, t]");
  std::vector<Waypoint> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& w = j[i];
    if (!w.is_array() || w.size() != 3 || !w[0].is_number() || !w[1].is_number() || !w[2].is_number()) {
      fail(ErrorCode::kShapeMismatch, "action.waypoints[" + std::to_string(i) + "]: expected [x, y, t]");
    }
    out.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
  }
  return out;
}

std::vector<Control> parse_controls(const json& j) {
  if (!j.is_array()) fail(ErrorCode::kShapeMismatch, "action.controls: expected an array of [steer, accel]");
  std::vector<Control> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& c = j[i];
    if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number()) {
      fail(ErrorCode::kShapeMismatch, "action.controls[" + std::to_string(i) + "]: expected [steer, accel]");
    }
    const Control u{c[0].get<double>(), c[1].get<double>()};
    require(std::isfinite(u.steer) && std::isfinite(u.accel), ErrorCode::kInvalidArgument,
            "action.controls[" + std::to_string(i) + "]: not finite");
    out.push_back(u);
  }
  return out;
}

}  // namespace

Action Action::from_json(const json& j) {
  require(j.is_object(), ErrorCode::kShapeMismatch, "action: expected an object");
  const bool w = j.contains("waypoints"), c = j.contains("controls");
  require(w != c, ErrorCode::kInvalidArgument, "action: give exactly one of waypoints or controls");
  Action a;
  if (w) a.waypoints = parse_waypoints(j.at("waypoints"));
  else a.controls = parse_controls(j.at("controls"));
  require(!a.waypoints.empty() || !a.controls.empty(), ErrorCode::kInvalidArgument, "action: empty command list");
  return a;
}

json Action::to_json() const {
  json arr = json::array();
  if (!waypoints.empty()) {
    for (const auto& w : waypoints) arr.push_back({w.x, w.y, w.t});
    return {{"waypoints", arr}};
  }
  for (const auto& c : controls) arr.push_back({c.steer, c.accel});
  return {{"controls", arr}};
}

json StepResult::to_trace_json() const {
  json acts = json::array();
  for (const auto& a : actors) {
    acts.push_back({{"id", a.id}, {"kind", a.kind}, {"x", a.state.x}, {"z", a.state.z},
                    {"theta", a.state.theta}, {"v", a.state.v}});
  }
  json j = {{"type", "step"},
            {"step", step},
            {"t", time},
            {"ego", ego.to_json()},
            {"control", {{"steer", control.steer}, {"accel", control.accel}}},
            {"actors", acts},
            {"collision", {{"fg", fg_collision}, {"bg", bg_collision}, {"actor", collided_actor}}},
            {"scores", scores.to_json()},
            {"hd", hd_step},
            {"route_completion", route_completion},
            {"done", done},
            {"reason", done ? json(reason) : json(nullptr)},
            {"obs", observation_hashes}};
  if (stale_plan) j["stale_plan"] = true;
  return j;
}

std::shared_ptr<const scene::SceneGraph> load_scenario_scene(const ScenarioConfig& config) {
  if (config.scene.is_string()) {
    std::filesystem::path p = config.scene.get<std::string>();
    if (p.is_relative()) p = config.base_dir / p;
    require(std::filesystem::exists(p), ErrorCode::kIo, "scenario.scene: file " + p.string() + " does not exist");
    return std::make_shared<scene::SceneGraph>(scene::load_scene(p));
  }
  try {
    const auto spec = scene::SyntheticSceneSpec::from_json(config.scene.at("synthetic"));
    return std::make_shared<scene::SceneGraph>(scene::build_synthetic_scene(spec));
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("scenario.scene.synthetic: ") + e.what());
  }
}

Environment::Environment(ScenarioConfig config, std::shared_ptr<const scene::SceneGraph> scene,
                         std::shared_ptr<const assets::AssetLibrary> library)
    : config_(std::move(config)), scene_(std::move(scene)), library_(std::move(library)) {
  config_.validate();
  if (!scene_) scene_ = load_scenario_scene(config_);
  if (!library_ && !config_.asset_library.empty()) {
    std::filesystem::path p = config_.asset_library;
    if (p.is_relative()) p = config_.base_dir / p;
    library_ = std::make_shared<assets::AssetLibrary>(p);
  }
  obstacles_ = ObstacleIndex(*scene_, config_.collision);
  route_ = Polyline(config_.route);
  composed_ = scene_->ground;
  composed_.insert(composed_.end(), scene_->static_bg.begin(), scene_->static_bg.end());
  prefix_count_ = composed_.size();
  render_options_.modes = {};
  render_options_.modes.color = true;
  render_options_.modes.alpha = false;
  render_options_.threads = config_.render_threads;
  seed_ = config_.seed;
}

std::vector<scene::Camera> Environment::rig(const EgoState& ego) const {
  const double ground = scene_->ground_planes.height_at(ego.x, ego.z, 0.0);
  std::vector<scene::Camera> cams;
  for (const auto& m : config_.cameras) cams.push_back(mount_camera(m, ego, ground));
  return cams;
}

void Environment::compose_actors() {
  composed_.resize(prefix_count_);
  for (const auto& a : actors_) {
    const auto tf = scene::actor_transform(a.state.pose(), scene_->actor_center_y(a.state.x, a.state.z, a.extents));
    const scene::GaussianSet* sets[2] = {nullptr, nullptr};
    if (a.native >= 0) {
      sets[0] = &scene_->native_actors[static_cast<std::size_t>(a.native)].gaussians;
    } else {
      sets[0] = &a.asset->body;
      sets[1] = &a.asset->shadow;
    }
    for (const auto* set : sets) {
      if (set == nullptr) continue;
      for (const auto& g : *set) composed_.push_back(scene::transform_gaussian(g, tf));
    }
  }
}

std::vector<BevBox> Environment::actor_boxes() const {
  std::vector<BevBox> out;
  for (const auto& a : actors_) out.push_back({a.state.x, a.state.z, a.state.theta, a.extents.length, a.extents.width});
  return out;
}

StepResult Environment::reset(std::optional<std::uint64_t> seed) {
  const auto t0 = std::chrono::steady_clock::now();
  seed_ = seed.value_or(config_.seed);
  actors_.clear();
  scores_.clear();

  std::set<int> listed;
  for (const auto& spec : config_.actors) {
    if (spec.native >= 0) listed.insert(spec.native);
  }
  std::vector<ActorSpec> specs = config_.actors;
  for (std::size_t i = 0; i < scene_->native_actors.size(); ++i) {
    if (!listed.count(static_cast<int>(i))) {
      ActorSpec s;
      s.native = static_cast<int>(i);
      specs.push_back(s);
    }
  }

  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    const std::string path = "scenario.actors[" + std::to_string(i) + "]";
    ActorRuntime a;
    a.id = static_cast<int>(i);
    a.native = spec.native;
    a.state = spec.start;
    const recon::UnicycleTrajectory* traj = nullptr;
    if (spec.native >= 0) {
      require(static_cast<std::size_t>(spec.native) < scene_->native_actors.size(), ErrorCode::kConfig,
              path + ".native: index " + std::to_string(spec.native) + " out of range");
      const auto& n = scene_->native_actors[static_cast<std::size_t>(spec.native)];
      traj = &n.trajectory;
      a.extents = n.extents;
      if (spec.behavior.value("type", std::string("replay")) == "replay" && !n.trajectory.states.empty()) {
        const auto p = behavior::replay_behavior(n.trajectory, 0.0).pose;
        a.state = {p.x, p.z, p.theta, n.trajectory.v.empty() ? 0.0 : n.trajectory.v[0]};
      }
    } else {
      require(library_ != nullptr, ErrorCode::kMissingAsset,
              path + ".asset: '" + spec.asset + "' requested but the scenario has no asset library");
      a.asset_ref = library_->get(spec.asset);
      a.asset = a.asset_ref.get();
      a.extents = a.asset->extents;
    }
    if (spec.extents) a.extents = *spec.extents;
    a.behavior = behavior::make_behavior(spec.behavior, a.state, traj, config_.tier, mix_seed(seed_, i));
    actors_.push_back(std::move(a));
  }

  ego_ = config_.ego_start;
  time_ = 0.0;
  step_ = 0;
  prev_accel_ = 0.0;
  progress_ = route_.project({ego_.x, ego_.z}).arc;
  started_ = true;
  done_ = false;
  compose_actors();
  StepResult r = evaluate({0.0, 0.0}, 0.0, false);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

StepResult Environment::step(const Action& action) {
  const auto t0 = std::chrono::steady_clock::now();
  require(started_, ErrorCode::kEpisodeDone, "step: call reset() first");
  require(!done_, ErrorCode::kEpisodeDone, "step: episode is done; call reset()");
  require(action.waypoints.empty() != action.controls.empty(), ErrorCode::kInvalidArgument,
          "step: action needs exactly one of waypoints or controls");
  const double dt = config_.dt();

  Control u;
  bool stale = false;
  if (!action.controls.empty()) {
    u = action.controls.front();
    require(std::isfinite(u.steer) && std::isfinite(u.accel), ErrorCode::kInvalidArgument, "step: control not finite");
  } else {
    try {
      u = lqr_control(action.waypoints, ego_, dt, config_.kinematics, config_.lqr).front();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kStalePlan) throw;
      u = {0.0, config_.kinematics.min_accel};
      stale = true;
    }
  }
  u = clamp_control(u, config_.kinematics);

  behavior::BehaviorContext ctx;
  ctx.time = time_;
  ctx.dt = dt;
  ctx.ego = {ego_.x, ego_.z, ego_.theta, ego_.v};
  ctx.ego_length = config_.kinematics.extents.length;
  for (const auto& a : actors_) {
    ctx.actors.push_back(a.state);
    ctx.actor_lengths.push_back(a.extents.length);
  }
  std::vector<behavior::ActorState> next;
  for (std::size_t i = 0; i < actors_.size(); ++i) {
    ctx.self = i;
    next.push_back(actors_[i].behavior->step(ctx));
  }
  for (std::size_t i = 0; i < actors_.size(); ++i) actors_[i].state = next[i];

  const double theta_before = ego_.theta;
  ego_ = bicycle_advance(ego_, u, dt, config_.kinematics);
  time_ = (step_ + 1) * dt;
  ++step_;
  compose_actors();
  StepResult r = evaluate(u, (ego_.theta - theta_before) / dt, stale);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

StepResult Environment::evaluate(const Control& applied, double yaw_rate, bool stale) {
  const double dt = config_.dt();
  StepResult r;
  r.step = step_;
  r.time = time_;
  r.ego = ego_;
  r.control = applied;
  r.stale_plan = stale;

  const auto& kin = config_.kinematics;
  const BevBox ebox = ego_box(ego_, kin);
  const double ground = scene_->ground_planes.height_at(ego_.x, ego_.z, 0.0);
  const double center_y = ground - 0.5 * kin.extents.height;
  const auto boxes = actor_boxes();
  const auto hits = detect_collision_fg(ebox, boxes);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i]) {
      r.fg_collision = true;
      if (r.collided_actor < 0) r.collided_actor = actors_[i].id;
    }
  }
  r.bg_collision = obstacles_.collides({ebox, center_y, kin.extents.height});

  metrics::StepContext sc;
  sc.ego = {ebox, ego_.v};
  sc.ego_center_y = center_y;
  sc.ego_height = kin.extents.height;
  for (std::size_t i = 0; i < actors_.size(); ++i) sc.actors.push_back({boxes[i], actors_[i].state.v});
  sc.obstacles = &obstacles_;
  sc.drivable = &config_.drivable;
  sc.fg_collision = r.fg_collision;
  sc.bg_collision = r.bg_collision;
  sc.accel = applied.accel;
  sc.jerk = step_ == 0 ? 0.0 : (applied.accel - prev_accel_) / dt;
  sc.yaw_rate = yaw_rate;
  prev_accel_ = applied.accel;
  r.scores = metrics::sub_scores(sc, config_.scoring);
  r.hd_step = metrics::hd_score_step(r.scores, config_.scoring.weights);
  scores_.push_back(r.scores);

  const auto proj = route_.project({ego_.x, ego_.z});
  progress_ = std::max(progress_, proj.arc);
  const double length = route_.length();
  r.route_completion = length > 0 ? std::min(1.0, progress_ / length) : 0.0;

  if (r.fg_collision || r.bg_collision) r.reason = "collision";
  else if (progress_ >= length) r.reason = "route_complete";
  else if (proj.distance > config_.off_route_distance) r.reason = "off_route";
  else if (time_ >= config_.horizon - 1e-9) r.reason = "horizon";
  r.done = !r.reason.empty();
  done_ = r.done;

  for (std::size_t i = 0; i < actors_.size(); ++i) {
    r.actors.push_back({actors_[i].id, actors_[i].native >= 0 ? "native" : "inserted", actors_[i].state,
                        actors_[i].extents});
  }

  if (config_.render) {
    for (const auto& cam : rig(ego_)) {
      r.observations.push_back(render::rasterize(composed_, cam, render_options_));
      r.observation_hashes.push_back(fnv1a_hex(render::to_rgb8(r.observations.back().color)));
    }
  }
  return r;
}

metrics::ScoreTrace Environment::score_trace() const {
  metrics::ScoreTrace t;
  t.steps = scores_;
  t.weights = config_.scoring.weights;
  const double length = route_.length();
  t.route_completion = length > 0 ? std::min(1.0, progress_ / length) : 0.0;
  return t;
}

json Environment::trace_header() const {
  json route = json::array(), cams = json::array();
  for (const auto& p : config_.route) route.push_back({p.x(), p.y()});
  for (const auto& c : config_.cameras) cams.push_back(c.name);
  return {{"type", "header"},
          {"format", "hugsim-trace"},
          {"version", 1},
          {"scenario", config_.name},
          {"seed", seed_},
          {"tier", config_.tier},
          {"control_hz", config_.control_hz},
          {"horizon", config_.horizon},
          {"route", route},
          {"weights", {{"TTC", config_.scoring.weights.ttc}, {"COM", config_.scoring.weights.com}}},
          {"cameras", cams}};
}

}  // namespace hugsim::sim
