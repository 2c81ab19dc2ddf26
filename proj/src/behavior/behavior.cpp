#include "hugsim/behavior/behavior.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "hugsim/core/error.hpp"

namespace hugsim::behavior {

nlohmann::json ActorState::to_json() const {
  return {{"x", x}, {"z", z}, {"theta", theta}, {"v", v}};
}

ReplayPose replay_behavior(const recon::UnicycleTrajectory& traj, double t) {
  const auto s = recon::unicycle_interpolate(traj, t);
  return {{s.state.x, s.state.z, s.state.theta}, s.clamped};
}

scene::ActorPose constant_speed_behavior(const scene::ActorPose& start, double speed, double direction,
                                         double t) {
  return {start.x + speed * t * std::cos(direction), start.z + speed * t * std::sin(direction),
          start.theta};
}

// ---------------------------------------------------------------- IDM

void IdmParams::validate() const {
  require(desired_speed > 0, ErrorCode::kConfig, "idm.desired_speed: must be positive");
  require(time_headway >= 0, ErrorCode::kConfig, "idm.time_headway: must be >= 0");
  require(min_gap >= 0, ErrorCode::kConfig, "idm.min_gap: must be >= 0");
  require(max_accel > 0 && comfort_decel > 0, ErrorCode::kConfig,
          "idm.max_accel, idm.comfort_decel: must be positive");
  require(min_accel < 0, ErrorCode::kConfig, "idm.min_accel: must be negative");
  require(lookahead > 0 && lane_width > 0 && wheelbase > 0 && max_steer > 0, ErrorCode::kConfig,
          "idm: lookahead, lane_width, wheelbase and max_steer must be positive");
}

nlohmann::json IdmParams::to_json() const {
  return {{"desired_speed", desired_speed}, {"time_headway", time_headway}, {"min_gap", min_gap},
          {"max_accel", max_accel},         {"comfort_decel", comfort_decel}, {"min_accel", min_accel},
          {"exponent", exponent},           {"lookahead", lookahead},         {"lane_width", lane_width},
          {"wheelbase", wheelbase},         {"max_steer", max_steer}};
}

IdmParams IdmParams::from_json(const nlohmann::json& j) {
  IdmParams p;
  p.desired_speed = j.value("desired_speed", p.desired_speed);
  p.time_headway = j.value("time_headway", p.time_headway);
  p.min_gap = j.value("min_gap", p.min_gap);
  p.max_accel = j.value("max_accel", p.max_accel);
  p.comfort_decel = j.value("comfort_decel", p.comfort_decel);
  p.min_accel = j.value("min_accel", p.min_accel);
  p.exponent = j.value("exponent", p.exponent);
  p.lookahead = j.value("lookahead", p.lookahead);
  p.lane_width = j.value("lane_width", p.lane_width);
  p.wheelbase = j.value("wheelbase", p.wheelbase);
  p.max_steer = j.value("max_steer", p.max_steer);
  p.validate();
  return p;
}

double idm_acceleration(double v, const std::optional<Leader>& leader, const IdmParams& p) {
  double a = p.max_accel * (1.0 - std::pow(std::max(v, 0.0) / p.desired_speed, p.exponent));
  if (leader) {
    if (leader->gap <= 0) return p.min_accel;
    const double dv = v - leader->speed;
    const double s_star = p.min_gap + std::max(0.0, v * p.time_headway +
                                                        v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel)));
    a -= p.max_accel * (s_star / leader->gap) * (s_star / leader->gap);
  }
  return std::clamp(a, p.min_accel, p.max_accel);
}

double pure_pursuit_steer(const ActorState& s, const sim::Polyline& lane, double lookahead,
                          double wheelbase) {
  const auto proj = lane.project(s.position());
  const Vec2 target = lane.point_at(proj.arc + lookahead);
  const Vec2 d = target - s.position();
  const double alpha = wrap_angle(std::atan2(d.y(), d.x()) - s.theta);
  const double ld = std::max(d.norm(), 1e-6);
  return std::atan(2.0 * wheelbase * std::sin(alpha) / ld);
}

std::vector<ActorState> predict_trajectory(const ActorState& s, double horizon, double dt) {
  require(dt > 0, ErrorCode::kInvalidArgument, "predict_trajectory: dt must be positive");
  const int n = static_cast<int>(std::floor(horizon / dt + 1e-9));
  std::vector<ActorState> out;
  out.reserve(std::max(n, 0));
  for (int k = 1; k <= n; ++k) {
    const double t = k * dt;
    out.push_back({s.x + s.v * std::cos(s.theta) * t, s.z + s.v * std::sin(s.theta) * t, s.theta, s.v});
  }
  return out;
}

// ---------------------------------------------------------------- attack

void AttackConfig::validate() const {
  require(horizon > 0 && dt > 0 && dt <= horizon, ErrorCode::kConfig,
          "attack: need 0 < dt <= horizon");
  require(top_k >= 1, ErrorCode::kConfig, "attack.top_k: must be at least 1");
  require(replan_period >= dt - 1e-12, ErrorCode::kConfig, "attack.replan_period: must be >= dt");
  require(lambda >= 0 && tolerance >= 0, ErrorCode::kConfig, "attack.lambda, attack.tolerance: must be >= 0");
  require(max_curvature > 0 && max_accel > 0, ErrorCode::kConfig,
          "attack.max_curvature, attack.max_accel: must be positive");
  for (double d : longitudinal) {
    require(d > 0, ErrorCode::kConfig, "attack.longitudinal: distances must be positive");
  }
}

nlohmann::json AttackConfig::to_json() const {
  return {{"horizon", horizon},   {"dt", dt},
          {"lateral", lateral},   {"longitudinal", longitudinal},
          {"top_k", top_k},       {"replan_period", replan_period},
          {"lambda", lambda},     {"tolerance", tolerance},
          {"max_curvature", max_curvature}, {"max_accel", max_accel}};
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j, const AttackConfig& base) {
  AttackConfig c = base;
  c.horizon = j.value("horizon", c.horizon);
  c.dt = j.value("dt", c.dt);
  c.lateral = j.value("lateral", c.lateral);
  c.longitudinal = j.value("longitudinal", c.longitudinal);
  c.top_k = j.value("top_k", c.top_k);
  c.replan_period = j.value("replan_period", c.replan_period);
  c.lambda = j.value("lambda", c.lambda);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.max_curvature = j.value("max_curvature", c.max_curvature);
  c.max_accel = j.value("max_accel", c.max_accel);
  c.validate();
  return c;
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) { return from_json(j, AttackConfig{}); }

AttackConfig AttackConfig::for_tier(const std::string& tier) {
  AttackConfig c;
  if (tier == "extreme") {
    c.top_k = 1;
    c.replan_period = 0.5;
  } else {
    c.top_k = 3;
    c.replan_period = 1.0;
  }
  return c;
}

std::vector<CandidateTrajectory> spline_candidates(const ActorState& s, const AttackConfig& config,
                                                   const sim::Polyline* lane) {
  std::vector<CandidateTrajectory> out;
  const int n = static_cast<int>(std::floor(config.horizon / config.dt + 1e-9));
  const double T = n * config.dt;
  if (n < 1) return out;
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  const int nl = static_cast<int>(config.longitudinal.size());

  for (std::size_t li = 0; li < config.lateral.size(); ++li) {
    for (int di = 0; di < nl; ++di) {
      CandidateTrajectory cand;
      cand.grid_index = static_cast<int>(li) * nl + di;
      cand.lateral = config.lateral[li];
      cand.longitudinal = config.longitudinal[di];

      // Terminal point in the actor heading frame (station, lateral).
      double sf = cand.longitudinal, lf = cand.lateral;
      if (lane != nullptr && lane->points().size() >= 2) {
        const auto proj = lane->project(s.position());
        const double arc = proj.arc + cand.longitudinal;
        const double h = lane->heading_at(arc);
        const Vec2 target = lane->point_at(arc) + cand.lateral * Vec2(-std::sin(h), std::cos(h));
        const Vec2 d = target - s.position();
        sf = c * d.x() + sn * d.y();
        lf = -sn * d.x() + c * d.y();
      }
      if (sf <= 1e-6) continue;

      const double accel = 2.0 * (sf - s.v * T) / (T * T);
      if (std::abs(accel) > config.max_accel + 1e-12 || s.v + accel * T < -1e-12) continue;
      double kmax = 0.0;
      for (int i = 0; i <= 64; ++i) {
        const double u = i / 64.0;
        const double d1 = lf * (6 * u - 6 * u * u) / sf;
        const double d2 = lf * (6 - 12 * u) / (sf * sf);
        kmax = std::max(kmax, std::abs(d2) / std::pow(1 + d1 * d1, 1.5));
      }
      if (kmax > config.max_curvature) continue;

      cand.states.reserve(n);
      for (int k = 1; k <= n; ++k) {
        const double t = k * config.dt;
        const double st = std::min(s.v * t + 0.5 * accel * t * t, sf);
        const double u = std::clamp(st / sf, 0.0, 1.0);
        const double l = lf * (3 * u * u - 2 * u * u * u);
        const double dl = lf * (6 * u - 6 * u * u) / sf;
        const double speed = std::max(0.0, s.v + accel * t) * std::sqrt(1 + dl * dl);
        cand.states.push_back({s.x + c * st - sn * l, s.z + sn * st + c * l, s.theta + std::atan(dl), speed});
      }
      out.push_back(std::move(cand));
    }
  }
  return out;
}

AttackCost attack_cost(const CandidateTrajectory& cand, const std::vector<ActorState>& ego,
                       const std::vector<std::vector<ActorState>>& others, const AttackConfig& config) {
  auto min_distance = [&](const std::vector<ActorState>& other) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = std::min(other.size(), cand.states.size());
    for (std::size_t t = 0; t < n; ++t) {
      best = std::min(best, (other[t].position() - cand.states[t].position()).norm());
    }
    return best;
  };
  AttackCost cost;
  cost.attack = min_distance(ego);
  for (const auto& o : others) cost.collision += min_distance(o) < config.tolerance ? 1.0 : 0.0;
  cost.total = cost.attack + config.lambda * cost.collision;
  return cost;
}

AttackSelection attack_select(const std::vector<CandidateTrajectory>& candidates,
                              const std::vector<ActorState>& ego,
                              const std::vector<std::vector<ActorState>>& others,
                              const AttackConfig& config, std::mt19937_64& rng) {
  require(!candidates.empty(), ErrorCode::kInvalidArgument, "attack_select: no candidates");
  AttackSelection sel;
  for (const auto& c : candidates) sel.costs.push_back(attack_cost(c, ego, others, config));
  sel.ranked.resize(candidates.size());
  std::iota(sel.ranked.begin(), sel.ranked.end(), 0);
  std::sort(sel.ranked.begin(), sel.ranked.end(), [&](std::size_t a, std::size_t b) {
    if (sel.costs[a].total != sel.costs[b].total) return sel.costs[a].total < sel.costs[b].total;
    return candidates[a].grid_index < candidates[b].grid_index;
  });
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(config.top_k), candidates.size());
  sel.index = sel.ranked[k == 1 ? 0 : rng() % k];
  return sel;
}

// ---------------------------------------------------------------- runtime

namespace {

ActorState with_speed(const scene::ActorPose& p, double v) { return {p.x, p.z, p.theta, v}; }

class ReplayRuntime final : public Behavior {
 public:
  explicit ReplayRuntime(recon::UnicycleTrajectory traj) : traj_(std::move(traj)) {}
  ActorState step(const BehaviorContext& ctx) override {
    const auto a = replay_behavior(traj_, ctx.time).pose;
    const auto b = replay_behavior(traj_, ctx.time + ctx.dt).pose;
    return with_speed(b, std::hypot(b.x - a.x, b.z - a.z) / ctx.dt);
  }
  std::string type() const override { return "replay"; }

 private:
  recon::UnicycleTrajectory traj_;
};

class ConstantRuntime final : public Behavior {
 public:
  ConstantRuntime(const ActorState& start, double speed, double direction)
      : start_(start.pose()), speed_(speed), direction_(direction) {}
  ActorState step(const BehaviorContext& ctx) override {
    const auto pose = constant_speed_behavior(start_, speed_, direction_, ctx.time + ctx.dt);
    return with_speed(pose, speed_ * std::cos(direction_ - start_.theta));
  }
  std::string type() const override { return "constant"; }

 private:
  scene::ActorPose start_;
  double speed_, direction_;
};

class IdmRuntime final : public Behavior {
 public:
  IdmRuntime(IdmParams params, sim::Polyline lane) : p_(params), lane_(std::move(lane)) {}

  ActorState step(const BehaviorContext& ctx) override {
    const ActorState& self = ctx.actors[ctx.self];
    const double length = ctx.actor_lengths[ctx.self];
    std::optional<Leader> leader;
    auto consider = [&](const ActorState& o, double other_length) {
      const Vec2 d = o.position() - self.position();
      const double fwd = d.x() * std::cos(self.theta) + d.y() * std::sin(self.theta);
      const double lat = -d.x() * std::sin(self.theta) + d.y() * std::cos(self.theta);
      if (fwd <= 0 || std::abs(lat) > 0.5 * p_.lane_width) return;
      const double gap = fwd - 0.5 * (length + other_length);
      if (!leader || gap < leader->gap) leader = Leader{gap, o.v * std::cos(o.theta - self.theta)};
    };
    consider(ctx.ego, ctx.ego_length);
    for (std::size_t i = 0; i < ctx.actors.size(); ++i) {
      if (i != ctx.self) consider(ctx.actors[i], ctx.actor_lengths[i]);
    }
    double accel = idm_acceleration(self.v, leader, p_);
    if (self.v + accel * ctx.dt < 0) accel = -self.v / ctx.dt;
    const double steer = pure_pursuit_steer(self, lane_, p_.lookahead, p_.wheelbase);
    sim::KinematicParams kin;
    kin.wheelbase = p_.wheelbase;
    kin.max_steer = p_.max_steer;
    kin.min_accel = std::min(p_.min_accel, -self.v / ctx.dt);
    kin.max_accel = p_.max_accel;
    const auto n = sim::bicycle_advance({self.x, self.z, self.theta, self.v}, {steer, accel}, ctx.dt, kin);
    return {n.x, n.z, n.theta, std::max(0.0, n.v)};
  }
  std::string type() const override { return "idm"; }

 private:
  IdmParams p_;
  sim::Polyline lane_;
};

class AttackRuntime final : public Behavior {
 public:
  AttackRuntime(AttackConfig config, std::optional<sim::Polyline> lane, std::uint64_t seed)
      : config_(std::move(config)), lane_(std::move(lane)), rng_(seed) {}

  ActorState step(const BehaviorContext& ctx) override {
    const ActorState& self = ctx.actors[ctx.self];
    if (plan_.empty() || ctx.time - plan_time_ >= config_.replan_period - 1e-9) replan(ctx, self);
    return sample(ctx.time + ctx.dt - plan_time_);
  }
  std::string type() const override { return "attack"; }

 private:
  void replan(const BehaviorContext& ctx, const ActorState& self) {
    plan_start_ = self;
    plan_time_ = ctx.time;
    auto cands = spline_candidates(self, config_, lane_ ? &*lane_ : nullptr);
    if (cands.empty()) {
      plan_ = predict_trajectory(self, config_.horizon, config_.dt);
      return;
    }
    const auto ego = predict_trajectory(ctx.ego, config_.horizon, config_.dt);
    std::vector<std::vector<ActorState>> others;
    for (std::size_t i = 0; i < ctx.actors.size(); ++i) {
      if (i != ctx.self) others.push_back(predict_trajectory(ctx.actors[i], config_.horizon, config_.dt));
    }
    const auto sel = attack_select(cands, ego, others, config_, rng_);
    plan_ = std::move(cands[sel.index].states);
  }

  // Plan state `t` seconds after the replan; linear between samples, constant
  // velocity beyond the horizon.
  ActorState sample(double t) const {
    const double f = t / config_.dt;
    const int i = static_cast<int>(std::floor(f + 1e-9));
    auto at = [&](int k) { return k <= 0 ? plan_start_ : plan_[static_cast<std::size_t>(k - 1)]; };
    const int n = static_cast<int>(plan_.size());
    if (i >= n) {
      const ActorState last = at(n);
      const double extra = t - n * config_.dt;
      return {last.x + last.v * std::cos(last.theta) * extra, last.z + last.v * std::sin(last.theta) * extra,
              last.theta, last.v};
    }
    const double u = std::clamp(f - i, 0.0, 1.0);
    if (u < 1e-9) return at(i);
    const ActorState a = at(i), b = at(i + 1);
    return {a.x + u * (b.x - a.x), a.z + u * (b.z - a.z), a.theta + u * wrap_angle(b.theta - a.theta),
            a.v + u * (b.v - a.v)};
  }

  AttackConfig config_;
  std::optional<sim::Polyline> lane_;
  std::mt19937_64 rng_;
  std::vector<ActorState> plan_;
  ActorState plan_start_;
  double plan_time_ = 0.0;
};

std::optional<sim::Polyline> lane_from(const nlohmann::json& params) {
  if (!params.contains("lane")) return std::nullopt;
  std::vector<Vec2> pts;
  for (const auto& p : params.at("lane")) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  require(pts.size() >= 2, ErrorCode::kConfig, "behavior.params.lane: needs at least two points");
  return sim::Polyline(std::move(pts));
}

}  // namespace

std::unique_ptr<Behavior> make_behavior(const nlohmann::json& spec, const ActorState& start,
                                        const recon::UnicycleTrajectory* trajectory,
                                        const std::string& tier, std::uint64_t seed) {
  const std::string type = spec.value("type", std::string(trajectory ? "replay" : "constant"));
  const nlohmann::json params = spec.value("params", nlohmann::json::object());
  try {
    if (type == "replay") {
      if (params.contains("trajectory")) {
        return std::make_unique<ReplayRuntime>(recon::UnicycleTrajectory::from_json(params.at("trajectory")));
      }
      require(trajectory != nullptr, ErrorCode::kConfig,
              "behavior: replay needs params.trajectory for inserted actors");
      return std::make_unique<ReplayRuntime>(*trajectory);
    }
    if (type == "constant") {
      return std::make_unique<ConstantRuntime>(start, params.value("speed", start.v),
                                               params.value("direction", start.theta));
    }
    if (type == "idm") {
      auto lane = lane_from(params);
      if (!lane) {
        const Vec2 p = start.position(), f(std::cos(start.theta), std::sin(start.theta));
        lane = sim::Polyline({p - 10.0 * f, p + 1000.0 * f});
      }
      return std::make_unique<IdmRuntime>(IdmParams::from_json(params), std::move(*lane));
    }
    if (type == "attack") {
      return std::make_unique<AttackRuntime>(AttackConfig::from_json(params, AttackConfig::for_tier(tier)),
                                             lane_from(params), seed);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, "behavior." + type + ": " + e.what());
  }
  fail(ErrorCode::kConfig, "behavior.type: unknown behavior '" + type + "'");
}

}  // namespace hugsim::behavior
