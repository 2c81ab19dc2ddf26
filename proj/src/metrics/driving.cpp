#include "hugsim/metrics/driving.hpp"

#include <algorithm>

#include "hugsim/core/error.hpp"

namespace hugsim::metrics {

nlohmann::json SubScores::to_json() const {
  return {{"NC", nc}, {"DAC", dac}, {"TTC", ttc}, {"COM", com}};
}

SubScores SubScores::from_json(const nlohmann::json& j) {
  return {j.at("NC").get<double>(), j.at("DAC").get<double>(), j.at("TTC").get<double>(),
          j.at("COM").get<double>()};
}

void ScoreConfig::validate() const {
  require(weights.ttc >= 0 && weights.com >= 0 && weights.ttc + weights.com > 0, ErrorCode::kConfig,
          "scoring.weights: must be >= 0 with a positive sum");
  require(ttc_horizon > 0, ErrorCode::kConfig, "scoring.ttc_horizon: must be positive");
  require(ttc_step > 0 && ttc_step <= ttc_horizon, ErrorCode::kConfig,
          "scoring.ttc_step: must lie in (0, ttc_horizon]");
  require(max_accel > 0 && max_jerk > 0 && max_yaw_rate > 0, ErrorCode::kConfig,
          "scoring: comfort thresholds must be positive");
}

nlohmann::json ScoreConfig::to_json() const {
  return {{"weights", {{"TTC", weights.ttc}, {"COM", weights.com}}},
          {"ttc_horizon", ttc_horizon},
          {"ttc_step", ttc_step},
          {"max_accel", max_accel},
          {"max_jerk", max_jerk},
          {"max_yaw_rate", max_yaw_rate}};
}

ScoreConfig ScoreConfig::from_json(const nlohmann::json& j) {
  ScoreConfig c;
  if (j.contains("weights")) {
    c.weights.ttc = j.at("weights").value("TTC", c.weights.ttc);
    c.weights.com = j.at("weights").value("COM", c.weights.com);
  }
  c.ttc_horizon = j.value("ttc_horizon", c.ttc_horizon);
  c.ttc_step = j.value("ttc_step", c.ttc_step);
  c.max_accel = j.value("max_accel", c.max_accel);
  c.max_jerk = j.value("max_jerk", c.max_jerk);
  c.max_yaw_rate = j.value("max_yaw_rate", c.max_yaw_rate);
  return c;
}

sim::BevBox MovingBox::at(double dt) const {
  sim::BevBox b = box;
  b.x += speed * std::cos(box.theta) * dt;
  b.z += speed * std::sin(box.theta) * dt;
  return b;
}

double time_to_collision(const StepContext& ctx, const ScoreConfig& config) {
  const int n = static_cast<int>(std::floor(config.ttc_horizon / config.ttc_step + 1e-9));
  for (int k = 1; k <= n; ++k) {
    const double t = k * config.ttc_step;
    const sim::BevBox ego = ctx.ego.at(t);
    for (const auto& a : ctx.actors) {
      if (sim::boxes_overlap(ego, a.at(t))) return t;
    }
    if (ctx.obstacles != nullptr && ctx.obstacles->collides({ego, ctx.ego_center_y, ctx.ego_height})) {
      return t;
    }
  }
  return -1.0;
}

SubScores sub_scores(const StepContext& ctx, const ScoreConfig& config) {
  require(ctx.drivable != nullptr && !ctx.drivable->empty(), ErrorCode::kConfig,
          "sub_scores: DAC is undefined without drivable-area polygons");
  SubScores s;
  s.nc = (ctx.fg_collision || ctx.bg_collision) ? 0.0 : 1.0;
  for (const auto& c : ctx.ego.box.corners()) {
    if (!sim::point_in_any(*ctx.drivable, c)) s.dac = 0.0;
  }
  s.ttc = time_to_collision(ctx, config) >= 0 ? 0.0 : 1.0;
  s.com = (std::abs(ctx.accel) <= config.max_accel && std::abs(ctx.jerk) <= config.max_jerk &&
           std::abs(ctx.yaw_rate) <= config.max_yaw_rate)
              ? 1.0
              : 0.0;
  return s;
}

double hd_score_step(const SubScores& s, const ScoreWeights& w) {
  return s.nc * s.dac * (w.ttc * s.ttc + w.com * s.com) / (w.ttc + w.com);
}

double route_completion(const std::vector<Vec2>& path, const sim::Polyline& route) {
  const double total = route.length();
  if (total <= 0 || path.empty()) return 0.0;
  double best = 0.0;
  for (const auto& p : path) best = std::max(best, route.project(p).arc);
  return std::clamp(best / total, 0.0, 1.0);
}

double hd_score(const ScoreTrace& trace) {
  if (trace.steps.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : trace.steps) sum += hd_score_step(s, trace.weights);
  return trace.route_completion * sum / static_cast<double>(trace.steps.size());
}

nlohmann::json score_report(const ScoreTrace& trace) {
  nlohmann::json per_step = nlohmann::json::array();
  SubScores mean{0, 0, 0, 0};
  for (const auto& s : trace.steps) {
    auto j = s.to_json();
    j["hd"] = hd_score_step(s, trace.weights);
    per_step.push_back(j);
    mean.nc += s.nc, mean.dac += s.dac, mean.ttc += s.ttc, mean.com += s.com;
  }
  const double n = std::max<std::size_t>(trace.steps.size(), 1);
  mean = {mean.nc / n, mean.dac / n, mean.ttc / n, mean.com / n};
  return {{"per_step", per_step},
          {"R_c", trace.route_completion},
          {"hd_score", hd_score(trace)},
          {"sub_score_means", mean.to_json()},
          {"steps", trace.steps.size()},
          {"weights", {{"TTC", trace.weights.ttc}, {"COM", trace.weights.com}}}};
}

}  // namespace hugsim::metrics
