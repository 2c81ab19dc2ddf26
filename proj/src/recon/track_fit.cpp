#include "hugsim/recon/track_fit.hpp"

#include <cmath>

#include "hugsim/core/error.hpp"
#include "hugsim/core/math.hpp"
#include "hugsim/recon/adam.hpp"

namespace hugsim::recon {

void TrackFitConfig::validate() const {
  require(iterations > 0, ErrorCode::kConfig, "track fit: iterations must be positive");
  require(lr_start > 0 && lr_end > 0, ErrorCode::kConfig, "track fit: learning rates must be positive");
}

nlohmann::json TrackFitConfig::to_json() const {
  return {{"iterations", iterations}, {"lr_start", lr_start}, {"lr_end", lr_end}};
}

TrackFitConfig TrackFitConfig::from_json(const nlohmann::json& j) {
  TrackFitConfig c;
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.lr_start = j.value("lr_start", c.lr_start);
    c.lr_end = j.value("lr_end", c.lr_end);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("track fit config: ") + e.what());
  }
  c.validate();
  return c;
}

std::pair<double, double> unicycle_rates_between(const UnicycleState& a, const UnicycleState& b,
                                                 double dt) {
  const double w = b.theta - a.theta;
  const double dx = b.x - a.x, dz = b.z - a.z;
  double v;
  if (std::abs(w) < 1e-6) {
    v = dx * std::cos(a.theta) + dz * std::sin(a.theta);
  } else {
    // The chord of an arc points along the mid heading; its length is
    // 2 (v / w) sin(w / 2).
    const double mid = a.theta + 0.5 * w;
    const double chord = dx * std::cos(mid) + dz * std::sin(mid);
    v = chord * 0.5 * w / std::sin(0.5 * w);
  }
  return {v / dt, w / dt};
}

UnicycleTrajectory trajectory_from_boxes(const std::vector<double>& times,
                                         std::vector<UnicycleState> boxes) {
  require(times.size() == boxes.size(), ErrorCode::kShapeMismatch,
          "trajectory_from_boxes: times and boxes differ in length");
  for (std::size_t k = 1; k < boxes.size(); ++k) {
    boxes[k].theta = boxes[k - 1].theta + wrap_angle(boxes[k].theta - boxes[k - 1].theta);
  }
  UnicycleTrajectory t;
  t.times = times;
  t.states = std::move(boxes);
  for (std::size_t k = 0; k + 1 < t.states.size(); ++k) {
    const auto [v, w] = unicycle_rates_between(t.states[k], t.states[k + 1], times[k + 1] - times[k]);
    t.v.push_back(v);
    t.omega.push_back(w);
  }
  t.validate();
  return t;
}

UnicycleTrajectory fit_unicycle(const std::vector<double>& times,
                                const std::vector<UnicycleState>& noisy_boxes,
                                const LossWeights& weights, const TrackFitConfig& config) {
  weights.validate();
  config.validate();
  require(noisy_boxes.size() >= 3, ErrorCode::kInvalidArgument,
          "fit_unicycle: needs at least 3 knots, got " + std::to_string(noisy_boxes.size()));
  UnicycleTrajectory traj = trajectory_from_boxes(times, noisy_boxes);
  const std::vector<UnicycleState> boxes = traj.states;  // unwrapped targets
  const std::size_t n = traj.states.size();

  Adam adam;
  AdamGroup gs, gv;
  gs.resize(3 * n);
  gv.resize(2 * (n - 1));
  for (int it = 0; it < config.iterations; ++it) {
    TrajectoryGrad gt(traj), gu(traj), gr(traj);
    const double lt = loss_track(traj, boxes, &gt);
    const double lu = loss_unicycle(traj, &gu);
    const double lr = loss_smooth(traj, &gr);
    const double loss = weights.track * lt + weights.unicycle * lu + weights.reg * lr;
    if (!std::isfinite(loss)) {
      fail(ErrorCode::kNonFinite, "fit_unicycle: non-finite loss at iteration " + std::to_string(it) +
                                      " (track " + std::to_string(lt) + ", unicycle " +
                                      std::to_string(lu) + ", smooth " + std::to_string(lr) + ")");
    }
    const double rate = log_lerp(config.lr_start, config.lr_end,
                                 static_cast<double>(it) / std::max(1, config.iterations - 1));
    const auto ss = adam.begin_step(gs);
    for (std::size_t k = 0; k < n; ++k) {
      auto& s = traj.states[k];
      const double gx = weights.track * gt.states[k].x + weights.unicycle * gu.states[k].x + weights.reg * gr.states[k].x;
      const double gz = weights.track * gt.states[k].z + weights.unicycle * gu.states[k].z + weights.reg * gr.states[k].z;
      const double gth = weights.track * gt.states[k].theta + weights.unicycle * gu.states[k].theta +
                         weights.reg * gr.states[k].theta;
      s.x = adam.update(gs, ss, 3 * k, s.x, gx, rate);
      s.z = adam.update(gs, ss, 3 * k + 1, s.z, gz, rate);
      s.theta = adam.update(gs, ss, 3 * k + 2, s.theta, gth, rate);
    }
    const auto sv = adam.begin_step(gv);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double g_v = weights.unicycle * gu.v[k] + weights.reg * gr.v[k];
      const double g_w = weights.unicycle * gu.omega[k] + weights.reg * gr.omega[k];
      traj.v[k] = adam.update(gv, sv, 2 * k, traj.v[k], g_v, rate);
      traj.omega[k] = adam.update(gv, sv, 2 * k + 1, traj.omega[k], g_w, rate);
    }
  }
  return traj;
}

std::vector<UnicycleState> jitter_boxes(const std::vector<UnicycleState>& states, double fraction,
                                        std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double st = fraction * 5.0;
  const double sr = fraction * 50.0 * kPi / 180.0;
  std::vector<UnicycleState> out = states;
  for (auto& s : out) {
    s.x += st * n(rng);
    s.z += st * n(rng);
    s.theta += sr * n(rng);
  }
  return out;
}

TrackError track_error(const std::vector<UnicycleState>& estimate,
                       const std::vector<UnicycleState>& truth) {
  require(estimate.size() == truth.size() && !truth.empty(), ErrorCode::kShapeMismatch,
          "track_error: sequences differ in length");
  TrackError e;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    e.translation += std::hypot(estimate[k].x - truth[k].x, estimate[k].z - truth[k].z);
    e.rotation += std::abs(wrap_angle(estimate[k].theta - truth[k].theta));
  }
  e.translation /= static_cast<double>(truth.size());
  e.rotation /= static_cast<double>(truth.size());
  return e;
}

}  // namespace hugsim::recon
