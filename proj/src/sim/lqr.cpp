#include "hugsim/sim/lqr.hpp"

#include <Eigen/Dense>

#include "hugsim/core/error.hpp"

namespace hugsim::sim {

void LqrConfig::validate() const {
  for (double w : q) require(w >= 0 && std::isfinite(w), ErrorCode::kConfig, "lqr.q: weights must be >= 0");
  for (double w : r) require(w > 0 && std::isfinite(w), ErrorCode::kConfig, "lqr.r: weights must be > 0");
  require(horizon >= 1, ErrorCode::kConfig, "lqr.horizon: must be at least 1");
}

nlohmann::json LqrConfig::to_json() const {
  return {{"q", q}, {"r", r}, {"horizon", horizon}};
}

LqrConfig LqrConfig::from_json(const nlohmann::json& j) {
  LqrConfig c;
  if (j.contains("q")) c.q = j.at("q").get<std::array<double, 4>>();
  if (j.contains("r")) c.r = j.at("r").get<std::array<double, 2>>();
  c.horizon = j.value("horizon", c.horizon);
  return c;
}

namespace {

using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Mat24 = Eigen::Matrix<double, 2, 4>;

struct TimedPoint {
  double t;
  Vec2 p;
};

Vec2 interpolate(const std::vector<TimedPoint>& pts, double t) {
  std::size_t i = 0;
  while (i + 2 < pts.size() && t > pts[i + 1].t) ++i;
  const double u = (t - pts[i].t) / (pts[i + 1].t - pts[i].t);
  return pts[i].p + u * (pts[i + 1].p - pts[i].p);
}

}  // namespace

std::vector<Control> lqr_control(const std::vector<Waypoint>& waypoints, const EgoState& ego,
                                 double dt, const KinematicParams& params,
                                 const LqrConfig& config) {
  require(dt > 0, ErrorCode::kInvalidArgument, "lqr_control: dt must be positive");
  require(waypoints.size() >= 2, ErrorCode::kInvalidArgument,
          "lqr_control: need at least two waypoints, got " + std::to_string(waypoints.size()));
  bool ahead = false;
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    const auto& w = waypoints[i];
    require(std::isfinite(w.x) && std::isfinite(w.y) && std::isfinite(w.t),
            ErrorCode::kInvalidArgument, "lqr_control: waypoint " + std::to_string(i) + " is not finite");
    require(w.t >= 0 && (i == 0 || w.t > waypoints[i - 1].t), ErrorCode::kInvalidArgument,
            "lqr_control: waypoint times must be non-negative and increasing");
    ahead = ahead || w.x > 0;
  }
  require(ahead, ErrorCode::kStalePlan, "lqr_control: stale plan, every waypoint is behind the ego");

  std::vector<TimedPoint> pts;
  for (const auto& w : waypoints) pts.push_back({w.t, ego_to_world(ego, {w.x, w.y})});
  if (pts[0].t > 0) {
    const Vec2 vel = (pts[1].p - pts[0].p) / (pts[1].t - pts[0].t);
    pts.insert(pts.begin(), {0.0, pts[0].p - vel * pts[0].t});
  }

  const int n = std::max(1, std::min(config.horizon, static_cast<int>(std::floor(pts.back().t / dt + 1e-9))));
  std::vector<Vec2> ref(n + 2);
  for (int k = 0; k <= n + 1; ++k) ref[k] = interpolate(pts, k * dt);

  // Reference heading and speed from chords, so the reference is an exact
  // rollout of the discrete model with the feed-forward controls below.
  std::vector<double> th(n + 1), vr(n + 1);
  for (int k = 0; k <= n; ++k) {
    const Vec2 d = ref[k + 1] - ref[k];
    vr[k] = d.norm() / dt;
    th[k] = vr[k] > 1e-9 ? std::atan2(d.y(), d.x()) : (k > 0 ? th[k - 1] : ego.theta);
  }
  th[0] = ego.theta + wrap_angle(th[0] - ego.theta);
  for (int k = 1; k <= n; ++k) th[k] = th[k - 1] + wrap_angle(th[k] - th[k - 1]);

  const double L = params.wheelbase;
  std::vector<Control> uref(n);
  std::vector<Mat4> A(n);
  std::vector<Mat42> B(n);
  for (int k = 0; k < n; ++k) {
    const double steer = vr[k] > 1e-3 ? std::atan(L * (th[k + 1] - th[k]) / (vr[k] * dt)) : 0.0;
    uref[k] = {steer, (vr[k + 1] - vr[k]) / dt};
    const double c = std::cos(th[k]), s = std::sin(th[k]);
    A[k] = Mat4::Identity();
    A[k](0, 2) = -dt * vr[k] * s;
    A[k](0, 3) = dt * c;
    A[k](1, 2) = dt * vr[k] * c;
    A[k](1, 3) = dt * s;
    A[k](2, 3) = dt * std::tan(steer) / L;
    B[k] = Mat42::Zero();
    const double cs = std::cos(steer);
    B[k](2, 0) = dt * vr[k] / (L * cs * cs);
    B[k](3, 1) = dt;
  }

  const Mat4 Q = Eigen::Vector4d(config.q[0], config.q[1], config.q[2], config.q[3]).asDiagonal();
  const Eigen::Matrix2d R = Eigen::Vector2d(config.r[0], config.r[1]).asDiagonal();
  std::vector<Mat24> K(n);
  Mat4 P = Q;
  for (int k = n - 1; k >= 0; --k) {
    const Eigen::Matrix2d S = R + B[k].transpose() * P * B[k];
    K[k] = S.ldlt().solve(B[k].transpose() * P * A[k]);
    P = Q + A[k].transpose() * P * (A[k] - B[k] * K[k]);
    P = 0.5 * (P + P.transpose()).eval();
  }

  std::vector<Control> out(n);
  EgoState s = ego;
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector4d e(s.x - ref[k].x(), s.z - ref[k].y(), wrap_angle(s.theta - th[k]), s.v - vr[k]);
    const Eigen::Vector2d du = -K[k] * e;
    out[k] = clamp_control({uref[k].steer + du[0], uref[k].accel + du[1]}, params);
    s = bicycle_step(s, out[k].steer, out[k].accel, dt, params);
  }
  return out;
}

}  // namespace hugsim::sim
