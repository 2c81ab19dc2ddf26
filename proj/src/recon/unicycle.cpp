#include "hugsim/recon/unicycle.hpp"

#include <algorithm>
#include <cmath>

#include "hugsim/core/error.hpp"

namespace hugsim::recon {

void UnicycleTrajectory::validate() const {
  const std::size_t n = states.size();
  require(n >= 1, ErrorCode::kInvariantViolation, "trajectory has no knots");
  require(times.size() == n, ErrorCode::kInvariantViolation,
          "trajectory: times/states size mismatch");
  require(v.size() + 1 == n && omega.size() + 1 == n, ErrorCode::kInvariantViolation,
          "trajectory: needs one (v, omega) pair per interval");
  for (std::size_t k = 0; k + 1 < n; ++k) {
    require(times[k + 1] > times[k], ErrorCode::kInvariantViolation,
            "trajectory: knot times must be strictly increasing (knot " +
                std::to_string(k + 1) + ")");
  }
}

nlohmann::json UnicycleTrajectory::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& st : states) s.push_back({st.x, st.z, st.theta});
  return {{"times", times}, {"states", s}, {"v", v}, {"omega", omega}};
}

UnicycleTrajectory UnicycleTrajectory::from_json(const nlohmann::json& j) {
  UnicycleTrajectory t;
  try {
    t.times = j.at("times").get<std::vector<double>>();
    for (const auto& s : j.at("states")) {
      t.states.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
    }
    t.v = j.at("v").get<std::vector<double>>();
    t.omega = j.at("omega").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("trajectory: ") + e.what());
  }
  t.validate();
  return t;
}

UnicycleState unicycle_step(const UnicycleState& s, double v, double omega) {
  UnicycleState out;
  out.theta = s.theta + omega;
  if (std::abs(omega) < 1e-6) {
    out.x = s.x + v * std::cos(s.theta);
    out.z = s.z + v * std::sin(s.theta);
  } else {
    const double r = v / omega;
    out.x = s.x + r * (std::sin(out.theta) - std::sin(s.theta));
    out.z = s.z - r * (std::cos(out.theta) - std::cos(s.theta));
  }
  return out;
}

InterpolatedState unicycle_interpolate(const UnicycleTrajectory& traj, double t) {
  const auto& times = traj.times;
  if (t <= times.front()) return {traj.states.front(), t < times.front()};
  if (t >= times.back()) return {traj.states.back(), t > times.back()};
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
  if (t == times[k]) return {traj.states[k], false};
  const double elapsed = t - times[k];
  return {unicycle_step(traj.states[k], traj.v[k] * elapsed, traj.omega[k] * elapsed), false};
}

UnicycleTrajectory unicycle_rollout(const UnicycleState& start, const std::vector<double>& times,
                                    const std::vector<double>& v,
                                    const std::vector<double>& omega) {
  UnicycleTrajectory traj;
  traj.times = times;
  traj.v = v;
  traj.omega = omega;
  traj.states.push_back(start);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double dt = times[k + 1] - times[k];
    traj.states.push_back(unicycle_step(traj.states.back(), v[k] * dt, omega[k] * dt));
  }
  traj.validate();
  return traj;
}

}  // namespace hugsim::recon
