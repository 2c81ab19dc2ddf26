#include "hugsim/scene/gaussian.hpp"

#include <cmath>
#include <sstream>

namespace hugsim::scene {

int Gaussian::sh_degree() const {
  const int coeffs = static_cast<int>(sh.size() / 3);
  for (int d = 0; d <= 3; ++d) {
    if (sh_coeff_count(d) == coeffs) return d;
  }
  return -1;
}

void Gaussian::set_base_color(const Vec3& rgb, int degree) {
  sh.assign(static_cast<std::size_t>(3 * sh_coeff_count(degree)), 0.0);
  for (int c = 0; c < 3; ++c) sh[c] = (rgb[c] - 0.5) / kShC0;
}

Mat3 covariance_3d(const Gaussian& g) {
  const Mat3 r = g.rotation();
  const Mat3 m = r * g.scale.asDiagonal();
  return m * m.transpose();
}

std::string validate(const Gaussian& g, std::size_t semantic_classes) {
  std::ostringstream why;
  if (!g.mu.allFinite()) why << "non-finite position; ";
  if (!g.quat.allFinite() || std::abs(g.quat.norm() - 1.0) > 1e-6) {
    why << "quaternion norm " << g.quat.norm() << " is not 1; ";
  }
  if (!g.scale.allFinite() || (g.scale.array() <= 0.0).any()) why << "non-positive scale; ";
  if (!std::isfinite(g.opacity) || g.opacity < 0.0 || g.opacity > 1.0) {
    why << "opacity " << g.opacity << " outside [0,1]; ";
  }
  if (g.sh_degree() < 0) why << "sh coefficient count " << g.sh.size() << " is not 3*(D+1)^2; ";
  if (g.sem_logits.size() != semantic_classes) {
    why << "semantic logits size " << g.sem_logits.size() << " != " << semantic_classes << "; ";
  }
  for (double v : g.sh) {
    if (!std::isfinite(v)) { why << "non-finite sh; "; break; }
  }
  for (double v : g.sem_logits) {
    if (!std::isfinite(v)) { why << "non-finite semantic logit; "; break; }
  }
  return why.str();
}

namespace {
double to_storage(double v) { return static_cast<double>(static_cast<float>(v)); }
}  // namespace

void quantize_to_storage(Gaussian& g) {
  g.quat /= g.quat.norm();
  for (int i = 0; i < 3; ++i) {
    g.mu[i] = to_storage(g.mu[i]);
    g.scale[i] = to_storage(g.scale[i]);
  }
  for (int i = 0; i < 4; ++i) g.quat[i] = to_storage(g.quat[i]);
  g.opacity = to_storage(g.opacity);
  for (double& v : g.sh) v = to_storage(v);
  for (double& v : g.sem_logits) v = to_storage(v);
}

void quantize_to_storage(GaussianSet& set) {
  for (Gaussian& g : set) quantize_to_storage(g);
}

int semantic_argmax(const Gaussian& g) {
  int best = 0;
  for (std::size_t i = 1; i < g.sem_logits.size(); ++i) {
    if (g.sem_logits[i] > g.sem_logits[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace hugsim::scene
