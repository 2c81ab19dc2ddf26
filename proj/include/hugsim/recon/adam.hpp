#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace hugsim::recon {

/// First and second moment buffers for one parameter group. Elements are
/// addressed by flat index so groups can be resized when Gaussians are
/// cloned or pruned.
struct AdamGroup {
  std::vector<double> m;
  std::vector<double> v;
  long step_count = 0;

  void resize(std::size_t n) {
    m.resize(n, 0.0);
    v.resize(n, 0.0);
  }

  /// Rebuilds the buffers for a reordered element set: row r takes the
  /// moments of old row sources[r] (`stride` values each), or zeros when the
  /// source is -1.
  void remap(const std::vector<int>& sources, std::size_t stride) {
    std::vector<double> nm(sources.size() * stride, 0.0), nv(sources.size() * stride, 0.0);
    for (std::size_t r = 0; r < sources.size(); ++r) {
      if (sources[r] < 0) continue;
      for (std::size_t j = 0; j < stride; ++j) {
        nm[r * stride + j] = m[static_cast<std::size_t>(sources[r]) * stride + j];
        nv[r * stride + j] = v[static_cast<std::size_t>(sources[r]) * stride + j];
      }
    }
    m = std::move(nm);
    v = std::move(nv);
  }
};

/// Adam with bias correction. One call to `begin_step` per iteration and
/// group, then `update` for each element.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;

  struct Step {
    double c1, c2;
  };

  Step begin_step(AdamGroup& g) const {
    ++g.step_count;
    return {1.0 - std::pow(beta1, static_cast<double>(g.step_count)),
            1.0 - std::pow(beta2, static_cast<double>(g.step_count))};
  }

  double update(AdamGroup& g, const Step& s, std::size_t i, double param, double grad, double lr) const {
    g.m[i] = beta1 * g.m[i] + (1 - beta1) * grad;
    g.v[i] = beta2 * g.v[i] + (1 - beta2) * grad * grad;
    const double mh = g.m[i] / s.c1;
    const double vh = g.v[i] / s.c2;
    return param - lr * mh / (std::sqrt(vh) + eps);
  }
};

/// Exponential interpolation from `start` to `end` over [0, 1].
inline double log_lerp(double start, double end, double t) {
  if (start <= 0 || end <= 0) return start + (end - start) * t;
  return std::exp(std::log(start) * (1 - t) + std::log(end) * t);
}

}  // namespace hugsim::recon
