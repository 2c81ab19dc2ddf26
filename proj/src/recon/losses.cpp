#include "hugsim/recon/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "hugsim/core/error.hpp"

namespace hugsim::recon {

void LossWeights::validate() const {
  const std::array<std::pair<const char*, double>, 7> all{{{"ssim", ssim},
                                                          {"semantic", semantic},
                                                          {"alpha", alpha},
                                                          {"ground", ground},
                                                          {"track", track},
                                                          {"unicycle", unicycle},
                                                          {"reg", reg}}};
  for (const auto& [name, w] : all) {
    require(std::isfinite(w) && w >= 0.0, ErrorCode::kConfig,
            std::string("loss weight '") + name + "' must be finite and nonnegative");
  }
  require(ssim <= 1.0, ErrorCode::kConfig, "loss weight 'ssim' must lie in [0, 1]");
}

nlohmann::json LossWeights::to_json() const {
  return {{"ssim", ssim},   {"semantic", semantic}, {"alpha", alpha}, {"ground", ground},
          {"track", track}, {"unicycle", unicycle}, {"reg", reg}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  if (!j.is_object()) fail(ErrorCode::kConfig, "loss weights must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) fail(ErrorCode::kConfig, "loss weight '" + key + "' must be a number");
    const double v = value.get<double>();
    if (key == "ssim") w.ssim = v;
    else if (key == "semantic") w.semantic = v;
    else if (key == "alpha") w.alpha = v;
    else if (key == "ground") w.ground = v;
    else if (key == "track") w.track = v;
    else if (key == "unicycle") w.unicycle = v;
    else if (key == "reg") w.reg = v;
    else fail(ErrorCode::kConfig, "unknown loss weight '" + key + "'");
  }
  w.validate();
  return w;
}

namespace {

constexpr int kWindowRadius = 5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, 2 * kWindowRadius + 1>& ssim_kernel() {
  static const auto k = [] {
    std::array<double, 2 * kWindowRadius + 1> w{};
    double sum = 0;
    for (int i = -kWindowRadius; i <= kWindowRadius; ++i) {
      w[static_cast<std::size_t>(i + kWindowRadius)] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
      sum += w[static_cast<std::size_t>(i + kWindowRadius)];
    }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return k;
}

using Plane = std::vector<double>;

// Zero-padded separable Gaussian filter of one W x H plane. The kernel is
// symmetric, so this operator is its own adjoint.
Plane blur(const Plane& in, int w, int h) {
  const auto& k = ssim_kernel();
  Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -kWindowRadius; i <= kWindowRadius; ++i) {
        const int xx = x + i;
        if (xx >= 0 && xx < w) s += k[static_cast<std::size_t>(i + kWindowRadius)] * in[static_cast<std::size_t>(y * w + xx)];
      }
      tmp[static_cast<std::size_t>(y * w + x)] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -kWindowRadius; i <= kWindowRadius; ++i) {
        const int yy = y + i;
        if (yy >= 0 && yy < h) s += k[static_cast<std::size_t>(i + kWindowRadius)] * tmp[static_cast<std::size_t>(yy * w + x)];
      }
      out[static_cast<std::size_t>(y * w + x)] = s;
    }
  }
  return out;
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  require(a.same_shape(b), ErrorCode::kShapeMismatch,
          std::string(what) + ": shape mismatch (" + std::to_string(a.width) + "x" +
              std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
              std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
              std::to_string(b.channels) + ")");
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Subgradient of |r| for trajectory residuals. Residuals at roundoff level
// count as zero so an exact rollout is a stationary point.
double kink_sign(double v) { return std::abs(v) <= 1e-12 ? 0.0 : sign(v); }

}  // namespace

double ssim(const Image& a, const Image& b, Image* grad_a) {
  require_same_shape(a, b, "ssim");
  const int w = a.width, h = a.height, C = a.channels;
  const std::size_t n = a.pixel_count();
  if (grad_a != nullptr) *grad_a = Image(w, h, C);
  if (n == 0 || C == 0) return 1.0;
  const double norm = 1.0 / static_cast<double>(n * static_cast<std::size_t>(C));
  double total = 0;
  for (int c = 0; c < C; ++c) {
    Plane pa(n), pb(n), aa(n), bb(n), ab(n);
    for (std::size_t p = 0; p < n; ++p) {
      pa[p] = a.data[p * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
      pb[p] = b.data[p * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
      aa[p] = pa[p] * pa[p];
      bb[p] = pb[p] * pb[p];
      ab[p] = pa[p] * pb[p];
    }
    const Plane m1 = blur(pa, w, h), m2 = blur(pb, w, h);
    const Plane s11 = blur(aa, w, h), s22 = blur(bb, w, h), s12 = blur(ab, w, h);
    Plane d_m1(n), d_s11(n), d_s12(n);
    for (std::size_t p = 0; p < n; ++p) {
      const double A1 = 2 * m1[p] * m2[p] + kC1;
      const double A2 = 2 * (s12[p] - m1[p] * m2[p]) + kC2;
      const double B1 = m1[p] * m1[p] + m2[p] * m2[p] + kC1;
      const double B2 = (s11[p] - m1[p] * m1[p]) + (s22[p] - m2[p] * m2[p]) + kC2;
      const double S = A1 * A2 / (B1 * B2);
      total += S;
      if (grad_a != nullptr) {
        d_m1[p] = norm * ((2 * m2[p] * A2 - 2 * m2[p] * A1) / (B1 * B2) - S * (2 * m1[p] / B1 - 2 * m1[p] / B2));
        d_s11[p] = norm * (-S / B2);
        d_s12[p] = norm * (2 * A1 / (B1 * B2));
      }
    }
    if (grad_a != nullptr) {
      const Plane g1 = blur(d_m1, w, h), g11 = blur(d_s11, w, h), g12 = blur(d_s12, w, h);
      for (std::size_t p = 0; p < n; ++p) {
        grad_a->data[p * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)] =
            g1[p] + 2 * pa[p] * g11[p] + pb[p] * g12[p];
      }
    }
  }
  return total * norm;
}

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  if (se == 0.0 || a.data.empty()) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.data.size()) / se);
}

double loss_image(const Image& rendered, const Image& target, double lambda_ssim, Image* grad) {
  require_same_shape(rendered, target, "loss_image");
  const std::size_t n = rendered.data.size();
  if (grad != nullptr) *grad = Image(rendered.width, rendered.height, rendered.channels);
  if (n == 0) return 0.0;
  double l1 = 0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rendered.data[i] - target.data[i];
    l1 += std::abs(d);
    if (grad != nullptr) grad->data[i] = (1 - lambda_ssim) * inv * sign(d);
  }
  double loss = (1 - lambda_ssim) * l1 * inv;
  if (lambda_ssim > 0) {
    Image gs;
    loss += lambda_ssim * (1 - ssim(rendered, target, grad != nullptr ? &gs : nullptr));
    if (grad != nullptr) {
      for (std::size_t i = 0; i < n; ++i) grad->data[i] -= lambda_ssim * gs.data[i];
    }
  }
  return loss;
}

double loss_semantic(const Image& probs, const std::vector<int>& labels, Image* grad, int ignore_label) {
  require(labels.size() == probs.pixel_count(), ErrorCode::kShapeMismatch,
          "loss_semantic: label map has " + std::to_string(labels.size()) + " pixels, expected " +
              std::to_string(probs.pixel_count()));
  if (grad != nullptr) *grad = Image(probs.width, probs.height, probs.channels);
  const auto S = static_cast<std::size_t>(probs.channels);
  double sum = 0;
  std::size_t counted = 0;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (labels[p] == ignore_label) continue;
    require(labels[p] >= 0 && static_cast<std::size_t>(labels[p]) < S, ErrorCode::kInvalidArgument,
            "loss_semantic: label " + std::to_string(labels[p]) + " at pixel " + std::to_string(p) +
                " is outside [0, " + std::to_string(S) + ")");
    ++counted;
  }
  if (counted == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(counted);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (labels[p] == ignore_label) continue;
    const std::size_t idx = p * S + static_cast<std::size_t>(labels[p]);
    const double pr = probs.data[idx];
    if (pr > 1e-8) {
      sum -= std::log(pr);
      if (grad != nullptr) grad->data[idx] = -inv / pr;
    } else {
      sum -= std::log(1e-8);
    }
  }
  return sum * inv;
}

double loss_alpha(const Image& alpha, const Image& mask, Image* grad) {
  require_same_shape(alpha, mask, "loss_alpha");
  if (grad != nullptr) *grad = Image(alpha.width, alpha.height, alpha.channels);
  const std::size_t n = alpha.data.size();
  if (n == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = alpha.data[i] - mask.data[i];
    sum += d * d;
    if (grad != nullptr) grad->data[i] = 2 * d * inv;
  }
  return sum * inv;
}

std::vector<GroundPatch> sample_ground_patches(const scene::GroundPlaneSet& planes,
                                               const scene::GaussianSet& ground, int per_window,
                                               int patch_size, std::mt19937_64& rng) {
  std::vector<GroundPatch> out;
  std::vector<std::pair<double, int>> dist;
  for (std::size_t w = 0; w < planes.windows.size(); ++w) {
    const auto& members = planes.windows[w].members;
    if (members.size() < 2) continue;
    if (patch_size <= 0 || static_cast<std::size_t>(patch_size) >= members.size()) {
      out.push_back({static_cast<int>(w), members});
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (int p = 0; p < per_window; ++p) {
      const Vec3 center = ground[static_cast<std::size_t>(members[pick(rng)])].mu;
      dist.clear();
      for (int m : members) dist.emplace_back((ground[static_cast<std::size_t>(m)].mu - center).squaredNorm(), m);
      std::partial_sort(dist.begin(), dist.begin() + patch_size, dist.end());
      GroundPatch patch{static_cast<int>(w), {}};
      for (int i = 0; i < patch_size; ++i) patch.members.push_back(dist[static_cast<std::size_t>(i)].second);
      out.push_back(std::move(patch));
    }
  }
  return out;
}

std::vector<GroundPatch> whole_window_patches(const scene::GroundPlaneSet& planes) {
  std::vector<GroundPatch> out;
  for (std::size_t w = 0; w < planes.windows.size(); ++w) {
    out.push_back({static_cast<int>(w), planes.windows[w].members});
  }
  return out;
}

double loss_ground(const scene::GaussianSet& ground, const scene::GroundPlaneSet& planes,
                   const std::vector<GroundPatch>& patches, std::vector<Vec3>* grad_mu) {
  if (grad_mu != nullptr) {
    require(grad_mu->size() == ground.size(), ErrorCode::kShapeMismatch,
            "loss_ground: gradient buffer does not match the ground set");
  }
  std::size_t used = 0;
  for (const auto& p : patches) used += p.members.size() >= 2;
  if (used == 0) return 0.0;
  const double inv_p = 1.0 / static_cast<double>(used);
  double total = 0;
  std::vector<double> h;
  for (const auto& patch : patches) {
    const std::size_t n = patch.members.size();
    if (n < 2) continue;
    const auto& win = planes.windows.at(static_cast<std::size_t>(patch.window));
    h.resize(n);
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = win.camera_height_of(ground.at(static_cast<std::size_t>(patch.members[i])).mu);
      mean += h[i];
    }
    mean /= static_cast<double>(n);
    double var = 0;
    for (double v : h) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    total += var;
    if (grad_mu != nullptr) {
      const Vec3 up = win.rotation.row(1).transpose();
      for (std::size_t i = 0; i < n; ++i) {
        (*grad_mu)[static_cast<std::size_t>(patch.members[i])] +=
            inv_p * 2.0 * (h[i] - mean) / static_cast<double>(n - 1) * up;
      }
    }
  }
  return total * inv_p;
}

double loss_track(const UnicycleTrajectory& traj, const std::vector<UnicycleState>& boxes,
                  TrajectoryGrad* grad) {
  require(boxes.size() == traj.states.size(), ErrorCode::kShapeMismatch,
          "loss_track: " + std::to_string(boxes.size()) + " boxes for " +
              std::to_string(traj.states.size()) + " knots");
  double sum = 0;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const double dx = traj.states[k].x - boxes[k].x;
    const double dz = traj.states[k].z - boxes[k].z;
    sum += std::abs(dx) + std::abs(dz);
    if (grad != nullptr) {
      grad->states[k].x += kink_sign(dx);
      grad->states[k].z += kink_sign(dz);
    }
  }
  return sum;
}

UnicycleStepJacobian unicycle_step_jacobian(const UnicycleState& s, double v, double omega) {
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  if (std::abs(omega) < 1e-6) {
    return {-v * sn, c, -0.5 * v * sn, v * c, sn, 0.5 * v * c};
  }
  const double t1 = s.theta + omega;
  const double c1 = std::cos(t1), s1 = std::sin(t1);
  const double r = v / omega;
  return {r * (c1 - c),
          (s1 - sn) / omega,
          -v / (omega * omega) * (s1 - sn) + r * c1,
          r * (s1 - sn),
          -(c1 - c) / omega,
          v / (omega * omega) * (c1 - c) + r * s1};
}

double loss_unicycle(const UnicycleTrajectory& traj, TrajectoryGrad* grad) {
  double sum = 0;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const double dt = traj.interval(k);
    const auto& s = traj.states[k];
    const auto& n = traj.states[k + 1];
    const double v = traj.v[k] * dt, w = traj.omega[k] * dt;
    const UnicycleState pred = unicycle_step(s, v, w);
    const double rx = n.x - pred.x, rz = n.z - pred.z, rt = n.theta - s.theta - w;
    sum += std::abs(rx) + std::abs(rz) + std::abs(rt);
    if (grad == nullptr) continue;
    const auto J = unicycle_step_jacobian(s, v, w);
    const double gx = kink_sign(rx), gz = kink_sign(rz), gt = kink_sign(rt);
    grad->states[k + 1].x += gx;
    grad->states[k + 1].z += gz;
    grad->states[k + 1].theta += gt;
    grad->states[k].x -= gx;
    grad->states[k].z -= gz;
    grad->states[k].theta -= gx * J.dx_dtheta + gz * J.dz_dtheta + gt;
    grad->v[k] -= (gx * J.dx_dv + gz * J.dz_dv) * dt;
    grad->omega[k] -= (gx * J.dx_domega + gz * J.dz_domega + gt) * dt;
  }
  return sum;
}

double loss_smooth(const UnicycleTrajectory& traj, TrajectoryGrad* grad) {
  double sum = 0;
  for (std::size_t k = 1; k + 1 < traj.v.size(); ++k) {
    const double d = traj.v[k + 1] + traj.v[k - 1] - 2 * traj.v[k];
    sum += std::abs(d);
    if (grad != nullptr) {
      grad->v[k + 1] += kink_sign(d);
      grad->v[k - 1] += kink_sign(d);
      grad->v[k] -= 2 * kink_sign(d);
    }
  }
  for (std::size_t k = 1; k + 1 < traj.states.size(); ++k) {
    const double d = traj.states[k + 1].theta + traj.states[k - 1].theta - 2 * traj.states[k].theta;
    sum += std::abs(d);
    if (grad != nullptr) {
      grad->states[k + 1].theta += kink_sign(d);
      grad->states[k - 1].theta += kink_sign(d);
      grad->states[k].theta -= 2 * kink_sign(d);
    }
  }
  return sum;
}

}  // namespace hugsim::recon
