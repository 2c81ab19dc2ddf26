#include "hugsim/render/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hugsim/core/error.hpp"
#include "hugsim/core/parallel.hpp"
#include "hugsim/render/sh.hpp"

namespace hugsim::render {

using scene::Camera;
using scene::Gaussian;
using scene::GaussianSet;

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

// Everything the backward pass needs to re-derive the projection of one Gaussian.
struct ProjectionTerms {
  Vec3 p_cam;
  Mat23 J;
  Mat23 T;  // J * W
  Mat3 sigma3;
  Mat2 cov2d;
  bool clamp_x = false;
  bool clamp_y = false;
  double rx = 0, ry = 0;  // clamped x/z, y/z
};

bool project_terms(const Gaussian& g, const Camera& cam, const RenderOptions& opt,
                   ProjectionTerms& pt, Splat2D& out, int& x0, int& x1, int& y0, int& y1) {
  pt.p_cam = cam.to_camera(g.mu);
  const double z = pt.p_cam.z();
  if (!(z > opt.near_plane)) return false;
  const auto& k = cam.intrinsics;
  const double limx = 1.3 * std::max(k.cx, cam.width - k.cx) / k.fx;
  const double limy = 1.3 * std::max(k.cy, cam.height - k.cy) / k.fy;
  const double ux = pt.p_cam.x() / z, uy = pt.p_cam.y() / z;
  pt.rx = std::clamp(ux, -limx, limx);
  pt.ry = std::clamp(uy, -limy, limy);
  pt.clamp_x = pt.rx != ux;
  pt.clamp_y = pt.ry != uy;
  pt.J << k.fx / z, 0, -k.fx * pt.rx / z, 0, k.fy / z, -k.fy * pt.ry / z;
  pt.T = pt.J * cam.rotation;
  pt.sigma3 = scene::covariance_3d(g);
  pt.cov2d = pt.T * pt.sigma3 * pt.T.transpose();
  pt.cov2d(0, 0) += opt.low_pass;
  pt.cov2d(1, 1) += opt.low_pass;
  pt.cov2d(0, 1) = pt.cov2d(1, 0) = 0.5 * (pt.cov2d(0, 1) + pt.cov2d(1, 0));

  out.mu2d = Vec2(k.fx * ux + k.cx, k.fy * uy + k.cy);
  out.cov2d = pt.cov2d;
  out.depth = z;
  if (!out.mu2d.allFinite() || !out.cov2d.allFinite()) return false;

  // Exact bounding box of the support ellipse, padded against rounding.
  const double hw = std::sqrt(opt.max_mahalanobis2 * pt.cov2d(0, 0)) * (1 + 1e-9) + 1e-6;
  const double hh = std::sqrt(opt.max_mahalanobis2 * pt.cov2d(1, 1)) * (1 + 1e-9) + 1e-6;
  const double fx0 = std::ceil(out.mu2d.x() - hw), fx1 = std::floor(out.mu2d.x() + hw);
  const double fy0 = std::ceil(out.mu2d.y() - hh), fy1 = std::floor(out.mu2d.y() + hh);
  if (fx1 < 0 || fy1 < 0 || fx0 > cam.width - 1 || fy0 > cam.height - 1) return false;
  x0 = static_cast<int>(std::max(fx0, 0.0));
  y0 = static_cast<int>(std::max(fy0, 0.0));
  x1 = static_cast<int>(std::min(fx1, cam.width - 1.0));
  y1 = static_cast<int>(std::min(fy1, cam.height - 1.0));
  return x0 <= x1 && y0 <= y1;
}

int infer_classes(const GaussianSet& gs, const RenderOptions& opt) {
  if (opt.semantic_classes > 0) return opt.semantic_classes;
  return gs.empty() ? 0 : static_cast<int>(gs.front().sem_logits.size());
}

void check_inputs(const GaussianSet& gs, const Camera& cam, const RenderOptions& opt,
                  const FlowContext* flow, int classes) {
  require(cam.width > 0 && cam.height > 0, ErrorCode::kInvalidArgument, "camera has empty viewport");
  require(opt.tile_size > 0, ErrorCode::kConfig, "tile size must be positive");
  if (opt.modes.flow) {
    require(flow != nullptr, ErrorCode::kConfig, "flow mode requires a flow context");
    require(flow->mu_t2.size() == gs.size(), ErrorCode::kShapeMismatch,
            "flow context positions do not match the Gaussian count");
  }
  if (opt.modes.semantic) {
    for (std::size_t i = 0; i < gs.size(); ++i) {
      require(static_cast<int>(gs[i].sem_logits.size()) == classes, ErrorCode::kShapeMismatch,
              "Gaussian " + std::to_string(i) + " has a semantic logit count that differs from the render schema");
    }
  }
}

struct Prepared {
  std::vector<PreparedSplat> splats;
  std::vector<double> features;
  int classes = 0;
};

// Projects and shades every visible Gaussian, sorted front to back with the
// source index as tiebreak.
Prepared prepare(const GaussianSet& gs, const Camera& cam, const RenderOptions& opt,
                 const FlowContext* flow) {
  Prepared out;
  out.classes = infer_classes(gs, opt);
  check_inputs(gs, cam, opt, flow, out.classes);

  std::vector<std::optional<PreparedSplat>> slots(gs.size());
  const Vec3 center = cam.center();
  parallel_for(
      gs.size(),
      [&](std::size_t i) {
        ProjectionTerms pt;
        Splat2D s;
        PreparedSplat p;
        if (!project_terms(gs[i], cam, opt, pt, s, p.x0, p.x1, p.y0, p.y1)) return;
        p.source = static_cast<int>(i);
        p.mean = s.mu2d;
        const Mat2 conic = s.cov2d.inverse();
        p.conic_a = conic(0, 0);
        p.conic_b = conic(0, 1);
        p.conic_c = conic(1, 1);
        p.opacity = gs[i].opacity;
        p.depth = s.depth;
        if (opt.modes.color) {
          const Gaussian& g = gs[i];
          Vec3 dir = g.mu - center;
          const double n = dir.norm();
          dir = n > 0 ? Vec3(dir / n) : Vec3(0, 0, 1);
          ShBasis b;
          sh_basis(g.sh_degree(), dir, b);
          Vec3 c(0.5, 0.5, 0.5);
          const int nc = scene::sh_coeff_count(g.sh_degree());
          for (int k = 0; k < nc; ++k) {
            for (int ch = 0; ch < 3; ++ch) c[ch] += b[k] * g.sh[k * 3 + ch];
          }
          for (int ch = 0; ch < 3; ++ch) {
            if (c[ch] < 0) {
              c[ch] = 0;
              p.color_clamped |= static_cast<std::uint8_t>(1u << ch);
            }
          }
          p.color = c;
        }
        if (opt.modes.flow) {
          const auto a = cam.project(gs[i].mu);
          const auto b = flow->camera_t2.project(flow->mu_t2[i]);
          if (a && b) p.flow = *b - *a;
        }
        slots[i] = p;
      },
      opt.threads);

  for (auto& s : slots) {
    if (s) out.splats.push_back(*s);
  }
  std::sort(out.splats.begin(), out.splats.end(), [](const PreparedSplat& a, const PreparedSplat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.source < b.source);
  });

  if (opt.modes.semantic && out.classes > 0) {
    const std::size_t S = static_cast<std::size_t>(out.classes);
    out.features.resize(out.splats.size() * S);
    for (std::size_t i = 0; i < out.splats.size(); ++i) {
      const auto& logits = gs[static_cast<std::size_t>(out.splats[i].source)].sem_logits;
      double* f = &out.features[i * S];
      if (opt.semantic_mode == SemanticMode::kSoftmax3D) {
        const double m = *std::max_element(logits.begin(), logits.end());
        double sum = 0;
        for (std::size_t c = 0; c < S; ++c) sum += (f[c] = std::exp(logits[c] - m));
        for (std::size_t c = 0; c < S; ++c) f[c] /= sum;
      } else {
        std::copy(logits.begin(), logits.end(), f);
      }
    }
  }
  return out;
}

RenderOutput allocate_output(int w, int h, const RenderModes& m, int classes) {
  RenderOutput out;
  if (m.color) out.color = Image(w, h, 3);
  if (m.semantic) out.semantic = Image(w, h, classes);
  if (m.depth) out.depth = Image(w, h, 1);
  if (m.flow) out.flow = Image(w, h, 2);
  if (m.alpha) out.alpha = Image(w, h, 1);
  out.contributors.assign(static_cast<std::size_t>(w) * h, 0);
  return out;
}

// alpha' of a splat at pixel center (px, py); false outside the support.
inline bool splat_alpha(const PreparedSplat& s, double px, double py, double max_m2, double& alpha) {
  const double dx = px - s.mean.x(), dy = py - s.mean.y();
  const double m2 = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
  if (!(m2 <= max_m2)) return false;
  alpha = s.opacity * std::exp(-0.5 * m2);
  return true;
}

// Running per-pixel accumulator shared by both render paths.
struct PixelBlend {
  const RenderOptions& opt;
  const Prepared& prep;
  double T = 1.0;
  double color[3] = {0, 0, 0};
  double depth = 0;
  double flow[2] = {0, 0};
  double* sem = nullptr;  // S scratch values
  int count = 0;

  void add(std::size_t i, double a) {
    const PreparedSplat& s = prep.splats[i];
    const double w = a * T;
    if (opt.modes.color) {
      color[0] += s.color[0] * w;
      color[1] += s.color[1] * w;
      color[2] += s.color[2] * w;
    }
    if (opt.modes.depth) depth += s.depth * w;
    if (opt.modes.flow) {
      flow[0] += s.flow[0] * w;
      flow[1] += s.flow[1] * w;
    }
    if (opt.modes.semantic) {
      const double* f = &prep.features[i * static_cast<std::size_t>(prep.classes)];
      for (int c = 0; c < prep.classes; ++c) sem[c] += f[c] * w;
    }
    T *= 1.0 - a;
    ++count;
  }

  void store(RenderOutput& out, int x, int y, int width) {
    if (opt.modes.color) {
      for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = color[c];
    }
    if (opt.modes.depth) out.depth.at(x, y) = depth;
    if (opt.modes.flow) {
      out.flow.at(x, y, 0) = flow[0];
      out.flow.at(x, y, 1) = flow[1];
    }
    if (opt.modes.alpha) out.alpha.at(x, y) = 1.0 - T;
    if (opt.modes.semantic && prep.classes > 0) {
      if (opt.semantic_mode == SemanticMode::kSoftmax2D) {
        const double m = *std::max_element(sem, sem + prep.classes);
        double sum = 0;
        for (int c = 0; c < prep.classes; ++c) sum += (sem[c] = std::exp(sem[c] - m));
        for (int c = 0; c < prep.classes; ++c) sem[c] /= sum;
      }
      for (int c = 0; c < prep.classes; ++c) out.semantic.at(x, y, c) = sem[c];
    }
    out.contributors[static_cast<std::size_t>(y) * width + x] = count;
  }
};

}  // namespace

std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam, const RenderOptions& options) {
  ProjectionTerms pt;
  Splat2D s;
  int x0, x1, y0, y1;
  if (!project_terms(g, cam, options, pt, s, x0, x1, y0, y1)) return std::nullopt;
  return s;
}

std::vector<Vec2> flow_vectors(const GaussianSet& at_t1, const std::vector<Vec3>& mu_t2,
                               const Camera& cam_t1, const Camera& cam_t2) {
  require(at_t1.size() == mu_t2.size(), ErrorCode::kShapeMismatch,
          "flow inputs are not index-aligned: " + std::to_string(at_t1.size()) + " vs " +
              std::to_string(mu_t2.size()) + " Gaussians");
  std::vector<Vec2> f(at_t1.size(), Vec2::Zero());
  for (std::size_t i = 0; i < at_t1.size(); ++i) {
    const auto a = cam_t1.project(at_t1[i].mu);
    const auto b = cam_t2.project(mu_t2[i]);
    if (a && b) f[i] = *b - *a;
  }
  return f;
}

std::vector<Vec2> flow_vectors(const GaussianSet& at_t1, const GaussianSet& at_t2,
                               const Camera& cam_t1, const Camera& cam_t2) {
  std::vector<Vec3> mu(at_t2.size());
  for (std::size_t i = 0; i < at_t2.size(); ++i) mu[i] = at_t2[i].mu;
  return flow_vectors(at_t1, mu, cam_t1, cam_t2);
}

RenderOutput rasterize(const GaussianSet& gaussians, const Camera& cam, const RenderOptions& opt,
                       const FlowContext* flow, RenderState* state) {
  Prepared prep = prepare(gaussians, cam, opt, flow);
  const int W = cam.width, H = cam.height, ts = opt.tile_size;
  const int tiles_x = (W + ts - 1) / ts, tiles_y = (H + ts - 1) / ts;
  RenderOutput out = allocate_output(W, H, opt.modes, prep.classes);

  std::vector<TileRecord> tiles(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      TileRecord& t = tiles[static_cast<std::size_t>(ty) * tiles_x + tx];
      t.x0 = tx * ts;
      t.y0 = ty * ts;
      t.x1 = std::min(W, t.x0 + ts);
      t.y1 = std::min(H, t.y0 + ts);
    }
  }
  // Splats are visited in sorted order, so every tile list stays sorted.
  for (std::size_t i = 0; i < prep.splats.size(); ++i) {
    const PreparedSplat& s = prep.splats[i];
    for (int ty = s.y0 / ts; ty <= s.y1 / ts; ++ty) {
      for (int tx = s.x0 / ts; tx <= s.x1 / ts; ++tx) {
        tiles[static_cast<std::size_t>(ty) * tiles_x + tx].splats.push_back(static_cast<std::uint32_t>(i));
      }
    }
  }

  const bool record = state != nullptr;
  parallel_for(
      tiles.size(),
      [&](std::size_t ti) {
        TileRecord& t = tiles[ti];
        std::vector<double> sem(static_cast<std::size_t>(std::max(prep.classes, 1)));
        if (record) t.pixel_begin.reserve(static_cast<std::size_t>((t.x1 - t.x0) * (t.y1 - t.y0)) + 1);
        for (int y = t.y0; y < t.y1; ++y) {
          for (int x = t.x0; x < t.x1; ++x) {
            if (record) t.pixel_begin.push_back(static_cast<std::uint32_t>(t.contributions.size()));
            std::fill(sem.begin(), sem.end(), 0.0);
            PixelBlend px{opt, prep};
            px.sem = sem.data();
            for (std::size_t li = 0; li < t.splats.size(); ++li) {
              const std::uint32_t si = t.splats[li];
              const PreparedSplat& s = prep.splats[si];
              if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
              double a;
              if (!splat_alpha(s, x, y, opt.max_mahalanobis2, a)) continue;
              if (record) t.contributions.push_back({static_cast<std::uint32_t>(li), a, px.T});
              px.add(si, a);
              if (px.T < opt.early_stop) break;
            }
            px.store(out, x, y, W);
          }
        }
        if (record) t.pixel_begin.push_back(static_cast<std::uint32_t>(t.contributions.size()));
      },
      opt.threads);

  if (state) {
    state->options = opt;
    state->width = W;
    state->height = H;
    state->semantic_classes = prep.classes;
    state->splats = std::move(prep.splats);
    state->features = std::move(prep.features);
    state->tiles = std::move(tiles);
  }
  return out;
}

RenderOutput render_reference(const GaussianSet& gaussians, const Camera& cam, const RenderOptions& opt,
                              const FlowContext* flow) {
  Prepared prep = prepare(gaussians, cam, opt, flow);
  const int W = cam.width, H = cam.height;
  RenderOutput out = allocate_output(W, H, opt.modes, prep.classes);
  // Independent of the sorted order produced by prepare(): restore source order.
  std::vector<std::size_t> by_source(prep.splats.size());
  std::iota(by_source.begin(), by_source.end(), 0);
  std::sort(by_source.begin(), by_source.end(),
            [&](std::size_t a, std::size_t b) { return prep.splats[a].source < prep.splats[b].source; });

  parallel_for(
      static_cast<std::size_t>(H),
      [&](std::size_t yy) {
        const int y = static_cast<int>(yy);
        std::vector<double> sem(static_cast<std::size_t>(std::max(prep.classes, 1)));
        std::vector<std::pair<std::size_t, double>> hits;
        for (int x = 0; x < W; ++x) {
          hits.clear();
          for (std::size_t i : by_source) {
            double a;
            if (splat_alpha(prep.splats[i], x, y, opt.max_mahalanobis2, a)) hits.emplace_back(i, a);
          }
          std::sort(hits.begin(), hits.end(), [&](const auto& p, const auto& q) {
            const PreparedSplat& a = prep.splats[p.first];
            const PreparedSplat& b = prep.splats[q.first];
            return a.depth < b.depth || (a.depth == b.depth && a.source < b.source);
          });
          std::fill(sem.begin(), sem.end(), 0.0);
          PixelBlend px{opt, prep};
          px.sem = sem.data();
          for (const auto& [i, a] : hits) px.add(i, a);
          px.store(out, x, y, W);
        }
      },
      opt.threads);
  return out;
}

void RenderGradients::resize(std::size_t n, std::size_t sh_size, std::size_t sem_size) {
  mu.assign(n, Vec3::Zero());
  quat.assign(n, Vec4::Zero());
  scale.assign(n, Vec3::Zero());
  opacity.assign(n, 0.0);
  sh.assign(n * sh_size, 0.0);
  sem.assign(n * sem_size, 0.0);
  mean2d.assign(n, Vec2::Zero());
}

namespace {

// Per-splat screen-space gradient slots.
enum Slot { kMx = 0, kMy, kConA, kConB, kConC, kOpacity, kR, kG, kB, kDepth, kSlotCount };

}  // namespace

RenderGradients rasterize_backward(const GaussianSet& gaussians, const Camera& cam,
                                   const RenderState& state, const RenderOutputGrad& grad) {
  const RenderOptions& opt = state.options;
  const int S = state.semantic_classes;
  const bool use_color = opt.modes.color && !grad.color.empty();
  const bool use_sem = opt.modes.semantic && !grad.semantic.empty() && S > 0;
  const bool use_depth = opt.modes.depth && !grad.depth.empty();
  const bool use_alpha = !grad.alpha.empty();
  require(!use_sem || opt.semantic_mode == SemanticMode::kSoftmax3D, ErrorCode::kConfig,
          "semantic gradients are only available in 3D-softmax mode");
  const std::size_t D = kSlotCount + static_cast<std::size_t>(use_sem ? S : 0);
  const std::size_t n_splats = state.splats.size();

  // Pass 1: per tile, back-to-front over each pixel's recorded contributions.
  std::vector<std::vector<double>> tile_grads(state.tiles.size());
  parallel_for(
      state.tiles.size(),
      [&](std::size_t ti) {
        const TileRecord& t = state.tiles[ti];
        auto& buf = tile_grads[ti];
        buf.assign(t.splats.size() * D, 0.0);
        std::vector<double> acc_sem(static_cast<std::size_t>(std::max(S, 1)));
        std::size_t p = 0;
        for (int y = t.y0; y < t.y1; ++y) {
          for (int x = t.x0; x < t.x1; ++x, ++p) {
            const std::uint32_t b = t.pixel_begin[p], e = t.pixel_begin[p + 1];
            if (b == e) continue;
            double gc[3] = {0, 0, 0};
            if (use_color) {
              for (int c = 0; c < 3; ++c) gc[c] = grad.color.at(x, y, c);
            }
            const double gd = use_depth ? grad.depth.at(x, y) : 0.0;
            const double ga = use_alpha ? grad.alpha.at(x, y) : 0.0;
            const double* gs = use_sem ? &grad.semantic.data[grad.semantic.index(x, y)] : nullptr;
            double acc_c[3] = {0, 0, 0}, acc_d = 0, acc_a = 0;
            std::fill(acc_sem.begin(), acc_sem.end(), 0.0);
            for (std::uint32_t k = e; k-- > b;) {
              const Contribution& ct = t.contributions[k];
              const std::uint32_t si = t.splats[ct.splat];
              const PreparedSplat& s = state.splats[si];
              double* g = &buf[ct.splat * D];
              const double a = ct.alpha, T = ct.transmittance, w = a * T;
              double dalpha = 0;
              if (use_color) {
                for (int c = 0; c < 3; ++c) {
                  dalpha += gc[c] * (s.color[c] - acc_c[c]);
                  g[kR + c] += gc[c] * w;
                  acc_c[c] = s.color[c] * a + (1 - a) * acc_c[c];
                }
              }
              if (use_depth) {
                dalpha += gd * (s.depth - acc_d);
                g[kDepth] += gd * w;
                acc_d = s.depth * a + (1 - a) * acc_d;
              }
              if (use_alpha) {
                dalpha += ga * (1.0 - acc_a);
                acc_a = a + (1 - a) * acc_a;
              }
              if (use_sem) {
                const double* f = &state.features[si * static_cast<std::size_t>(S)];
                for (int c = 0; c < S; ++c) {
                  dalpha += gs[c] * (f[c] - acc_sem[c]);
                  g[kSlotCount + c] += gs[c] * w;
                  acc_sem[c] = f[c] * a + (1 - a) * acc_sem[c];
                }
              }
              dalpha *= T;
              const double dx = x - s.mean.x(), dy = y - s.mean.y();
              const double m2 = s.conic_a * dx * dx + 2 * s.conic_b * dx * dy + s.conic_c * dy * dy;
              const double G = std::exp(-0.5 * m2);
              g[kOpacity] += dalpha * G;
              const double dpower = dalpha * s.opacity * G;
              g[kConA] += dpower * (-0.5 * dx * dx);
              g[kConB] += dpower * (-dx * dy);
              g[kConC] += dpower * (-0.5 * dy * dy);
              g[kMx] += dpower * (s.conic_a * dx + s.conic_b * dy);
              g[kMy] += dpower * (s.conic_b * dx + s.conic_c * dy);
            }
          }
        }
      },
      opt.threads);

  // Pass 2: reduce tiles in fixed order.
  std::vector<double> splat_grads(n_splats * D, 0.0);
  for (std::size_t ti = 0; ti < state.tiles.size(); ++ti) {
    const TileRecord& t = state.tiles[ti];
    for (std::size_t li = 0; li < t.splats.size(); ++li) {
      double* dst = &splat_grads[t.splats[li] * D];
      const double* src = &tile_grads[ti][li * D];
      for (std::size_t d = 0; d < D; ++d) dst[d] += src[d];
    }
  }

  // Pass 3: chain each splat back to its Gaussian.
  RenderGradients out;
  const std::size_t sh_size = gaussians.empty() ? 0 : gaussians.front().sh.size();
  out.resize(gaussians.size(), sh_size, static_cast<std::size_t>(std::max(S, 0)));
  const Vec3 center = cam.center();
  const auto& k = cam.intrinsics;
  parallel_for(
      n_splats,
      [&](std::size_t si) {
        const PreparedSplat& s = state.splats[si];
        const std::size_t gi = static_cast<std::size_t>(s.source);
        const Gaussian& g = gaussians[gi];
        const double* sg = &splat_grads[si * D];
        Vec3 d_mu = Vec3::Zero();

        // Color through SH.
        if (use_color) {
          Vec3 gcol(sg[kR], sg[kG], sg[kB]);
          for (int c = 0; c < 3; ++c) {
            if (s.color_clamped & (1u << c)) gcol[c] = 0;
          }
          Vec3 v = g.mu - center;
          const double n = v.norm();
          const Vec3 dir = n > 0 ? Vec3(v / n) : Vec3(0, 0, 1);
          ShBasis b;
          ShBasisJacobian jb;
          const int deg = g.sh_degree();
          sh_basis(deg, dir, b, &jb);
          Vec3 d_dir = Vec3::Zero();
          const int nc = scene::sh_coeff_count(deg);
          for (int kk = 0; kk < nc; ++kk) {
            double proj = 0;
            for (int c = 0; c < 3; ++c) {
              out.sh[gi * sh_size + kk * 3 + c] = b[kk] * gcol[c];
              proj += g.sh[kk * 3 + c] * gcol[c];
            }
            d_dir += proj * jb.row(kk).transpose();
          }
          if (n > 0) d_mu += (Mat3::Identity() - dir * dir.transpose()) * d_dir / n;
        }

        if (use_sem) {
          const double* f = &state.features[si * static_cast<std::size_t>(S)];
          double dot = 0;
          for (int c = 0; c < S; ++c) dot += f[c] * sg[kSlotCount + c];
          for (int c = 0; c < S; ++c) out.sem[gi * S + c] = f[c] * (sg[kSlotCount + c] - dot);
        }

        out.opacity[gi] = sg[kOpacity];
        out.mean2d[gi] = Vec2(sg[kMx], sg[kMy]);

        // Projection.
        ProjectionTerms pt;
        Splat2D sp;
        int x0, x1, y0, y1;
        project_terms(g, cam, opt, pt, sp, x0, x1, y0, y1);
        const double x = pt.p_cam.x(), y = pt.p_cam.y(), z = pt.p_cam.z();
        Vec3 d_pc = Vec3::Zero();
        d_pc.x() += sg[kMx] * k.fx / z;
        d_pc.y() += sg[kMy] * k.fy / z;
        d_pc.z() += -sg[kMx] * k.fx * x / (z * z) - sg[kMy] * k.fy * y / (z * z);
        d_pc.z() += sg[kDepth];

        Mat2 conic;
        conic << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
        Mat2 g_conic;
        g_conic << sg[kConA], 0.5 * sg[kConB], 0.5 * sg[kConB], sg[kConC];
        const Mat2 g_cov2 = -conic * g_conic * conic;
        const Mat3 g_sigma3 = pt.T.transpose() * g_cov2 * pt.T;
        const Mat23 g_T = 2.0 * g_cov2 * pt.T * pt.sigma3;
        const Mat23 g_J = g_T * cam.rotation.transpose();
        d_pc.z() += g_J(0, 0) * (-k.fx / (z * z)) + g_J(1, 1) * (-k.fy / (z * z));
        d_pc.z() += g_J(0, 2) * (k.fx * pt.rx / (z * z) + (pt.clamp_x ? 0.0 : k.fx * x / (z * z * z)));
        d_pc.z() += g_J(1, 2) * (k.fy * pt.ry / (z * z) + (pt.clamp_y ? 0.0 : k.fy * y / (z * z * z)));
        if (!pt.clamp_x) d_pc.x() += g_J(0, 2) * (-k.fx / (z * z));
        if (!pt.clamp_y) d_pc.y() += g_J(1, 2) * (-k.fy / (z * z));
        d_mu += cam.rotation.transpose() * d_pc;
        out.mu[gi] = d_mu;

        // Covariance: sigma3 = M M^T with M = R diag(scale).
        const Mat3 R = g.rotation();
        Mat3 M = R;
        for (int j = 0; j < 3; ++j) M.col(j) *= g.scale[j];
        const Mat3 g_M = 2.0 * g_sigma3 * M;
        Vec3 d_scale;
        Mat3 g_R = g_M;
        for (int j = 0; j < 3; ++j) {
          d_scale[j] = g_M.col(j).dot(R.col(j));
          g_R.col(j) *= g.scale[j];
        }
        out.scale[gi] = d_scale;

        const double qn = g.quat.norm();
        const Vec4 q = g.quat / qn;
        const double r = q[0], qx = q[1], qy = q[2], qz = q[3];
        Vec4 dq;
        dq[0] = 2 * (-qz * g_R(0, 1) + qy * g_R(0, 2) + qz * g_R(1, 0) - qx * g_R(1, 2) - qy * g_R(2, 0) +
                     qx * g_R(2, 1));
        dq[1] = 2 * (qy * g_R(0, 1) + qz * g_R(0, 2) + qy * g_R(1, 0) - 2 * qx * g_R(1, 1) - r * g_R(1, 2) +
                     qz * g_R(2, 0) + r * g_R(2, 1) - 2 * qx * g_R(2, 2));
        dq[2] = 2 * (-2 * qy * g_R(0, 0) + qx * g_R(0, 1) + r * g_R(0, 2) + qx * g_R(1, 0) + qz * g_R(1, 2) -
                     r * g_R(2, 0) + qz * g_R(2, 1) - 2 * qy * g_R(2, 2));
        dq[3] = 2 * (-2 * qz * g_R(0, 0) - r * g_R(0, 1) + qx * g_R(0, 2) + r * g_R(1, 0) -
                     2 * qz * g_R(1, 1) + qy * g_R(1, 2) + qx * g_R(2, 0) + qy * g_R(2, 1));
        out.quat[gi] = (dq - q * q.dot(dq)) / qn;
      },
      opt.threads);
  return out;
}

}  // namespace hugsim::render
