#include "hugsim/recon/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hugsim/core/error.hpp"
#include "hugsim/recon/adam.hpp"
#include "hugsim/scene/compose.hpp"

namespace hugsim::recon {

void FitConfig::validate() const {
  require(iterations > 0, ErrorCode::kConfig, "fit config: iterations must be positive");
  require(densify.interval > 0, ErrorCode::kConfig, "fit config: densify interval must be positive");
  require(densify.prune_opacity >= 0 && densify.prune_opacity < 1, ErrorCode::kConfig,
          "fit config: prune_opacity must lie in [0, 1)");
  require(ground_patches >= 0 && ground_patch_size >= 0, ErrorCode::kConfig,
          "fit config: ground patch counts must be nonnegative");
  require(divergence_factor > 1 && divergence_patience > 0, ErrorCode::kConfig,
          "fit config: divergence guard needs factor > 1 and positive patience");
  for (double lr : {lr.mu, lr.mu_final, lr.quat, lr.scale, lr.opacity, lr.sh_dc, lr.sh_rest,
                    lr.semantic, lr.exposure, lr.pose, lr.velocity}) {
    require(std::isfinite(lr) && lr >= 0, ErrorCode::kConfig,
            "fit config: learning rates must be finite and nonnegative");
  }
  track.validate();
}

nlohmann::json FitConfig::to_json() const {
  return {{"iterations", iterations},
          {"seed", seed},
          {"threads", threads},
          {"exposure", exposure},
          {"ground_patches", ground_patches},
          {"ground_patch_size", ground_patch_size},
          {"divergence_factor", divergence_factor},
          {"divergence_patience", divergence_patience},
          {"log_interval", log_interval},
          {"lr",
           {{"mu", lr.mu},
            {"mu_final", lr.mu_final},
            {"quat", lr.quat},
            {"scale", lr.scale},
            {"opacity", lr.opacity},
            {"sh_dc", lr.sh_dc},
            {"sh_rest", lr.sh_rest},
            {"semantic", lr.semantic},
            {"exposure", lr.exposure},
            {"pose", lr.pose},
            {"velocity", lr.velocity}}},
          {"densify",
           {{"enabled", densify.enabled},
            {"start", densify.start},
            {"stop", densify.stop},
            {"interval", densify.interval},
            {"grad_threshold", densify.grad_threshold},
            {"split_scale", densify.split_scale},
            {"prune_opacity", densify.prune_opacity},
            {"max_gaussians", densify.max_gaussians}}},
          {"track", track.to_json()}};
}

FitConfig FitConfig::from_json(const nlohmann::json& j) {
  FitConfig c;
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.exposure = j.value("exposure", c.exposure);
    c.ground_patches = j.value("ground_patches", c.ground_patches);
    c.ground_patch_size = j.value("ground_patch_size", c.ground_patch_size);
    c.divergence_factor = j.value("divergence_factor", c.divergence_factor);
    c.divergence_patience = j.value("divergence_patience", c.divergence_patience);
    c.log_interval = j.value("log_interval", c.log_interval);
    if (j.contains("lr")) {
      const auto& l = j.at("lr");
      c.lr.mu = l.value("mu", c.lr.mu);
      c.lr.mu_final = l.value("mu_final", c.lr.mu_final);
      c.lr.quat = l.value("quat", c.lr.quat);
      c.lr.scale = l.value("scale", c.lr.scale);
      c.lr.opacity = l.value("opacity", c.lr.opacity);
      c.lr.sh_dc = l.value("sh_dc", c.lr.sh_dc);
      c.lr.sh_rest = l.value("sh_rest", c.lr.sh_rest);
      c.lr.semantic = l.value("semantic", c.lr.semantic);
      c.lr.exposure = l.value("exposure", c.lr.exposure);
      c.lr.pose = l.value("pose", c.lr.pose);
      c.lr.velocity = l.value("velocity", c.lr.velocity);
    }
    if (j.contains("densify")) {
      const auto& d = j.at("densify");
      c.densify.enabled = d.value("enabled", c.densify.enabled);
      c.densify.start = d.value("start", c.densify.start);
      c.densify.stop = d.value("stop", c.densify.stop);
      c.densify.interval = d.value("interval", c.densify.interval);
      c.densify.grad_threshold = d.value("grad_threshold", c.densify.grad_threshold);
      c.densify.split_scale = d.value("split_scale", c.densify.split_scale);
      c.densify.prune_opacity = d.value("prune_opacity", c.densify.prune_opacity);
      c.densify.max_gaussians = d.value("max_gaussians", c.densify.max_gaussians);
    }
    if (j.contains("track")) c.track = TrackFitConfig::from_json(j.at("track"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("fit config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json FitLogRecord::to_json() const {
  return {{"iteration", iteration}, {"view", view},         {"total", total},
          {"image", image},         {"semantic", semantic}, {"alpha", alpha},
          {"ground", ground},       {"track", track},       {"unicycle", unicycle},
          {"reg", reg},             {"psnr", psnr},         {"gaussians", gaussians}};
}

namespace {

using scene::Gaussian;
using scene::GaussianSet;

// Left-multiplication matrix: quat_multiply(a, b) == left_matrix(a) * b.
Eigen::Matrix4d left_matrix(const Vec4& a) {
  Eigen::Matrix4d m;
  for (int i = 0; i < 4; ++i) m.col(i) = quat_multiply(a, Vec4::Unit(i));
  return m;
}

Vec4 yaw_quat(double theta) { return Vec4(std::cos(0.5 * theta), 0, -std::sin(0.5 * theta), 0); }

Mat3 yaw_rotation_derivative(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Mat3 r;
  r << -s, 0, -c, 0, 0, 0, c, 0, -s;
  return r;
}

// Adam moments for one Gaussian set.
struct SetState {
  AdamGroup mu, quat, scale, opacity, sh, sem;
  std::size_t sh_size = 0, sem_size = 0;

  void init(const GaussianSet& set, std::size_t shs, std::size_t sems) {
    sh_size = shs;
    sem_size = sems;
    mu.resize(3 * set.size());
    quat.resize(4 * set.size());
    scale.resize(3 * set.size());
    opacity.resize(set.size());
    sh.resize(sh_size * set.size());
    sem.resize(sem_size * set.size());
  }

  void remap(const std::vector<int>& sources) {
    mu.remap(sources, 3);
    quat.remap(sources, 4);
    scale.remap(sources, 3);
    opacity.remap(sources, 1);
    sh.remap(sources, sh_size);
    sem.remap(sources, sem_size);
  }
};

// Per-Gaussian parameter gradients in the stored parameterization.
struct SetGrad {
  std::vector<Vec3> mu;
  std::vector<Vec4> quat;
  std::vector<Vec3> scale;
  std::vector<double> opacity;
  std::vector<double> sh;
  std::vector<double> sem;

  void reset(std::size_t n, std::size_t shs, std::size_t sems) {
    mu.assign(n, Vec3::Zero());
    quat.assign(n, Vec4::Zero());
    scale.assign(n, Vec3::Zero());
    opacity.assign(n, 0.0);
    sh.assign(n * shs, 0.0);
    sem.assign(n * sems, 0.0);
  }
};

struct StepRates {
  double mu, quat, scale, opacity, sh_dc, sh_rest, semantic;
};

void adam_update_set(GaussianSet& set, const SetGrad& g, SetState& st, const StepRates& lr,
                     const Adam& adam, int flat_axis) {
  const auto s_mu = adam.begin_step(st.mu), s_q = adam.begin_step(st.quat),
             s_s = adam.begin_step(st.scale), s_o = adam.begin_step(st.opacity),
             s_sh = adam.begin_step(st.sh), s_sem = adam.begin_step(st.sem);
  for (std::size_t i = 0; i < set.size(); ++i) {
    Gaussian& q = set[i];
    for (int k = 0; k < 3; ++k) {
      q.mu[k] = adam.update(st.mu, s_mu, 3 * i + static_cast<std::size_t>(k), q.mu[k], g.mu[i][k], lr.mu);
    }
    if (flat_axis < 0) {
      for (int k = 0; k < 4; ++k) {
        q.quat[k] = adam.update(st.quat, s_q, 4 * i + static_cast<std::size_t>(k), q.quat[k], g.quat[i][k], lr.quat);
      }
      q.quat /= q.quat.norm();
    }
    for (int k = 0; k < 3; ++k) {
      if (k == flat_axis) continue;
      const double ls = std::log(q.scale[k]);
      const double gl = g.scale[i][k] * q.scale[k];
      q.scale[k] = std::exp(adam.update(st.scale, s_s, 3 * i + static_cast<std::size_t>(k), ls, gl, lr.scale));
    }
    {
      const double a = std::clamp(q.opacity, 1e-6, 1 - 1e-6);
      const double lo = logit(a);
      const double go = g.opacity[i] * a * (1 - a);
      q.opacity = std::clamp(sigmoid(adam.update(st.opacity, s_o, i, lo, go, lr.opacity)), 1e-6, 1 - 1e-6);
    }
    for (std::size_t k = 0; k < q.sh.size(); ++k) {
      const std::size_t idx = i * st.sh_size + k;
      q.sh[k] = adam.update(st.sh, s_sh, idx, q.sh[k], g.sh[idx], k < 3 ? lr.sh_dc : lr.sh_rest);
    }
    for (std::size_t k = 0; k < q.sem_logits.size(); ++k) {
      const std::size_t idx = i * st.sem_size + k;
      q.sem_logits[k] = adam.update(st.sem, s_sem, idx, q.sem_logits[k], g.sem[idx], lr.semantic);
    }
  }
}

// Copies the renderer gradients of composed Gaussians [offset, offset + n)
// into a set gradient.
void take_direct(const render::RenderGradients& rg, std::size_t offset, std::size_t n, SetGrad& g,
                 std::size_t shs, std::size_t sems) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = offset + i;
    g.mu[i] += rg.mu[c];
    g.quat[i] += rg.quat[c];
    g.scale[i] += rg.scale[c];
    g.opacity[i] += rg.opacity[c];
    for (std::size_t k = 0; k < shs; ++k) g.sh[i * shs + k] += rg.sh[c * shs + k];
    for (std::size_t k = 0; k < sems; ++k) g.sem[i * sems + k] += rg.sem[c * sems + k];
  }
}

std::vector<std::pair<Mat3, Vec3>> anchors_of(const scene::GroundPlaneSet& planes) {
  std::vector<std::pair<Mat3, Vec3>> a;
  for (const auto& w : planes.windows) a.emplace_back(w.rotation, w.translation);
  return a;
}

struct ActorFrame {
  scene::ActorPose pose;
  double center_y = 0.0;
  int knot = -1;  // knot index when the time coincides with a knot
};

ActorFrame actor_frame(const scene::SceneGraph& g, const scene::NativeActor& a, double t) {
  ActorFrame f;
  const auto s = unicycle_interpolate(a.trajectory, t);
  f.pose = {s.state.x, s.state.z, s.state.theta};
  f.center_y = g.actor_center_y(f.pose.x, f.pose.z, a.extents);
  for (std::size_t k = 0; k < a.trajectory.times.size(); ++k) {
    if (std::abs(a.trajectory.times[k] - t) < 1e-9) f.knot = static_cast<int>(k);
  }
  return f;
}

// World-frame copy of an actor Gaussian, consistent with the derivatives
// used in the backward mapping below.
Gaussian actor_to_world(const Gaussian& g, const ActorFrame& f) {
  Gaussian w = g;
  w.mu = yaw_rotation(f.pose.theta) * g.mu + Vec3(f.pose.x, f.center_y, f.pose.z);
  w.quat = quat_multiply(yaw_quat(f.pose.theta), g.quat) / g.quat.norm();
  return w;
}

GaussianSet compose_for_fit(const scene::SceneGraph& g, double t, std::vector<ActorFrame>* frames) {
  GaussianSet out;
  out.reserve(g.gaussian_count());
  out.insert(out.end(), g.ground.begin(), g.ground.end());
  out.insert(out.end(), g.static_bg.begin(), g.static_bg.end());
  for (const auto& a : g.native_actors) {
    const ActorFrame f = actor_frame(g, a, t);
    if (frames != nullptr) frames->push_back(f);
    for (const auto& q : a.gaussians) out.push_back(actor_to_world(q, f));
  }
  return out;
}

}  // namespace

render::RenderOutput render_observation(const scene::SceneGraph& scene, const scene::Camera& camera,
                                        double time, const render::RenderOptions& options) {
  return render::rasterize(compose_for_fit(scene, time, nullptr), camera, options);
}

std::vector<int> densify_set(GaussianSet& set, const std::vector<double>& mean_grad,
                             const DensifyConfig& config, int flat_axis, std::mt19937_64& rng) {
  require(mean_grad.size() == set.size(), ErrorCode::kShapeMismatch,
          "densify: gradient statistics do not match the Gaussian set");
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianSet kept, added;
  std::vector<int> kept_src;
  std::size_t budget = config.max_gaussians > 0 ? static_cast<std::size_t>(config.max_gaussians) : SIZE_MAX;
  std::size_t count = set.size();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Gaussian& g = set[i];
    const bool grow = mean_grad[i] >= config.grad_threshold && count < budget;
    if (!grow) {
      kept.push_back(g);
      kept_src.push_back(static_cast<int>(i));
      continue;
    }
    double smax = 0;
    for (int k = 0; k < 3; ++k) {
      if (k != flat_axis) smax = std::max(smax, g.scale[k]);
    }
    if (smax > config.split_scale) {
      // Two children drawn from the parent distribution at 1/1.6 the size.
      const Mat3 R = g.rotation();
      for (int c = 0; c < 2; ++c) {
        Vec3 n(normal(rng), normal(rng), normal(rng));
        if (flat_axis >= 0) n[flat_axis] = 0.0;
        Gaussian child = g;
        child.mu = g.mu + R * g.scale.cwiseProduct(n);
        for (int k = 0; k < 3; ++k) {
          if (k != flat_axis) child.scale[k] = g.scale[k] / 1.6;
        }
        added.push_back(child);
      }
      ++count;
    } else {
      // Two coincident copies whose combined coverage equals the parent's.
      Gaussian copy = g;
      copy.opacity = 1.0 - std::sqrt(1.0 - g.opacity);
      kept.push_back(copy);
      kept_src.push_back(static_cast<int>(i));
      added.push_back(copy);
      ++count;
    }
  }
  std::vector<int> sources;
  GaussianSet out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i].opacity < config.prune_opacity) continue;
    out.push_back(kept[i]);
    sources.push_back(kept_src[i]);
  }
  for (const auto& g : added) {
    if (g.opacity < config.prune_opacity) continue;
    out.push_back(g);
    sources.push_back(-1);
  }
  set = std::move(out);
  return sources;
}

FitResult optimize_scene(const scene::SceneGraph& init, const std::vector<Observation>& observations,
                         const LossWeights& weights, const FitConfig& config, std::ostream* log) {
  weights.validate();
  config.validate();
  require(!observations.empty(), ErrorCode::kInvalidArgument, "optimize_scene: no observations");
  const std::size_t S = init.schema.size();
  for (std::size_t v = 0; v < observations.size(); ++v) {
    const auto& o = observations[v];
    const std::string where = "optimize_scene: observation " + std::to_string(v);
    require(o.color.width == o.camera.width && o.color.height == o.camera.height && o.color.channels == 3,
            ErrorCode::kShapeMismatch, where + " color image does not match its camera");
    require(o.labels.empty() || o.labels.size() == o.color.pixel_count(), ErrorCode::kShapeMismatch,
            where + " label map does not match its camera");
    require(o.mask.empty() || (o.mask.width == o.color.width && o.mask.height == o.color.height &&
                               o.mask.channels == 1),
            ErrorCode::kShapeMismatch, where + " mask does not match its camera");
  }

  FitResult result;
  result.scene = init;
  result.scene.inserted_actors.clear();
  scene::SceneGraph& sg = result.scene;
  result.exposures.assign(observations.size(), {});

  const std::size_t shs = static_cast<std::size_t>(3 * scene::sh_coeff_count(sg.sh_degree));
  std::mt19937_64 rng(config.seed);
  const Adam adam;

  SetState ground_st, static_st;
  ground_st.init(sg.ground, shs, S);
  static_st.init(sg.static_bg, shs, S);
  std::vector<SetState> actor_st(sg.native_actors.size());
  std::vector<AdamGroup> pose_st(sg.native_actors.size()), rate_st(sg.native_actors.size());
  std::vector<std::vector<UnicycleState>> boxes;
  for (std::size_t a = 0; a < sg.native_actors.size(); ++a) {
    actor_st[a].init(sg.native_actors[a].gaussians, shs, S);
    pose_st[a].resize(3 * sg.native_actors[a].trajectory.states.size());
    rate_st[a].resize(2 * sg.native_actors[a].trajectory.v.size());
    boxes.push_back(sg.native_actors[a].trajectory.states);
  }
  std::vector<AdamGroup> exposure_st(observations.size());
  for (auto& e : exposure_st) e.resize(12);

  std::vector<double> grad_accum(sg.ground.size() + sg.static_bg.size(), 0.0);
  std::vector<int> grad_count(grad_accum.size(), 0);
  const int densify_stop = config.densify.stop < 0 ? config.iterations / 2 : config.densify.stop;

  std::vector<int> order(observations.size());
  std::size_t order_pos = order.size();
  double initial_loss = -1;
  int above = 0;

  for (int it = 0; it < config.iterations; ++it) {
    if (order_pos == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      order_pos = 0;
    }
    const int view = order[order_pos++];
    const Observation& obs = observations[static_cast<std::size_t>(view)];

    std::vector<ActorFrame> frames;
    const GaussianSet composed = compose_for_fit(sg, obs.time, &frames);

    render::RenderOptions ropt;
    ropt.threads = config.threads;
    ropt.semantic_classes = static_cast<int>(S);
    ropt.modes.semantic = !obs.labels.empty() && weights.semantic > 0;
    ropt.modes.alpha = !obs.mask.empty();
    render::RenderState state;
    const auto out = render::rasterize(composed, obs.camera, ropt, nullptr, &state);

    FitLogRecord rec;
    rec.iteration = it;
    rec.view = view;
    render::RenderOutputGrad og;
    auto& expo = result.exposures[static_cast<std::size_t>(view)];
    const Image shown = config.exposure ? render::apply_exposure(out.color, expo) : out.color;
    Image g_shown;
    rec.image = loss_image(shown, obs.color, weights.ssim, &g_shown);
    rec.psnr = psnr(shown, obs.color);
    render::ExposureGrad eg;
    if (config.exposure) {
      eg = render::apply_exposure_backward(out.color, expo, g_shown);
      og.color = std::move(eg.color);
    } else {
      og.color = std::move(g_shown);
    }
    if (ropt.modes.semantic) {
      Image gs;
      rec.semantic = loss_semantic(out.semantic, obs.labels, &gs);
      for (auto& v : gs.data) v *= weights.semantic;
      og.semantic = std::move(gs);
    }
    if (ropt.modes.alpha && weights.alpha > 0) {
      Image ga;
      rec.alpha = loss_alpha(out.alpha, obs.mask, &ga);
      for (auto& v : ga.data) v *= weights.alpha;
      og.alpha = std::move(ga);
    }
    const auto rg = render::rasterize_backward(composed, obs.camera, state, og);

    // Densification statistics over ground and static Gaussians.
    const std::size_t n_fixed = sg.ground.size() + sg.static_bg.size();
    for (const auto& sp : state.splats) {
      const auto src = static_cast<std::size_t>(sp.source);
      if (src < n_fixed) {
        grad_accum[src] += rg.mean2d[src].norm();
        grad_count[src] += 1;
      }
    }

    SetGrad g_ground, g_static;
    g_ground.reset(sg.ground.size(), shs, S);
    g_static.reset(sg.static_bg.size(), shs, S);
    take_direct(rg, 0, sg.ground.size(), g_ground, shs, S);
    take_direct(rg, sg.ground.size(), sg.static_bg.size(), g_static, shs, S);

    if (weights.ground > 0 && !sg.ground.empty()) {
      const auto patches = sample_ground_patches(sg.ground_planes, sg.ground, config.ground_patches,
                                                 config.ground_patch_size, rng);
      std::vector<Vec3> gmu(sg.ground.size(), Vec3::Zero());
      rec.ground = loss_ground(sg.ground, sg.ground_planes, patches, &gmu);
      for (std::size_t i = 0; i < gmu.size(); ++i) g_ground.mu[i] += weights.ground * gmu[i];
    }

    // Native actors: object-frame Gaussians, knot poses and rates.
    std::size_t offset = n_fixed;
    std::vector<SetGrad> g_actor(sg.native_actors.size());
    std::vector<TrajectoryGrad> g_traj;
    for (std::size_t a = 0; a < sg.native_actors.size(); ++a) {
      auto& actor = sg.native_actors[a];
      const ActorFrame& f = frames[a];
      const std::size_t n = actor.gaussians.size();
      g_actor[a].reset(n, shs, S);
      take_direct(rg, offset, n, g_actor[a], shs, S);
      const Mat3 R = yaw_rotation(f.pose.theta);
      const Mat3 dR = yaw_rotation_derivative(f.pose.theta);
      const Vec4 qy = yaw_quat(f.pose.theta);
      const Vec4 dqy(-0.5 * std::sin(0.5 * f.pose.theta), 0, -0.5 * std::cos(0.5 * f.pose.theta), 0);
      const Eigen::Matrix4d L = left_matrix(qy), dL = left_matrix(dqy);
      TrajectoryGrad tg(actor.trajectory);
      for (std::size_t i = 0; i < n; ++i) {
        const Gaussian& q = actor.gaussians[i];
        const Vec3 gmu_w = g_actor[a].mu[i];
        const Vec4 gq_w = g_actor[a].quat[i];
        const double qn = q.quat.norm();
        const Vec4 qhat = q.quat / qn;
        g_actor[a].mu[i] = R.transpose() * gmu_w;
        const Vec4 gq = L.transpose() * gq_w / qn;
        g_actor[a].quat[i] = gq - qhat * qhat.dot(gq);
        if (f.knot >= 0) {
          auto& st = tg.states[static_cast<std::size_t>(f.knot)];
          st.x += gmu_w.x();
          st.z += gmu_w.z();
          st.theta += gmu_w.dot(dR * q.mu) + gq_w.dot(dL * q.quat / qn);
        }
      }
      offset += n;
      TrajectoryGrad gt(actor.trajectory), gu(actor.trajectory), gr(actor.trajectory);
      rec.track += loss_track(actor.trajectory, boxes[a], &gt);
      rec.unicycle += loss_unicycle(actor.trajectory, &gu);
      rec.reg += loss_smooth(actor.trajectory, &gr);
      for (std::size_t k = 0; k < tg.states.size(); ++k) {
        tg.states[k].x += weights.track * gt.states[k].x + weights.unicycle * gu.states[k].x + weights.reg * gr.states[k].x;
        tg.states[k].z += weights.track * gt.states[k].z + weights.unicycle * gu.states[k].z + weights.reg * gr.states[k].z;
        tg.states[k].theta += weights.track * gt.states[k].theta + weights.unicycle * gu.states[k].theta +
                              weights.reg * gr.states[k].theta;
      }
      for (std::size_t k = 0; k < tg.v.size(); ++k) {
        tg.v[k] += weights.unicycle * gu.v[k] + weights.reg * gr.v[k];
        tg.omega[k] += weights.unicycle * gu.omega[k] + weights.reg * gr.omega[k];
      }
      g_traj.push_back(std::move(tg));
    }

    rec.total = rec.image + weights.semantic * rec.semantic + weights.alpha * rec.alpha +
                weights.ground * rec.ground + weights.track * rec.track +
                weights.unicycle * rec.unicycle + weights.reg * rec.reg;
    rec.gaussians = composed.size();
    if (!std::isfinite(rec.total)) {
      fail(ErrorCode::kNonFinite, "optimize_scene: non-finite loss at iteration " + std::to_string(it) +
                                      " (view " + std::to_string(view) + ", log " + rec.to_json().dump() + ")");
    }
    if (initial_loss < 0) initial_loss = rec.total;
    above = rec.total > config.divergence_factor * initial_loss ? above + 1 : 0;
    if (above >= config.divergence_patience) {
      fail(ErrorCode::kDiverged, "optimize_scene: loss above " + std::to_string(config.divergence_factor) +
                                     "x its initial value for " + std::to_string(above) +
                                     " iterations (iteration " + std::to_string(it) + ")");
    }

    // Parameter updates.
    const double t = config.iterations > 1 ? static_cast<double>(it) / (config.iterations - 1) : 0.0;
    const StepRates rates{log_lerp(config.lr.mu, config.lr.mu_final, t), config.lr.quat, config.lr.scale,
                          config.lr.opacity, config.lr.sh_dc, config.lr.sh_rest, config.lr.semantic};
    adam_update_set(sg.ground, g_ground, ground_st, rates, adam, 1);
    adam_update_set(sg.static_bg, g_static, static_st, rates, adam, -1);
    for (std::size_t a = 0; a < sg.native_actors.size(); ++a) {
      auto& actor = sg.native_actors[a];
      adam_update_set(actor.gaussians, g_actor[a], actor_st[a], rates, adam, -1);
      auto& traj = actor.trajectory;
      const auto sp = adam.begin_step(pose_st[a]);
      for (std::size_t k = 0; k < traj.states.size(); ++k) {
        traj.states[k].x = adam.update(pose_st[a], sp, 3 * k, traj.states[k].x, g_traj[a].states[k].x, config.lr.pose);
        traj.states[k].z = adam.update(pose_st[a], sp, 3 * k + 1, traj.states[k].z, g_traj[a].states[k].z, config.lr.pose);
        traj.states[k].theta =
            adam.update(pose_st[a], sp, 3 * k + 2, traj.states[k].theta, g_traj[a].states[k].theta, config.lr.pose);
      }
      const auto sr = adam.begin_step(rate_st[a]);
      for (std::size_t k = 0; k < traj.v.size(); ++k) {
        traj.v[k] = adam.update(rate_st[a], sr, 2 * k, traj.v[k], g_traj[a].v[k], config.lr.velocity);
        traj.omega[k] = adam.update(rate_st[a], sr, 2 * k + 1, traj.omega[k], g_traj[a].omega[k], config.lr.velocity);
      }
    }
    if (config.exposure) {
      auto& st = exposure_st[static_cast<std::size_t>(view)];
      const auto se = adam.begin_step(st);
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          expo.A(r, c) = adam.update(st, se, static_cast<std::size_t>(3 * r + c), expo.A(r, c), eg.A(r, c), config.lr.exposure);
        }
        expo.b[r] = adam.update(st, se, static_cast<std::size_t>(9 + r), expo.b[r], eg.b[r], config.lr.exposure);
      }
    }

    // Density control.
    if (config.densify.enabled && it >= config.densify.start && it <= densify_stop &&
        (it - config.densify.start) % config.densify.interval == 0 && it > 0) {
      const std::size_t G = sg.ground.size();
      std::vector<double> mg(G), ms(sg.static_bg.size());
      for (std::size_t i = 0; i < grad_accum.size(); ++i) {
        const double m = grad_count[i] > 0 ? grad_accum[i] / grad_count[i] : 0.0;
        (i < G ? mg[i] : ms[i - G]) = m;
      }
      const auto src_g = densify_set(sg.ground, mg, config.densify, 1, rng);
      const auto src_s = densify_set(sg.static_bg, ms, config.densify, -1, rng);
      ground_st.remap(src_g);
      static_st.remap(src_s);
      if (!sg.ground_planes.windows.empty()) {
        sg.ground_planes = scene::GroundPlaneSet::build(anchors_of(sg.ground_planes), sg.ground,
                                                        sg.ground_planes.windows.front().depth);
      }
      grad_accum.assign(sg.ground.size() + sg.static_bg.size(), 0.0);
      grad_count.assign(grad_accum.size(), 0);
      ++result.densify_events;
    }

    if (config.log_interval > 0 && (it % config.log_interval == 0 || it + 1 == config.iterations)) {
      if (log != nullptr) *log << rec.to_json().dump() << '\n';
      result.log.push_back(rec);
    }
  }
  sg.ground_planes.refresh_heights(sg.ground);
  return result;
}

}  // namespace hugsim::recon
