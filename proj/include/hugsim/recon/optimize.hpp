#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "hugsim/core/image.hpp"
#include "hugsim/recon/losses.hpp"
#include "hugsim/recon/track_fit.hpp"
#include "hugsim/render/exposure.hpp"
#include "hugsim/render/rasterizer.hpp"
#include "hugsim/scene/camera.hpp"
#include "hugsim/scene/scene_graph.hpp"

namespace hugsim::recon {

/// Adam step sizes per parameter group. Scale and opacity are optimized in
/// log and logit space.
struct LearningRates {
  double mu = 1e-2;        // meters; decays exponentially to mu_final
  double mu_final = 1e-4;
  double quat = 1e-3;
  double scale = 5e-3;
  double opacity = 5e-2;
  double sh_dc = 2.5e-3;
  double sh_rest = 1.25e-4;
  double semantic = 1e-2;
  double exposure = 1e-2;
  double pose = 1e-3;      // native actor knot states
  double velocity = 1e-3;  // native actor rates
};

struct DensifyConfig {
  bool enabled = true;
  int start = 100;
  int stop = -1;  // -1 = half of the iterations
  int interval = 100;
  double grad_threshold = 2e-4;  // mean screen-space positional gradient, pixels
  double split_scale = 0.3;      // larger Gaussians split, smaller ones clone (meters)
  double prune_opacity = 0.005;
  int max_gaussians = 200000;
};

struct FitConfig {
  int iterations = 2000;
  LearningRates lr;
  DensifyConfig densify;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool exposure = true;          // per-observation affine color correction
  int ground_patches = 32;       // per window and iteration
  int ground_patch_size = 16;
  double divergence_factor = 10.0;
  int divergence_patience = 100;
  int log_interval = 10;         // 0 = no log records
  TrackFitConfig track;

  /// Throws kConfig on non-positive iteration counts or invalid schedules.
  void validate() const;
  nlohmann::json to_json() const;
  static FitConfig from_json(const nlohmann::json& j);
};

/// One posed training image. Semantic labels and the alpha mask are optional
/// (empty means unsupervised).
struct Observation {
  scene::Camera camera;
  double time = 0.0;
  Image color;
  std::vector<int> labels;
  Image mask;
};

struct FitLogRecord {
  int iteration = 0;
  int view = 0;
  double total = 0, image = 0, semantic = 0, alpha = 0, ground = 0, track = 0, unicycle = 0,
         reg = 0;
  double psnr = 0;
  std::size_t gaussians = 0;

  nlohmann::json to_json() const;
};

struct FitResult {
  scene::SceneGraph scene;
  std::vector<render::ExposureAffine> exposures;  // one per observation
  std::vector<FitLogRecord> log;
  int densify_events = 0;
};

/// Gradient descent on every Gaussian field, per-observation exposure and
/// native-actor trajectories. Ground Gaussians keep their orientation and
/// thickness fixed and are regularized by loss_ground. Inserted actors are
/// left untouched. Deterministic for a fixed seed and thread count.
/// Throws kNonFinite on a non-finite loss and kDiverged when the loss stays
/// above divergence_factor times its initial value for divergence_patience
/// consecutive iterations. Log records are also written as JSON lines to
/// `log` when given.
FitResult optimize_scene(const scene::SceneGraph& init, const std::vector<Observation>& observations,
                         const LossWeights& weights, const FitConfig& config,
                         std::ostream* log = nullptr);

/// Renders a scene without inserted actors at one observation.
render::RenderOutput render_observation(const scene::SceneGraph& scene, const scene::Camera& camera,
                                        double time, const render::RenderOptions& options = {});

/// Densification step on one Gaussian set. Gaussians whose mean positional
/// gradient exceeds the threshold are cloned (small) or split in two (large);
/// then those with opacity below prune_opacity are removed. `flat_axis`
/// (0..2, or -1) names a scale axis that is preserved and never sampled
/// along. Returns for each output Gaussian the index of its source, or -1.
std::vector<int> densify_set(scene::GaussianSet& set, const std::vector<double>& mean_grad,
                             const DensifyConfig& config, int flat_axis, std::mt19937_64& rng);

}  // namespace hugsim::recon
