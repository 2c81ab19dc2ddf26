#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hugsim/core/image.hpp"
#include "hugsim/scene/camera.hpp"
#include "hugsim/scene/gaussian.hpp"

namespace hugsim::render {

/// Screen-space footprint of one Gaussian.
struct Splat2D {
  Vec2 mu2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();  // includes the low-pass floor
  double depth = 0.0;             // camera-frame z
  int source = -1;
};

enum class SemanticMode {
  kSoftmax3D,  // softmax per Gaussian, then blend
  kSoftmax2D,  // blend raw logits, softmax per pixel
};

struct RenderModes {
  bool color = true;
  bool semantic = false;
  bool depth = false;
  bool flow = false;
  bool alpha = true;
};

struct RenderOptions {
  RenderModes modes;
  SemanticMode semantic_mode = SemanticMode::kSoftmax3D;
  double near_plane = 0.2;
  double low_pass = 0.3;            // px^2 added to the 2D covariance diagonal
  double max_mahalanobis2 = 9.0;    // kernel support (3 sigma)
  double early_stop = 1e-4;         // stop a ray once transmittance drops below; 0 = never
  int tile_size = 16;
  int semantic_classes = 0;         // 0 = infer from the Gaussians
  unsigned threads = 0;             // 0 = hardware concurrency
};

/// Second-timestamp context for flow rendering: camera at t2 and each
/// Gaussian's position at t2 (index-aligned with the rendered set).
struct FlowContext {
  scene::Camera camera_t2;
  std::vector<Vec3> mu_t2;
};

struct RenderOutput {
  Image color;     // H x W x 3
  Image semantic;  // H x W x S
  Image depth;     // H x W x 1, accumulated d * weight
  Image flow;      // H x W x 2
  Image alpha;     // H x W x 1
  std::vector<int> contributors;  // per pixel
};

/// EWA projection. nullopt when the center is not in front of the near
/// plane or the support ellipse misses the viewport.
std::optional<Splat2D> project_gaussian(const scene::Gaussian& g, const scene::Camera& cam,
                                        const RenderOptions& options = {});

/// Per-Gaussian pixel motion f = proj(cam_t2, mu_t2) - proj(cam_t1, mu_t1).
/// Points behind either camera get zero flow.
std::vector<Vec2> flow_vectors(const scene::GaussianSet& at_t1, const scene::GaussianSet& at_t2,
                               const scene::Camera& cam_t1, const scene::Camera& cam_t2);
std::vector<Vec2> flow_vectors(const scene::GaussianSet& at_t1, const std::vector<Vec3>& mu_t2,
                               const scene::Camera& cam_t1, const scene::Camera& cam_t2);

/// Projected, shaded splat as used by the blending loop.
struct PreparedSplat {
  int source = -1;
  Vec2 mean = Vec2::Zero();
  double conic_a = 0, conic_b = 0, conic_c = 0;
  double opacity = 0;
  double depth = 0;
  Vec3 color = Vec3::Zero();
  std::uint8_t color_clamped = 0;  // bit c set when channel c hit the zero clamp
  Vec2 flow = Vec2::Zero();
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds of the support
};

struct Contribution {
  std::uint32_t splat;   // index into the owning tile's splat list
  double alpha;          // alpha' at the pixel
  double transmittance;  // T before this splat
};

struct TileRecord {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // pixel range [x0, x1) x [y0, y1)
  std::vector<std::uint32_t> splats;     // indices into RenderState::splats, front to back
  std::vector<std::uint32_t> pixel_begin;  // (pixels + 1) offsets into contributions
  std::vector<Contribution> contributions;
};

/// Forward quantities saved for the backward pass.
struct RenderState {
  RenderOptions options;
  int width = 0, height = 0, semantic_classes = 0;
  std::vector<PreparedSplat> splats;  // visible, sorted front to back
  std::vector<double> features;       // splats.size() x S, blended semantic values per splat
  std::vector<TileRecord> tiles;
};

/// Tile-based renderer. `flow` is required iff options.modes.flow.
RenderOutput rasterize(const scene::GaussianSet& gaussians, const scene::Camera& cam,
                       const RenderOptions& options = {}, const FlowContext* flow = nullptr,
                       RenderState* state = nullptr);

/// Brute-force per-pixel renderer: full sort of every covering splat, no
/// tiling, no early termination.
RenderOutput render_reference(const scene::GaussianSet& gaussians, const scene::Camera& cam,
                              const RenderOptions& options = {},
                              const FlowContext* flow = nullptr);

/// Upstream gradients; empty images count as zero.
struct RenderOutputGrad {
  Image color;
  Image semantic;
  Image depth;
  Image alpha;
};

/// Gradients with respect to the stored Gaussian fields (raw quaternion,
/// linear scale and opacity). Flow is treated as constant.
struct RenderGradients {
  std::vector<Vec3> mu;
  std::vector<Vec4> quat;
  std::vector<Vec3> scale;
  std::vector<double> opacity;
  std::vector<double> sh;   // n x 3(D+1)^2
  std::vector<double> sem;  // n x S
  std::vector<Vec2> mean2d; // screen-space mean gradient

  void resize(std::size_t n, std::size_t sh_size, std::size_t sem_size);
};

RenderGradients rasterize_backward(const scene::GaussianSet& gaussians, const scene::Camera& cam,
                                   const RenderState& state, const RenderOutputGrad& grad);

}  // namespace hugsim::render
