#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "hugsim/core/image.hpp"
#include "hugsim/recon/unicycle.hpp"
#include "hugsim/scene/gaussian.hpp"
#include "hugsim/scene/ground.hpp"

namespace hugsim::recon {

/// Relative weights of the training objective. All nonnegative,
/// lambda_ssim in [0, 1].
struct LossWeights {
  double ssim = 0.2;
  double semantic = 0.05;
  double alpha = 1.0;
  double ground = 10.0;
  double track = 1.0;
  double unicycle = 5.0;
  double reg = 30.0;

  /// Throws kConfig naming the offending weight.
  void validate() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

/// Mean SSIM over pixels and channels with an 11x11 Gaussian window
/// (sigma 1.5), zero padding at the borders, C1 = 0.01^2, C2 = 0.03^2.
/// When `grad_a` is given it receives dSSIM/da.
double ssim(const Image& a, const Image& b, Image* grad_a = nullptr);

/// Peak signal-to-noise ratio for signals in [0, 1]; +inf for equal images.
double psnr(const Image& a, const Image& b);

/// (1 - lambda) mean|r - t| + lambda (1 - SSIM(r, t)).
double loss_image(const Image& rendered, const Image& target, double lambda_ssim,
                  Image* grad = nullptr);

/// Mean over pixels of -log(max(p[label], 1e-8)). Pixels labelled
/// `ignore_label` do not count.
double loss_semantic(const Image& probs, const std::vector<int>& labels, Image* grad = nullptr,
                     int ignore_label = 255);

/// Mean squared error between rendered alpha and the mask.
double loss_alpha(const Image& alpha, const Image& mask, Image* grad = nullptr);

/// A set of ground Gaussians regularized together, expressed in the frame of
/// the window that owns them.
struct GroundPatch {
  int window = 0;
  std::vector<int> members;
};

/// Draws `per_window` patches per window; each patch holds the `patch_size`
/// members nearest (in 3D) to a randomly chosen member. Windows with fewer
/// than two members produce no patches. patch_size 0 takes the whole window.
std::vector<GroundPatch> sample_ground_patches(const scene::GroundPlaneSet& planes,
                                               const scene::GaussianSet& ground, int per_window,
                                               int patch_size, std::mt19937_64& rng);

/// One patch per window containing every member.
std::vector<GroundPatch> whole_window_patches(const scene::GroundPlaneSet& planes);

/// Mean over patches of the sample variance (1/(N-1)) of the camera-frame
/// heights of the patch members. Patches with fewer than two members are
/// skipped. `grad_mu`, when given, must hold one entry per ground Gaussian and
/// is accumulated into.
double loss_ground(const scene::GaussianSet& ground, const scene::GroundPlaneSet& planes,
                   const std::vector<GroundPatch>& patches, std::vector<Vec3>* grad_mu = nullptr);

/// Gradient of a trajectory-valued loss, laid out like the trajectory.
struct TrajectoryGrad {
  std::vector<UnicycleState> states;
  std::vector<double> v;
  std::vector<double> omega;

  explicit TrajectoryGrad(const UnicycleTrajectory& t = {})
      : states(t.states.size()), v(t.v.size(), 0.0), omega(t.omega.size(), 0.0) {}
};

/// Sum over knots of |x - x_box| + |z - z_box|.
double loss_track(const UnicycleTrajectory& traj, const std::vector<UnicycleState>& boxes,
                  TrajectoryGrad* grad = nullptr);

/// Sum over intervals of the x, z and theta residuals between each next
/// knot and a unicycle step from the current knot with the interval's rates.
double loss_unicycle(const UnicycleTrajectory& traj, TrajectoryGrad* grad = nullptr);

/// Sum of |v[k+1] + v[k-1] - 2 v[k]| and |theta[k+1] + theta[k-1] - 2 theta[k]|.
double loss_smooth(const UnicycleTrajectory& traj, TrajectoryGrad* grad = nullptr);

/// Partial derivatives of unicycle_step with respect to (theta, v, omega).
/// The straight-line branch returns the omega -> 0 limit of the derivatives.
struct UnicycleStepJacobian {
  double dx_dtheta, dx_dv, dx_domega;
  double dz_dtheta, dz_dv, dz_domega;
};
UnicycleStepJacobian unicycle_step_jacobian(const UnicycleState& s, double v, double omega);

}  // namespace hugsim::recon
