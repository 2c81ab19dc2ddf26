#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hugsim/core/math.hpp"

namespace hugsim::scene {

/// Number of SH coefficients per color channel for a given degree.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// SH zeroth-order constant; DC color = kShC0 * sh[0..2] + 0.5.
inline constexpr double kShC0 = 0.28209479177387814;

/// One anisotropic 3D Gaussian primitive.
///
/// `sh` stores coefficient-major, channel-minor values:
/// sh[k * 3 + c] is coefficient k of color channel c.
struct Gaussian {
  Vec3 mu = Vec3::Zero();
  Vec4 quat = Vec4(1, 0, 0, 0);  // (w, x, y, z)
  Vec3 scale = Vec3::Ones();
  double opacity = 1.0;
  std::vector<double> sh;
  std::vector<double> sem_logits;

  int sh_degree() const;
  Mat3 rotation() const { return quat_to_rotation(quat); }

  /// Sets the DC coefficients so the view-independent color equals `rgb`.
  void set_base_color(const Vec3& rgb, int degree);
};

using GaussianSet = std::vector<Gaussian>;

/// 3D covariance R S S^T R^T.
Mat3 covariance_3d(const Gaussian& g);

/// Validates the primitive invariants; returns an empty string when valid,
/// otherwise a human-readable reason.
std::string validate(const Gaussian& g, std::size_t semantic_classes);

/// Rounds every field to 32-bit float precision (the on-disk record format),
/// so that persisted scenes round-trip bit-exactly.
void quantize_to_storage(Gaussian& g);
void quantize_to_storage(GaussianSet& set);

int semantic_argmax(const Gaussian& g);

}  // namespace hugsim::scene
