#pragma once

#include <json.hpp>

#include "hugsim/core/image.hpp"
#include "hugsim/core/math.hpp"

namespace hugsim::render {

/// Per-camera affine color transform C' = A C + b.
struct ExposureAffine {
  Mat3 A = Mat3::Identity();
  Vec3 b = Vec3::Zero();

  bool is_finite() const { return A.allFinite() && b.allFinite(); }
  nlohmann::json to_json() const;
  static ExposureAffine from_json(const nlohmann::json& j);
};

/// Applies the affine per pixel. No clamping.
Image apply_exposure(const Image& color, const ExposureAffine& aff);

/// Gradients of a loss through apply_exposure.
struct ExposureGrad {
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  Image color;  // dL/dC
};
ExposureGrad apply_exposure_backward(const Image& color, const ExposureAffine& aff, const Image& grad_out);

/// Least-squares affine mapping `source` colors onto `target`
/// (optionally restricted to pixels where mask > 0.5).
ExposureAffine fit_exposure(const Image& source, const Image& target, const Image* mask = nullptr);

}  // namespace hugsim::render
