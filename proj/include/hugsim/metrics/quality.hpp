#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hugsim/core/image.hpp"
#include "hugsim/core/math.hpp"

namespace hugsim::metrics {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for signals in [0, 1], capped at kPsnrCap.
double psnr(const Image& img, const Image& ref);

/// Mean SSIM over channels and over the pixels whose 11x11 Gaussian window
/// (sigma 1.5) lies fully inside the image; C1 = 0.01^2, C2 = 0.03^2.
/// Images smaller than the window fall back to one global window.
double ssim(const Image& img, const Image& ref);

struct PoseError {
  double rotation = 0.0;     // rad, in [0, pi]
  double translation = 0.0;  // same unit as t
};

/// e_R = arccos((tr(R_hat R^T) - 1) / 2), e_t = |t_hat - t|.
PoseError pose_error(const Mat3& r_hat, const Vec3& t_hat, const Mat3& r, const Vec3& t);

/// Static 3D KD-tree for nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points);

  /// Index of the nearest point (lowest index on ties); -1 when empty.
  int nearest(const Vec3& q, double* distance = nullptr) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1, right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct ChamferResult {
  double accuracy = 0.0;      // mean distance pred -> ref
  double completeness = 0.0;  // mean distance ref -> pred
  double miou = 0.0;
};

/// Semantic chamfer: reference points take the label of their nearest
/// predicted point; mIoU averages over labels present in either labeling.
ChamferResult chamfer_semantic(const std::vector<Vec3>& pred, const std::vector<int>& pred_labels,
                               const std::vector<Vec3>& ref, const std::vector<int>& ref_labels);

/// RMSE over pixels with valid[i] != 0. Throws kShapeMismatch on size
/// mismatch and kInvalidArgument when no pixel is valid.
double depth_error(const Image& depth, const Image& reference, const std::vector<std::uint8_t>& valid);

}  // namespace hugsim::metrics
