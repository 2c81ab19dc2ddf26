#include "hugsim/metrics/quality.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "hugsim/core/error.hpp"

namespace hugsim::metrics {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  require(a.same_shape(b), ErrorCode::kShapeMismatch,
          std::string(what) + ": image shapes differ (" + std::to_string(a.width) + "x" +
              std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
              std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
              std::to_string(b.channels) + ")");
}

}  // namespace

double psnr(const Image& img, const Image& ref) {
  require_same(img, ref, "psnr");
  if (img.data.empty()) return kPsnrCap;
  double se = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double d = img.data[i] - ref.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(img.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& img, const Image& ref) {
  require_same(img, ref, "ssim");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int w = img.width, h = img.height, ch = img.channels;
  if (img.data.empty()) return 1.0;

  auto window_ssim = [&](int x0, int y0, int size, const std::vector<double>& kernel, int c) {
    double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
    for (int dy = 0; dy < size; ++dy) {
      for (int dx = 0; dx < size; ++dx) {
        const double k = kernel[dy * size + dx];
        const double a = img.at(x0 + dx, y0 + dy, c), b = ref.at(x0 + dx, y0 + dy, c);
        ma += k * a, mb += k * b, saa += k * a * a, sbb += k * b * b, sab += k * a * b;
      }
    }
    const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
    return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  };

  constexpr int size = 11;
  if (w < size || h < size) {
    double total = 0.0;
    for (int c = 0; c < ch; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      const double n = static_cast<double>(w) * h;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double a = img.at(x, y, c), b = ref.at(x, y, c);
          ma += a / n, mb += b / n, saa += a * a / n, sbb += b * b / n, sab += a * b / n;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / ch;
  }

  std::vector<double> g1(size);
  for (int i = 0; i < size; ++i) g1[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
  const double norm = std::accumulate(g1.begin(), g1.end(), 0.0);
  std::vector<double> kernel(size * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) kernel[y * size + x] = g1[y] * g1[x] / (norm * norm);
  }
  double total = 0.0;
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y + size <= h; ++y) {
      for (int x = 0; x + size <= w; ++x) total += window_ssim(x, y, size, kernel, c);
    }
  }
  return total / (static_cast<double>(ch) * (h - size + 1) * (w - size + 1));
}

PoseError pose_error(const Mat3& r_hat, const Vec3& t_hat, const Mat3& r, const Vec3& t) {
  const double c = std::clamp(((r_hat * r.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return {std::acos(c), (t_hat - t).norm()};
}

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = (lo + hi) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](int a, int b) {
    return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
  });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree::search(int node, const Vec3& q, int& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const double d2 = (points_[n.point] - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) best = n.point, best_d2 = d2;
  const double diff = q[n.axis] - points_[n.point][n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

int KdTree::nearest(const Vec3& q, double* distance) const {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_d2);
  if (distance != nullptr) *distance = std::sqrt(best_d2);
  return best;
}

ChamferResult chamfer_semantic(const std::vector<Vec3>& pred, const std::vector<int>& pred_labels,
                               const std::vector<Vec3>& ref, const std::vector<int>& ref_labels) {
  require(pred.size() == pred_labels.size() && ref.size() == ref_labels.size(),
          ErrorCode::kShapeMismatch, "chamfer_semantic: point and label counts differ");
  require(!pred.empty() && !ref.empty(), ErrorCode::kInvalidArgument,
          "chamfer_semantic: point clouds must be non-empty");
  const KdTree pred_tree(pred), ref_tree(ref);
  ChamferResult out;
  for (const auto& p : pred) {
    double d = 0;
    ref_tree.nearest(p, &d);
    out.accuracy += d;
  }
  out.accuracy /= static_cast<double>(pred.size());

  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // label -> (intersection, union)
  for (std::size_t i = 0; i < ref.size(); ++i) {
    double d = 0;
    const int j = pred_tree.nearest(ref[i], &d);
    out.completeness += d;
    const int a = pred_labels[j], b = ref_labels[i];
    if (a == b) {
      ++counts[a].first;
      ++counts[a].second;
    } else {
      ++counts[a].second;
      ++counts[b].second;
    }
  }
  out.completeness /= static_cast<double>(ref.size());
  double sum = 0.0;
  for (const auto& [label, c] : counts) sum += static_cast<double>(c.first) / static_cast<double>(c.second);
  out.miou = sum / static_cast<double>(counts.size());
  return out;
}

double depth_error(const Image& depth, const Image& reference, const std::vector<std::uint8_t>& valid) {
  require_same(depth, reference, "depth_error");
  require(valid.size() == depth.data.size(), ErrorCode::kShapeMismatch,
          "depth_error: mask has " + std::to_string(valid.size()) + " entries, expected " +
              std::to_string(depth.data.size()));
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    const double d = depth.data[i] - reference.data[i];
    se += d * d;
    ++n;
  }
  require(n > 0, ErrorCode::kInvalidArgument, "depth_error: no valid pixels");
  return std::sqrt(se / static_cast<double>(n));
}

}  // namespace hugsim::metrics
