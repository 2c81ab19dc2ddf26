#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Geometry>

#include "hugsim/core/error.hpp"
#include "hugsim/metrics/driving.hpp"
#include "hugsim/metrics/quality.hpp"

using namespace hugsim;
using namespace hugsim::metrics;

namespace {

const std::vector<sim::Polygon> kLane{{{-10, -2}, {10, -2}, {10, 2}, {-10, 2}}};

StepContext still_ego() {
  StepContext ctx;
  ctx.ego = {sim::BevBox{0, 0, 0, 4.5, 1.9}, 0.0};
  ctx.drivable = &kLane;
  return ctx;
}

/// Numerical Recipes LCG mapped to [0, 1) with 24 bits.
std::vector<double> lcg(std::uint32_t seed, std::size_t n) {
  std::vector<double> out(n);
  std::uint32_t x = seed;
  for (auto& v : out) {
    x = 1664525u * x + 1013904223u;
    v = (x >> 8) / double(1u << 24);
  }
  return out;
}

/// Smooth pattern plus LCG texture; the reference values below were computed
/// offline with scikit-image on the same arrays.
std::pair<Image, Image> lcg_pair(int w, int h, std::uint32_t seed) {
  const auto a = lcg(seed, static_cast<std::size_t>(w * h * 3));
  const auto b = lcg(seed + 1, static_cast<std::size_t>(w * h * 3));
  const double tint[3] = {1.0, 0.8, 0.6};
  Image img(w, h, 3), ref(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3 + c;
        const double base = (0.5 + 0.4 * std::sin(x * 0.3) * std::cos(y * 0.2)) * tint[c];
        const double r = 0.8 * base + 0.2 * a[i];
        ref.data[i] = r;
        img.data[i] = 0.85 * r + 0.15 * b[i];
      }
    }
  }
  return {img, ref};
}

Mat3 yaw(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }

}  // namespace

TEST_CASE("sub-scores: stationary ego in an empty lane") {
  const auto s = sub_scores(still_ego(), {});
  CHECK(s.nc == 1.0);
  CHECK(s.dac == 1.0);
  CHECK(s.ttc == 1.0);
  CHECK(s.com == 1.0);
}

TEST_CASE("sub-scores: a corner 0.1 m outside fails DAC") {
  auto ctx = still_ego();
  // Front-left corner at (2.25, 0.95); the polygon edge sits at z = 0.85.
  const std::vector<sim::Polygon> tight{{{-10, -2}, {10, -2}, {10, 0.85}, {-10, 0.85}}};
  ctx.drivable = &tight;
  CHECK(sub_scores(ctx, {}).dac == 0.0);
  const std::vector<sim::Polygon> loose{{{-10, -2}, {10, -2}, {10, 1.05}, {-10, 1.05}}};
  ctx.drivable = &loose;
  CHECK(sub_scores(ctx, {}).dac == 1.0);
  // A union of two touching polygons covers the box.
  const std::vector<sim::Polygon> split{{{-10, -2}, {0.5, -2}, {0.5, 2}, {-10, 2}},
                                        {{0.4, -2}, {10, -2}, {10, 2}, {0.4, 2}}};
  ctx.drivable = &split;
  CHECK(sub_scores(ctx, {}).dac == 1.0);
}

TEST_CASE("sub-scores: head-on closing at 10 m/s from 8 m") {
  auto ctx = still_ego();
  ctx.ego.speed = 5.0;
  const double gap = 8.0;
  ctx.actors = {{sim::BevBox{4.5 + gap, 0, kPi, 4.5, 1.9}, 5.0}};
  const double t = time_to_collision(ctx, {});
  CHECK(t == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(sub_scores(ctx, {}).ttc == 0.0);
  ctx.actors[0].box.x = 4.5 + 12.0;  // impact at 1.2 s
  CHECK(time_to_collision(ctx, {}) < 0.0);
  CHECK(sub_scores(ctx, {}).ttc == 1.0);
}

TEST_CASE("sub-scores: collisions and comfort limits") {
  auto ctx = still_ego();
  ctx.fg_collision = true;
  CHECK(sub_scores(ctx, {}).nc == 0.0);
  ctx.fg_collision = false;
  ctx.bg_collision = true;
  CHECK(sub_scores(ctx, {}).nc == 0.0);
  ctx.bg_collision = false;

  ctx.accel = 3.0;
  ctx.jerk = -5.0;
  ctx.yaw_rate = 0.95;
  CHECK(sub_scores(ctx, {}).com == 1.0);
  ctx.accel = -3.01;
  CHECK(sub_scores(ctx, {}).com == 0.0);
  ctx.accel = 0;
  ctx.jerk = 5.1;
  CHECK(sub_scores(ctx, {}).com == 0.0);
  ctx.jerk = 0;
  ctx.yaw_rate = -1.0;
  CHECK(sub_scores(ctx, {}).com == 0.0);

  ctx.drivable = nullptr;
  CHECK_THROWS_AS(sub_scores(ctx, {}), Error);
  const std::vector<sim::Polygon> none;
  ctx.drivable = &none;
  CHECK_THROWS_AS(sub_scores(ctx, {}), Error);
}

TEST_CASE("hd_score_step: gate and weighting") {
  const ScoreWeights w;
  CHECK(hd_score_step({1, 1, 1, 1}, w) == 1.0);
  CHECK(hd_score_step({0, 1, 1, 1}, w) == 0.0);
  CHECK(hd_score_step({1, 0, 1, 1}, w) == 0.0);
  CHECK(hd_score_step({1, 1, 0.5, 1}, w) == doctest::Approx(0.642857142857).epsilon(1e-12));
  CHECK(hd_score_step({1, 1, 0.5, 1}, w) == (5 * 0.5 + 2 * 1.0) / 7.0);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    SubScores s{u(rng) < 0.3 ? 0.0 : 1.0, u(rng) < 0.3 ? 0.0 : 1.0, u(rng), u(rng)};
    const double h = hd_score_step(s, w);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    if (s.nc * s.dac == 0.0) CHECK(h == 0.0);
    SubScores better = s;
    better.ttc = std::min(1.0, s.ttc + 0.1);
    CHECK(hd_score_step(better, w) >= h);
  }
}

TEST_CASE("hd_score: hand-built 5-step traces") {
  ScoreTrace t;
  t.steps = {{1, 1, 1, 1}, {1, 1, 0, 1}, {1, 1, 1, 0}, {0, 1, 1, 1}, {1, 0, 1, 1}};
  t.route_completion = 0.75;
  // Per step: 1, 2/7, 5/7, 0, 0. Mean = 2/5, times R_c = 0.3.
  const double manual = 0.75 * ((1.0 + 2.0 / 7.0 + 5.0 / 7.0 + 0.0 + 0.0) / 5.0);
  CHECK(std::abs(hd_score(t) - manual) <= 1e-15);
  CHECK(std::abs(hd_score(t) - 0.3) <= 1e-15);

  ScoreTrace u;
  u.steps = {{1, 1, 0.5, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 0.5, 0}, {1, 1, 0, 0}};
  u.route_completion = 1.0;
  const double per[5] = {4.5 / 7.0, 1.0, 1.0, 2.5 / 7.0, 0.0};
  const double m = (per[0] + per[1] + per[2] + per[3] + per[4]) / 5.0;
  CHECK(std::abs(hd_score(u) - m) <= 1e-15);
  CHECK(hd_score(u) == doctest::Approx(0.6).epsilon(1e-12));

  ScoreTrace perfect;
  perfect.steps.assign(7, SubScores{});
  perfect.route_completion = 1.0;
  CHECK(hd_score(perfect) == 1.0);
  perfect.route_completion = 0.5;
  CHECK(hd_score(perfect) == 0.5);
  CHECK(hd_score(ScoreTrace{}) == 0.0);

  const auto report = score_report(u);
  CHECK(report["per_step"].size() == 5);
  CHECK(report["per_step"][0]["hd"].get<double>() == per[0]);
  CHECK(report["R_c"].get<double>() == 1.0);
  CHECK(report["sub_score_means"]["TTC"].get<double>() == doctest::Approx(0.6));
  CHECK(report["hd_score"].get<double>() == hd_score(u));
}

TEST_CASE("route completion") {
  const sim::Polyline route({{0, 0}, {0, 40}});
  CHECK(route_completion({{0, 0}, {0, 20}, {0, 40}}, route) == 1.0);
  CHECK(route_completion({{0, 0}, {0, 0}}, route) == 0.0);
  CHECK(route_completion({{0, 0}, {0, 20}}, route) == 0.5);
  CHECK(route_completion({{0, 0}, {0, 30}, {0, 10}}, route) == 0.75);  // furthest progress counts
  CHECK(route_completion({{0, 0}, {0, 55}}, route) == 1.0);
  CHECK(route_completion({{0, -5}}, route) == 0.0);
  const sim::Polyline bend({{0, 0}, {10, 0}, {10, 10}});
  CHECK(route_completion({{10.5, 5}}, bend) == doctest::Approx(0.75));
}

TEST_CASE("psnr: cap, closed form and reference values") {
  Image a(8, 8, 3, 0.5);
  CHECK(psnr(a, a) == kPsnrCap);
  Image b(8, 8, 3, 0.6);
  CHECK(psnr(b, a) == doctest::Approx(20.0).epsilon(1e-9));
  const auto [img, ref] = lcg_pair(32, 24, 1);
  CHECK(psnr(img, ref) == doctest::Approx(25.656455246486836).epsilon(1e-9));
  CHECK_THROWS_AS(psnr(a, Image(4, 4, 3)), Error);
}

TEST_CASE("ssim: identity and reference values") {
  const auto [img, ref] = lcg_pair(32, 24, 1);
  CHECK(ssim(ref, ref) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(img, ref) == doctest::Approx(0.8525585562536615).epsilon(1e-9));
  const auto [img2, ref2] = lcg_pair(48, 40, 7);
  CHECK(ssim(img2, ref2) == doctest::Approx(0.8573532108173291).epsilon(1e-9));
  const auto [img3, ref3] = lcg_pair(16, 16, 3);
  CHECK(ssim(img3, ref3) == doctest::Approx(0.8387680861811805).epsilon(1e-9));
  CHECK(psnr(img3, ref3) == doctest::Approx(25.89613441931168).epsilon(1e-9));
  // Symmetric in its arguments.
  CHECK(ssim(ref, img) == doctest::Approx(ssim(img, ref)).epsilon(1e-12));
}

TEST_CASE("pose error: identity, quarter turn, symmetry and axis-angle oracle") {
  const auto zero = pose_error(Mat3::Identity(), Vec3(1, 2, 3), Mat3::Identity(), Vec3(1, 2, 3));
  CHECK(zero.rotation == 0.0);
  CHECK(zero.translation == 0.0);
  const auto q = pose_error(yaw(kPi / 2), Vec3::Zero(), Mat3::Identity(), Vec3(3, 4, 0));
  CHECK(q.rotation == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(q.translation == doctest::Approx(5.0).epsilon(1e-12));

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 axis(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    axis.normalize();
    const double angle = 0.01 + (kPi - 0.02) * u(rng);
    const Mat3 base = Eigen::AngleAxisd(2 * kPi * u(rng), Vec3(u(rng), u(rng), u(rng) + 0.1).normalized())
                          .toRotationMatrix();
    const Mat3 r_hat = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * base;
    const auto e = pose_error(r_hat, Vec3::Zero(), base, Vec3::Zero());
    CHECK(e.rotation == doctest::Approx(angle).epsilon(1e-6));
    CHECK(pose_error(base, Vec3::Zero(), r_hat, Vec3::Zero()).rotation == doctest::Approx(e.rotation).epsilon(1e-12));
  }
  // A numerically non-orthogonal pair whose trace exceeds 3 still yields 0.
  CHECK(pose_error(Mat3::Identity() * (1 + 1e-12), Vec3::Zero(), Mat3::Identity(), Vec3::Zero()).rotation == 0.0);
}

TEST_CASE("chamfer: identity, uniform shift and brute-force oracle") {
  std::vector<Vec3> grid;
  std::vector<int> labels;
  for (int x = 0; x < 6; ++x) {
    for (int y = 0; y < 4; ++y) {
      for (int z = 0; z < 3; ++z) {
        grid.emplace_back(x, y, z);
        labels.push_back((x + y) % 3);
      }
    }
  }
  const auto same = chamfer_semantic(grid, labels, grid, labels);
  CHECK(same.accuracy == 0.0);
  CHECK(same.completeness == 0.0);
  CHECK(same.miou == 1.0);

  const Vec3 shift = Vec3(1, 2, 2).normalized() * 0.3;
  std::vector<Vec3> moved;
  for (const auto& p : grid) moved.push_back(p + shift);
  const auto s = chamfer_semantic(moved, labels, grid, labels);
  CHECK(s.accuracy == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(s.completeness == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(s.miou == 1.0);

  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, 3);
  std::vector<Vec3> pred, ref;
  std::vector<int> pl, rl;
  for (int c = 0; c < 5; ++c) {
    const Vec3 center(5 * n(rng), 5 * n(rng), 5 * n(rng));
    for (int i = 0; i < 80; ++i) {
      pred.push_back(center + 0.5 * Vec3(n(rng), n(rng), n(rng)));
      pl.push_back(lab(rng));
      ref.push_back(center + 0.5 * Vec3(n(rng), n(rng), n(rng)));
      rl.push_back(c % 4);
    }
  }
  auto brute = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to, std::vector<int>* nn) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      int arg = -1;
      for (std::size_t j = 0; j < to.size(); ++j) {
        const double d = (p - to[j]).norm();
        if (d < best) {
          best = d;
          arg = static_cast<int>(j);
        }
      }
      sum += best;
      if (nn) nn->push_back(arg);
    }
    return sum / from.size();
  };
  std::vector<int> nn;
  const double acc = brute(pred, ref, nullptr), comp = brute(ref, pred, &nn);
  // mIoU over labels present in either labeling, with transferred labels.
  double iou_sum = 0.0;
  int present = 0;
  for (int l = 0; l < 4; ++l) {
    int inter = 0, uni = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const bool a = pl[static_cast<std::size_t>(nn[i])] == l, b = rl[i] == l;
      inter += a && b;
      uni += a || b;
    }
    if (uni > 0) {
      iou_sum += double(inter) / uni;
      ++present;
    }
  }
  const auto r = chamfer_semantic(pred, pl, ref, rl);
  CHECK(r.accuracy == doctest::Approx(acc).epsilon(1e-12));
  CHECK(r.completeness == doctest::Approx(comp).epsilon(1e-12));
  CHECK(r.miou == doctest::Approx(iou_sum / present).epsilon(1e-12));

  const KdTree tree(pred);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(tree.nearest(ref[i]) == nn[i]);
  CHECK(KdTree({}).nearest(Vec3::Zero()) == -1);
}

TEST_CASE("depth error: equal, offset and sparse mask") {
  Image d(10, 6, 1, 3.0), ref(10, 6, 1, 3.0);
  std::vector<std::uint8_t> all(60, 1);
  CHECK(depth_error(d, ref, all) == 0.0);
  Image off(10, 6, 1, 4.0);
  CHECK(depth_error(off, ref, all) == 1.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> mask(60);
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    d.data[i] = 10 * u(rng);
    ref.data[i] = 10 * u(rng);
    mask[i] = u(rng) < 0.3;
    if (mask[i]) {
      sum += (d.data[i] - ref.data[i]) * (d.data[i] - ref.data[i]);
      ++count;
    }
  }
  CHECK(depth_error(d, ref, mask) == doctest::Approx(std::sqrt(sum / count)).epsilon(1e-12));
  CHECK_THROWS_AS(depth_error(d, ref, std::vector<std::uint8_t>(60, 0)), Error);
  CHECK_THROWS_AS(depth_error(d, ref, std::vector<std::uint8_t>(5, 1)), Error);
  CHECK_THROWS_AS(depth_error(d, Image(3, 3, 1), all), Error);
}
