#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include <Eigen/Eigenvalues>

#include "hugsim/core/error.hpp"
#include "hugsim/recon/gradcheck.hpp"
#include "hugsim/recon/unicycle.hpp"
#include "hugsim/render/exposure.hpp"
#include "hugsim/render/image_io.hpp"
#include "hugsim/render/rasterizer.hpp"
#include "hugsim/render/sh.hpp"
#include "test_util.hpp"

using namespace hugsim;
using namespace hugsim::render;
using hugsim::scene::Camera;
using hugsim::scene::Gaussian;
using hugsim::scene::GaussianSet;

namespace {

RenderOptions all_modes() {
  RenderOptions o;
  o.modes.color = o.modes.semantic = o.modes.depth = o.modes.alpha = true;
  return o;
}

double max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.same_shape(b));
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

Gaussian solid(const Vec3& mu, double scale, double opacity, const Vec3& rgb, int classes = 3, int cls = 0) {
  Gaussian g;
  g.mu = mu;
  g.scale = Vec3::Constant(scale);
  g.opacity = opacity;
  g.set_base_color(rgb, 0);
  g.sem_logits.assign(static_cast<std::size_t>(classes), 0.0);
  g.sem_logits[static_cast<std::size_t>(cls)] = 4.0;
  return g;
}

GaussianSet random_scene(std::uint64_t seed, int n, int degree = 1, int classes = 4) {
  std::mt19937_64 rng(seed);
  GaussianSet gs;
  for (int i = 0; i < n; ++i) gs.push_back(testutil::random_gaussian(rng, degree, classes));
  return gs;
}

FlowContext shifted_context(const GaussianSet& gs, const Camera& cam, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  FlowContext ctx;
  ctx.camera_t2 = cam;
  ctx.camera_t2.translation += Vec3(0.05, -0.02, 0.0);
  for (const auto& g : gs) ctx.mu_t2.push_back(g.mu + Vec3(n(rng), n(rng), n(rng)));
  return ctx;
}

}  // namespace

TEST_CASE("projection of a centered point lands on the principal point") {
  const auto cam = testutil::front_camera(100, 100, 100);
  Gaussian g = solid(Vec3(0, 0, 5), 0.1, 1, Vec3(1, 0, 0));
  const auto s = project_gaussian(g, cam);
  REQUIRE(s);
  CHECK((s->mu2d - Vec2(50, 50)).norm() < 1e-12);
  CHECK(s->depth == 5.0);
  g.mu = Vec3(0, 0, -1);
  CHECK_FALSE(project_gaussian(g, cam));
  g.mu = Vec3(100, 0, 5);  // far outside the viewport
  CHECK_FALSE(project_gaussian(g, cam));
}

TEST_CASE("projected covariance matches a numeric-Jacobian oracle") {
  const auto cam = testutil::front_camera(200, 160, 150);
  RenderOptions opt;
  // Isotropic Gaussian on the optical axis: (f sigma / z)^2 plus the floor.
  {
    const Gaussian g = solid(Vec3(0, 0, 10), 0.05, 1, Vec3(1, 1, 1));
    const auto s = project_gaussian(g, cam, opt);
    REQUIRE(s);
    const double expect = std::pow(150 * 0.05 / 10, 2);
    CHECK(std::abs(s->cov2d(0, 0) - opt.low_pass - expect) < 0.01 * expect);
    CHECK(std::abs(s->cov2d(1, 1) - opt.low_pass - expect) < 0.01 * expect);
    CHECK(std::abs(s->cov2d(0, 1)) < 1e-12);
  }
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Gaussian g = testutil::random_gaussian(rng, 0, 1);
    const auto s = project_gaussian(g, cam, opt);
    if (!s) continue;
    // Jacobian of the world-to-pixel map by central differences.
    Eigen::Matrix<double, 2, 3> Jn;
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d[k] = 1e-6;
      Jn.col(k) = (*cam.project(g.mu + d) - *cam.project(g.mu - d)) / 2e-6;
    }
    Mat2 oracle = Jn * scene::covariance_3d(g) * Jn.transpose();
    oracle.diagonal().array() += opt.low_pass;
    CHECK((s->cov2d - oracle).norm() < 1e-5 * oracle.norm());
    const Eigen::SelfAdjointEigenSolver<Mat2> es(s->cov2d);
    CHECK(es.eigenvalues().minCoeff() >= opt.low_pass - 1e-12);
  }
}

TEST_CASE("a single opaque splat renders its color, full alpha and its depth") {
  const auto cam = testutil::front_camera(100, 100, 100);
  const GaussianSet gs{solid(Vec3(0, 0, 5), 0.2, 1.0, Vec3(1, 0, 0))};
  for (bool tiled : {true, false}) {
    const auto out = tiled ? rasterize(gs, cam, all_modes()) : render_reference(gs, cam, all_modes());
    CHECK(out.color.at(50, 50, 0) == doctest::Approx(1.0));
    CHECK(out.color.at(50, 50, 1) == 0.0);
    CHECK(out.color.at(50, 50, 2) == 0.0);
    CHECK(out.alpha.at(50, 50) == 1.0);
    CHECK(out.depth.at(50, 50) == 5.0);
  }
}

TEST_CASE("an empty scene renders black with zero alpha") {
  const auto cam = testutil::front_camera(40, 30, 40);
  const auto out = rasterize({}, cam, all_modes());
  for (double v : out.color.data) CHECK(v == 0.0);
  for (double v : out.alpha.data) CHECK(v == 0.0);
  const auto ref = render_reference({}, cam, all_modes());
  CHECK(max_abs_diff(out.color, ref.color) == 0.0);
}

TEST_CASE("hand compositing of two splats on one pixel") {
  auto cam = testutil::front_camera(21, 21, 20);
  cam.intrinsics.cx = cam.intrinsics.cy = 10;  // splat centers land on pixel (10, 10)
  const GaussianSet gs{solid(Vec3(0, 0, 8), 0.5, 1.0, Vec3(0, 0, 1)), solid(Vec3(0, 0, 4), 0.5, 0.5, Vec3(1, 0, 0))};
  const auto ref = render_reference(gs, cam, all_modes());
  const auto out = rasterize(gs, cam, all_modes());
  for (const auto* o : {&ref, &out}) {
    CHECK(o->color.at(10, 10, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(o->color.at(10, 10, 1) == doctest::Approx(0.0));
    CHECK(o->color.at(10, 10, 2) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(o->depth.at(10, 10) == doctest::Approx(0.5 * 4 + 0.5 * 8));
  }
}

TEST_CASE("tiled rasterizer equals the reference path on random scenes") {
  RenderOptions opt = all_modes();
  opt.modes.flow = true;
  opt.early_stop = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cam = testutil::front_camera(32, 32, 30);
    const auto gs = random_scene(seed, 50);
    const auto ctx = shifted_context(gs, cam, seed);
    const auto a = rasterize(gs, cam, opt, &ctx);
    const auto b = render_reference(gs, cam, opt, &ctx);
    CHECK(max_abs_diff(a.color, b.color) <= 1e-6);
    CHECK(max_abs_diff(a.semantic, b.semantic) <= 1e-6);
    CHECK(max_abs_diff(a.depth, b.depth) <= 1e-6);
    CHECK(max_abs_diff(a.flow, b.flow) <= 1e-6);
    CHECK(max_abs_diff(a.alpha, b.alpha) <= 1e-6);
    CHECK(a.contributors == b.contributors);
  }
}

TEST_CASE("tiled output does not depend on tile size or thread count") {
  RenderOptions opt = all_modes();
  const auto cam = testutil::front_camera(48, 40, 40);
  const auto gs = random_scene(77, 120);
  const auto base = rasterize(gs, cam, opt);
  for (int ts : {4, 7, 32}) {
    for (unsigned th : {1u, 3u}) {
      RenderOptions o = opt;
      o.tile_size = ts;
      o.threads = th;
      const auto r = rasterize(gs, cam, o);
      CHECK(r.color.data == base.color.data);
      CHECK(r.semantic.data == base.semantic.data);
    }
  }
}

TEST_CASE("rendering is invariant to input order") {
  const auto cam = testutil::front_camera(32, 32, 30);
  auto gs = random_scene(9, 60);
  const auto a = render_reference(gs, cam, all_modes());
  const auto at = rasterize(gs, cam, all_modes());
  std::mt19937_64 rng(1);
  std::shuffle(gs.begin(), gs.end(), rng);
  const auto b = render_reference(gs, cam, all_modes());
  const auto bt = rasterize(gs, cam, all_modes());
  CHECK(max_abs_diff(a.color, b.color) < 1e-12);
  CHECK(max_abs_diff(a.semantic, b.semantic) < 1e-12);
  CHECK(max_abs_diff(at.color, bt.color) < 1e-12);
  CHECK(max_abs_diff(at.depth, bt.depth) < 1e-12);
}

TEST_CASE("semantic channels sum to alpha under 3D softmax") {
  const auto cam = testutil::front_camera(40, 40, 35);
  const auto gs = random_scene(21, 80);
  const auto out = rasterize(gs, cam, all_modes());
  for (std::size_t p = 0; p < out.alpha.pixel_count(); ++p) {
    double sum = 0;
    for (int c = 0; c < out.semantic.channels; ++c) sum += out.semantic.data[p * out.semantic.channels + c];
    CHECK(std::abs(sum - out.alpha.data[p]) < 1e-5);
    CHECK(out.alpha.data[p] >= 0.0);
    CHECK(out.alpha.data[p] <= 1.0);
  }
}

TEST_CASE("3D softmax bounds a floater's influence, 2D softmax does not") {
  auto cam = testutil::front_camera(21, 21, 20);
  cam.intrinsics.cx = cam.intrinsics.cy = 10;
  // Near floater: low opacity, wrong class with a huge logit.
  Gaussian floater = solid(Vec3(0, 0, 3), 0.4, 0.3, Vec3(1, 1, 1), 3, 0);
  floater.sem_logits = {40.0, 0.0, 0.0};
  // Far opaque surface of the correct class.
  Gaussian surface = solid(Vec3(0, 0, 10), 1.0, 0.99, Vec3(0.5, 0.5, 0.5), 3, 2);
  surface.sem_logits = {0.0, 0.0, 3.0};
  RenderOptions opt = all_modes();
  const auto s3 = rasterize({floater, surface}, cam, opt);
  opt.semantic_mode = SemanticMode::kSoftmax2D;
  const auto s2 = rasterize({floater, surface}, cam, opt);
  const double floater_alpha = 0.3;  // alpha' at the floater center
  const double surface_wrong = 1.0 / (2.0 + std::exp(3.0));
  const double wrong3 = s3.semantic.at(10, 10, 0);
  const double wrong2 = s2.semantic.at(10, 10, 0);
  // The floater adds at most its own alpha to the wrong class.
  CHECK(wrong3 == doctest::Approx(floater_alpha + (1 - floater_alpha) * 0.99 * surface_wrong).epsilon(1e-9));
  CHECK(wrong3 - 0.99 * surface_wrong <= floater_alpha + 1e-12);
  CHECK(wrong2 > floater_alpha + 0.99 * surface_wrong);
  CHECK(wrong2 > 0.5);  // the floater dominates the pixel
}

TEST_CASE("early termination stays within 1e-3 of the full blend") {
  // Dense opaque stack at moderate depth so transmittance actually runs out.
  std::mt19937_64 rng(4);
  GaussianSet gs;
  for (int i = 0; i < 300; ++i) {
    Gaussian g = testutil::random_gaussian(rng, 1, 3, 0.3, 2.0, 6.0);
    g.opacity = 0.9;
    g.scale *= 2.0;
    gs.push_back(g);
  }
  const auto cam = testutil::front_camera(32, 32, 30);
  RenderOptions opt = all_modes();
  const auto early = rasterize(gs, cam, opt);
  opt.early_stop = 0.0;
  const auto full = rasterize(gs, cam, opt);
  int terminated = 0;
  for (std::size_t p = 0; p < early.contributors.size(); ++p) terminated += early.contributors[p] < full.contributors[p];
  CHECK(terminated > 0);
  CHECK(max_abs_diff(early.color, full.color) < 1e-3);
  CHECK(max_abs_diff(early.semantic, full.semantic) < 1e-3);
  CHECK(max_abs_diff(early.depth, full.depth) < 1e-3);
  CHECK(max_abs_diff(early.alpha, full.alpha) < 1e-3);
}

TEST_CASE("flow vectors follow pinhole arithmetic") {
  const auto cam1 = testutil::front_camera(100, 100, 100);
  auto cam2 = cam1;
  cam2.translation = Vec3(-1, 0, 0);  // camera center moves to x = +1
  const GaussianSet pts{solid(Vec3(0, 0, 5), 0.1, 1, Vec3(1, 1, 1))};
  const auto f = flow_vectors(pts, pts, cam1, cam2);
  CHECK((f[0] - Vec2(-20, 0)).norm() < 1e-12);
  CHECK(flow_vectors(pts, pts, cam1, cam1)[0].norm() == 0.0);
  CHECK_THROWS_AS(flow_vectors(pts, GaussianSet{}, cam1, cam2), Error);
}

TEST_CASE("flow of an actor moved by a unicycle step matches projected center differences") {
  const auto cam = testutil::front_camera(64, 64, 60);
  GaussianSet at1{solid(Vec3(0.5, 0.3, 6), 0.3, 1.0, Vec3(1, 1, 1))};
  const auto s = recon::unicycle_step({0.5, 6.0, 0.2}, 0.4, 0.3);
  GaussianSet at2 = at1;
  at2[0].mu = Vec3(s.x, 0.3, s.z);
  const auto f = flow_vectors(at1, at2, cam, cam);
  const Vec2 oracle = *cam.project(at2[0].mu) - *cam.project(at1[0].mu);
  CHECK((f[0] - oracle).norm() < 1e-12);
  RenderOptions opt;
  opt.modes.flow = true;
  FlowContext ctx{cam, {at2[0].mu}};
  const auto out = rasterize(at1, cam, opt, &ctx);
  const auto p = *cam.project(at1[0].mu);
  const int px = static_cast<int>(std::lround(p.x())), py = static_cast<int>(std::lround(p.y()));
  const double a = out.alpha.at(px, py);
  CHECK(out.flow.at(px, py, 0) == doctest::Approx(a * f[0].x()));
  CHECK(out.flow.at(px, py, 1) == doctest::Approx(a * f[0].y()));
}

TEST_CASE("flow mode without a flow context is a configuration error") {
  RenderOptions opt;
  opt.modes.flow = true;
  try {
    rasterize({}, testutil::front_camera(8, 8, 8), opt);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
}

TEST_CASE("exposure affine application and least-squares recovery") {
  Image gray(4, 3, 3, 0.25);
  CHECK(apply_exposure(gray, {}).data == gray.data);
  ExposureAffine twice;
  twice.A = 2 * Mat3::Identity();
  for (double v : apply_exposure(gray, twice).data) CHECK(v == 0.5);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  Image src(32, 32, 3);
  for (auto& v : src.data) v = u(rng);
  for (double gain : {0.8, 0.93, 1.2}) {
    ExposureAffine shift;
    shift.A = gain * Mat3::Identity();
    shift.A(0, 1) = 0.02;
    shift.b = Vec3(0.03, -0.02, 0.01);
    const Image target = apply_exposure(src, shift);
    const auto fit = fit_exposure(src, target);
    CHECK((fit.A - shift.A).cwiseAbs().maxCoeff() <= 0.02 * gain);
    CHECK((fit.b - shift.b).cwiseAbs().maxCoeff() <= 0.02);
  }
  const auto j = twice.to_json();
  CHECK(ExposureAffine::from_json(j).A == twice.A);
}

TEST_CASE("exposure backward matches finite differences") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  Image c(5, 4, 3), w(5, 4, 3);
  for (auto& v : c.data) v = u(rng);
  for (auto& v : w.data) v = u(rng);
  ExposureAffine e;
  for (int i = 0; i < 9; ++i) e.A.data()[i] += 0.1 * u(rng);
  auto loss = [&](const std::vector<double>& p) {
    ExposureAffine q;
    for (int i = 0; i < 9; ++i) q.A.data()[i] = p[static_cast<std::size_t>(i)];
    for (int i = 0; i < 3; ++i) q.b[i] = p[9 + static_cast<std::size_t>(i)];
    Image cc = c;
    for (std::size_t k = 0; k < cc.data.size(); ++k) cc.data[k] = p[12 + k];
    const Image o = apply_exposure(cc, q);
    double s = 0;
    for (std::size_t k = 0; k < o.data.size(); ++k) s += o.data[k] * w.data[k];
    return s;
  };
  std::vector<double> p(e.A.data(), e.A.data() + 9);
  p.insert(p.end(), {e.b[0], e.b[1], e.b[2]});
  p.insert(p.end(), c.data.begin(), c.data.end());
  const auto g = apply_exposure_backward(c, e, w);
  std::vector<double> a(g.A.data(), g.A.data() + 9);
  a.insert(a.end(), {g.b[0], g.b[1], g.b[2]});
  a.insert(a.end(), g.color.data.begin(), g.color.data.end());
  CHECK(recon::gradient_check(loss, p, a).max_rel_error < 1e-6);
}

TEST_CASE("SH basis Jacobian matches finite differences for every degree") {
  std::mt19937_64 rng(12);
  for (int deg = 0; deg <= 3; ++deg) {
    for (int trial = 0; trial < 10; ++trial) {
      Vec4 q = testutil::random_quat(rng);
      const Vec3 d = q.tail<3>().normalized();
      ShBasis b;
      ShBasisJacobian J;
      sh_basis(deg, d, b, &J);
      for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = 1e-6;
        ShBasis bp, bm;
        sh_basis(deg, d + e, bp);
        sh_basis(deg, d - e, bm);
        CHECK(((bp - bm) / 2e-6 - J.col(k)).cwiseAbs().maxCoeff() < 1e-7);
      }
    }
  }
}

TEST_CASE("rasterize-through gradients match finite differences") {
  for (int deg : {1, 3}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto cam = testutil::front_camera(16, 16, 14);
      const auto gs = random_scene(seed * 10 + static_cast<std::uint64_t>(deg), 5, deg, 3);
      RenderOptions opt = all_modes();
      opt.early_stop = 0.0;
      opt.max_mahalanobis2 = 1e12;  // smooth kernel: no support cutoff
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-1, 1);
      RenderOutputGrad w;
      w.color = Image(16, 16, 3);
      w.semantic = Image(16, 16, 3);
      w.depth = Image(16, 16, 1);
      w.alpha = Image(16, 16, 1);
      for (Image* im : {&w.color, &w.semantic, &w.depth, &w.alpha}) {
        for (auto& v : im->data) v = u(rng);
      }
      auto loss = [&](const std::vector<double>& p) {
        const auto out = rasterize(testutil::unflatten(p, gs), cam, opt);
        double s = 0;
        for (std::size_t i = 0; i < out.color.data.size(); ++i) s += out.color.data[i] * w.color.data[i];
        for (std::size_t i = 0; i < out.semantic.data.size(); ++i) s += out.semantic.data[i] * w.semantic.data[i];
        for (std::size_t i = 0; i < out.depth.data.size(); ++i) s += 0.1 * out.depth.data[i] * w.depth.data[i];
        for (std::size_t i = 0; i < out.alpha.data.size(); ++i) s += out.alpha.data[i] * w.alpha.data[i];
        return s;
      };
      RenderState state;
      rasterize(gs, cam, opt, nullptr, &state);
      RenderOutputGrad wd = w;
      for (auto& v : wd.depth.data) v *= 0.1;
      const auto g = rasterize_backward(gs, cam, state, wd);
      std::vector<double> analytic;
      for (std::size_t i = 0; i < gs.size(); ++i) {
        for (int k = 0; k < 3; ++k) analytic.push_back(g.mu[i][k]);
        for (int k = 0; k < 4; ++k) analytic.push_back(g.quat[i][k]);
        for (int k = 0; k < 3; ++k) analytic.push_back(g.scale[i][k]);
        analytic.push_back(g.opacity[i]);
        const std::size_t K = gs[i].sh.size();
        for (std::size_t k = 0; k < K; ++k) analytic.push_back(g.sh[i * K + k]);
        for (int k = 0; k < 3; ++k) analytic.push_back(g.sem[i * 3 + static_cast<std::size_t>(k)]);
      }
      recon::GradCheckOptions gopt;
      gopt.epsilon = 1e-5;
      gopt.abs_floor = 1e-6;
      const auto r = recon::gradient_check(loss, testutil::flatten(gs), analytic, gopt);
      INFO("degree " << deg << " seed " << seed << " worst index " << r.worst_index << " analytic "
                     << r.worst_analytic << " numeric " << r.worst_numeric);
      CHECK(r.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("image export round trips") {
  const auto dir = std::filesystem::temp_directory_path();
  Image c(5, 3, 3);
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = static_cast<double>(i % 256) / 255.0;
  c.data[0] = 1.7;  // clamps on export
  write_ppm(c, dir / "hugsim_t.ppm");
  const auto back = read_ppm(dir / "hugsim_t.ppm");
  CHECK(back.data[0] == 1.0);
  for (std::size_t i = 1; i < c.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(c.data[i]).epsilon(1e-12));

  Image d(7, 4, 1);
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = 0.5 * static_cast<double>(i);
  write_pfm(d, dir / "hugsim_t.pfm");
  CHECK(read_pfm(dir / "hugsim_t.pfm").data == d.data);

  Image f(3, 2, 2);
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = -0.25 * static_cast<double>(i);
  write_pfm(f, dir / "hugsim_f.pfm");
  const auto fb = read_pfm(dir / "hugsim_f.pfm");
  REQUIRE(fb.channels == 3);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 3; ++x) {
      CHECK(fb.at(x, y, 0) == f.at(x, y, 0));
      CHECK(fb.at(x, y, 1) == f.at(x, y, 1));
      CHECK(fb.at(x, y, 2) == 0.0);
    }
  }

  Image s(2, 2, 3);
  s.at(0, 0, 2) = 1;
  s.at(1, 0, 1) = 1;
  s.at(0, 1, 0) = 1;
  s.at(1, 1, 2) = 0.2;
  int w = 0, h = 0;
  write_label_pgm(s, dir / "hugsim_s.pgm");
  const auto labels = read_pgm(dir / "hugsim_s.pgm", w, h);
  CHECK(labels == std::vector<std::uint8_t>{2, 1, 0, 2});
}
