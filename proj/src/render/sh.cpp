#include "hugsim/render/sh.hpp"

#include "hugsim/scene/gaussian.hpp"

namespace hugsim::render {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

}  // namespace

void sh_basis(int degree, const Vec3& dir, ShBasis& b, ShBasisJacobian* jac) {
  b.setZero();
  if (jac) jac->setZero();
  b[0] = scene::kShC0;
  if (degree < 1) return;
  const double x = dir.x(), y = dir.y(), z = dir.z();
  b[1] = -kC1 * y;
  b[2] = kC1 * z;
  b[3] = -kC1 * x;
  if (jac) {
    auto& J = *jac;
    J(1, 1) = -kC1;
    J(2, 2) = kC1;
    J(3, 0) = -kC1;
  }
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  b[4] = kC2[0] * x * y;
  b[5] = kC2[1] * y * z;
  b[6] = kC2[2] * (2 * zz - xx - yy);
  b[7] = kC2[3] * x * z;
  b[8] = kC2[4] * (xx - yy);
  if (jac) {
    auto& J = *jac;
    J.row(4) << kC2[0] * y, kC2[0] * x, 0;
    J.row(5) << 0, kC2[1] * z, kC2[1] * y;
    J.row(6) << -2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z;
    J.row(7) << kC2[3] * z, 0, kC2[3] * x;
    J.row(8) << 2 * kC2[4] * x, -2 * kC2[4] * y, 0;
  }
  if (degree < 3) return;
  b[9] = kC3[0] * y * (3 * xx - yy);
  b[10] = kC3[1] * x * y * z;
  b[11] = kC3[2] * y * (4 * zz - xx - yy);
  b[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  b[13] = kC3[4] * x * (4 * zz - xx - yy);
  b[14] = kC3[5] * z * (xx - yy);
  b[15] = kC3[6] * x * (xx - 3 * yy);
  if (jac) {
    auto& J = *jac;
    J.row(9) << 6 * kC3[0] * x * y, kC3[0] * (3 * xx - 3 * yy), 0;
    J.row(10) << kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y;
    J.row(11) << -2 * kC3[2] * x * y, kC3[2] * (4 * zz - xx - 3 * yy), 8 * kC3[2] * y * z;
    J.row(12) << -6 * kC3[3] * x * z, -6 * kC3[3] * y * z, kC3[3] * (6 * zz - 3 * xx - 3 * yy);
    J.row(13) << kC3[4] * (4 * zz - 3 * xx - yy), -2 * kC3[4] * x * y, 8 * kC3[4] * x * z;
    J.row(14) << 2 * kC3[5] * x * z, -2 * kC3[5] * y * z, kC3[5] * (xx - yy);
    J.row(15) << kC3[6] * (3 * xx - 3 * yy), -6 * kC3[6] * x * y, 0;
  }
}

Vec3 eval_sh_color(int degree, const double* sh, const Vec3& dir) {
  ShBasis b;
  sh_basis(degree, dir, b);
  Vec3 c(0.5, 0.5, 0.5);
  const int n = scene::sh_coeff_count(degree);
  for (int k = 0; k < n; ++k) {
    for (int ch = 0; ch < 3; ++ch) c[ch] += b[k] * sh[k * 3 + ch];
  }
  return c.cwiseMax(0.0);
}

}  // namespace hugsim::render
