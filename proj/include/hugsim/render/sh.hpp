#pragma once

#include <Eigen/Core>

#include "hugsim/core/math.hpp"

namespace hugsim::render {

inline constexpr int kMaxShCoeffs = 16;

using ShBasis = Eigen::Matrix<double, kMaxShCoeffs, 1>;
using ShBasisJacobian = Eigen::Matrix<double, kMaxShCoeffs, 3>;

/// Real SH basis up to `degree` evaluated at a unit direction. Entries past
/// the degree's coefficient count are zero. `jacobian`, when given, receives
/// d basis / d dir.
void sh_basis(int degree, const Vec3& dir, ShBasis& basis, ShBasisJacobian* jacobian = nullptr);

/// View-dependent color: sum_k basis_k * sh[k*3+c] + 0.5, clamped at zero.
Vec3 eval_sh_color(int degree, const double* sh, const Vec3& dir);

}  // namespace hugsim::render
