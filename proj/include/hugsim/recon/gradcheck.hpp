#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace hugsim::recon {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  std::size_t max_samples = 0;  // 0 = every coordinate
  std::uint64_t seed = 0;       // coordinate sampling
  double abs_floor = 1e-8;      // denominator floor for near-zero gradients
};

using ScalarFn = std::function<double(const std::vector<double>&)>;

/// Central finite differences against `analytic` at `params`. The error for
/// one coordinate is |a - n| / max(|a|, |n|, abs_floor).
GradCheckResult gradient_check(const ScalarFn& loss, const std::vector<double>& params,
                               const std::vector<double>& analytic, const GradCheckOptions& options = {});

}  // namespace hugsim::recon
