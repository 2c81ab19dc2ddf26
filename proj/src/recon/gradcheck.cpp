#include "hugsim/recon/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hugsim/core/error.hpp"

namespace hugsim::recon {

GradCheckResult gradient_check(const ScalarFn& loss, const std::vector<double>& params,
                               const std::vector<double>& analytic, const GradCheckOptions& opt) {
  require(params.size() == analytic.size(), ErrorCode::kShapeMismatch,
          "gradient check: parameter and gradient sizes differ");
  require(opt.epsilon > 0, ErrorCode::kInvalidArgument, "gradient check: epsilon must be positive");
  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (opt.max_samples > 0 && opt.max_samples < idx.size()) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(opt.max_samples);
    std::sort(idx.begin(), idx.end());
  }
  GradCheckResult r;
  std::vector<double> p = params;
  for (std::size_t i : idx) {
    const double x = p[i];
    p[i] = x + opt.epsilon;
    const double up = loss(p);
    p[i] = x - opt.epsilon;
    const double down = loss(p);
    p[i] = x;
    const double numeric = (up - down) / (2 * opt.epsilon);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.abs_floor});
    if (err > r.max_rel_error || r.checked == 0) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace hugsim::recon
