#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

namespace testutil {

// Central difference of f around x0. The loss functions are smooth away from
// the probability clamp, so eps = 1e-5 keeps truncation error near 1e-10.
inline double central_diff(const std::function<double(double)>& f, double x0, double eps) {
  return (f(x0 + eps) - f(x0 - eps)) / (2.0 * eps);
}

inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
  return std::fabs(analytic - numeric) / scale;
}

}  // namespace testutil
