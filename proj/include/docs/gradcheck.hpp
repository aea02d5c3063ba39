#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "docs/tensor.hpp"

namespace docs {

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

inline double gradcheck_rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

/// Central-difference check of `analytic` (dF/dx) for a scalar function F of
/// x, in double precision. `coords` restricts the check to a subset of
/// coordinates; empty means all.
template <typename F>
GradcheckReport finite_diff_gradcheck_report(F&& f, BasicTensor<double> x,
                                             std::span<const double> analytic, double eps = 1e-3,
                                             std::span<const std::size_t> coords = {}) {
  if (analytic.size() != x.size())
    throw shape_error("gradcheck: analytic gradient length " + std::to_string(analytic.size()) +
                      " vs input " + std::to_string(x.size()));
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }
  GradcheckReport r;
  for (std::size_t i : coords) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double fp = f(std::as_const(x));
    x[i] = saved - eps;
    const double fm = f(std::as_const(x));
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = gradcheck_rel_error(analytic[i], numeric);
    if (err > r.max_rel_error || r.checked == 0) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
    ++r.checked;
  }
  return r;
}

template <typename F>
double finite_diff_gradcheck(F&& f, const BasicTensor<double>& x, std::span<const double> analytic,
                             double eps = 1e-3) {
  return finite_diff_gradcheck_report(std::forward<F>(f), x, analytic, eps).max_rel_error;
}

}  // namespace docs
