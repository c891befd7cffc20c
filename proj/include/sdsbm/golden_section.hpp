#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

namespace sdsbm {

struct ScalarOptimum {
  double x = 0.0;
  double value = 0.0;
  int iterations = 0;
};

/// Golden-section search for the maximum of a unimodal `f` on [lo, hi].
/// Stops once the bracket is narrower than rel_tol * |x| (or abs_tol).
template <typename F>
ScalarOptimum golden_section_maximize(F&& f, double lo, double hi, double rel_tol = 1e-10,
                                      double abs_tol = 0.0, int max_iter = 500) {
  constexpr double inv_phi = 0.61803398874989484820;
  if (hi < lo) std::swap(lo, hi);
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  int it = 0;
  for (; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= std::max(rel_tol * std::abs(mid), abs_tol)) break;
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  return fc >= fd ? ScalarOptimum{c, fc, it} : ScalarOptimum{d, fd, it};
}

}  // namespace sdsbm
