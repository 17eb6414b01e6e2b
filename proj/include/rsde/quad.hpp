#pragma once

#include <cmath>
#include <functional>

#include "rsde/error.hpp"

namespace rsde::quad {

namespace detail {

inline double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive(const std::function<double(double)>& f, double a, double fa,
                       double b, double fb, double m, double fm, double whole,
                       double tol, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(a, m, fa, flm, fm);
  const double right = simpson(m, b, fm, frm, fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson quadrature of f over [a,b] with absolute tolerance tol.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }
  const double m = 0.5 * (a + b);
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(m);
  if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(fm)) {
    fail("NonFiniteIntegrand", "integrand not finite on [a,b]");
  }
  const double whole = detail::simpson(a, b, fa, fm, fb);
  return sign * detail::adaptive(f, a, fa, b, fb, m, fm, whole, tol, 60);
}

// Root of the increasing or decreasing function g on [lo,hi] by bisection.
// The bracket is required to straddle zero; iteration is capped at max_iter.
inline double bisect(const std::function<double(double)>& g, double lo, double hi,
                     double tol = 1e-12, int max_iter = 200) {
  double glo = g(lo);
  double ghi = g(hi);
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  if ((glo > 0.0) == (ghi > 0.0)) {
    fail("BracketInvalid", "bisection endpoints do not straddle zero");
  }
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (gm == 0.0 || hi - lo < tol * (1.0 + std::abs(mid))) return mid;
    if ((gm > 0.0) == (glo > 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Expands [lo,hi] geometrically upward until g changes sign, then bisects.
// Used for inverting monotone increasing functions on [lo, inf).
inline double bisect_expanding(const std::function<double(double)>& g, double lo,
                               double hi0, double tol = 1e-12, int max_iter = 200) {
  double hi = hi0;
  const double glo = g(lo);
  if (glo == 0.0) return lo;
  int tries = 0;
  while ((g(hi) > 0.0) == (glo > 0.0)) {
    hi *= 2.0;
    if (++tries > 200) fail("BracketInvalid", "no sign change found while expanding bracket");
  }
  return bisect(g, lo, hi, tol, max_iter);
}

}  // namespace rsde::quad
