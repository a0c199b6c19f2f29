#pragma once

#include <cmath>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "multistop/core/errors.hpp"

namespace multistop::numerics {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive Gauss-Kronrod on a finite interval; integrand must be smooth inside.
template <class F>
QuadResult integrate_smooth(F&& f, double a, double b, double tol = 1e-12) {
  if (a == b) return {};
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, tol, &err);
  return {v, err};
}

/// Double-exponential rule on a finite interval; tolerates endpoint singularities.
template <class F>
QuadResult integrate_singular(F&& f, double a, double b, double tol = 1e-12) {
  if (a == b) return {};
  thread_local boost::math::quadrature::tanh_sinh<double> rule(12);
  double err = 0.0, l1 = 0.0;
  // Shifted so abscissae near the left end keep full precision; rounding onto a
  // singular endpoint contributes nothing.
  const double v = rule.integrate(
      [&](double w) {
        const double y = f(a + w);
        return std::isfinite(y) ? y : 0.0;
      },
      0.0, b - a, tol, &err, &l1);
  return {v, err};
}

/// Integral over [a, inf).
template <class F>
QuadResult integrate_to_infinity(F&& f, double a, double tol = 1e-12) {
  thread_local boost::math::quadrature::exp_sinh<double> rule(12);
  double err = 0.0, l1 = 0.0;
  const double v = rule.integrate(
      [&](double w) {
        const double y = f(a + w);
        return std::isfinite(y) ? y : 0.0;
      },
      0.0,
                                  std::numeric_limits<double>::infinity(), tol, &err, &l1);
  return {v, err};
}

/// Integral over (-inf, b].
template <class F>
QuadResult integrate_from_minus_infinity(F&& f, double b, double tol = 1e-12) {
  return integrate_to_infinity([&](double w) { return f(2.0 * b - w); }, b, tol);
}

}  // namespace multistop::numerics
