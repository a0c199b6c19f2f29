#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "multistop/core/errors.hpp"

namespace multistop::numerics {

/// Root of f in [a, b] where f(a), f(b) have opposite signs (or one is zero).
template <class F>
double solve_bracketed(F&& f, double a, double b, int bits = 50, double fa = NAN, double fb = NAN) {
  if (std::isnan(fa)) fa = f(a);
  if (std::isnan(fb)) fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa < 0.0) == (fb < 0.0))
    throw SolverError("root not bracketed on [" + std::to_string(a) + ", " + std::to_string(b) + "]");
  std::uintmax_t iters = 300;
  const auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb,
                                                   boost::math::tools::eps_tolerance<double>(bits),
                                                   iters);
  return 0.5 * (r.first + r.second);
}

/**
 * Expands hi = lo + step, lo + 2 step, ... (geometrically) until pred(hi) holds.
 * Returns the first such hi and the last point where pred failed.
 */
template <class P>
std::pair<double, double> expand_until(P&& pred, double lo, double step, int max_iter = 400) {
  double prev = lo;
  for (int k = 0; k < max_iter; ++k) {
    const double hi = lo + step;
    if (pred(hi)) return {prev, hi};
    prev = hi;
    step *= 2.0;
  }
  throw SolverError("bracket expansion failed");
}

}  // namespace multistop::numerics
