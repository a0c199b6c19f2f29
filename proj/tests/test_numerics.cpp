#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "multistop/numerics/gauss_legendre.hpp"
#include "multistop/numerics/parallel.hpp"
#include "multistop/numerics/pchip.hpp"
#include "multistop/numerics/quadrature.hpp"
#include "multistop/numerics/roots.hpp"
#include "multistop/numerics/stats.hpp"

using namespace multistop::numerics;

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const auto rule = make_gauss_rule(8);
  // Degree 15 is the highest exact degree for 8 nodes.
  const double v = rule.integrate([](double x) { return std::pow(x, 15) + 3.0 * x * x; }, 0.0, 2.0);
  EXPECT_NEAR(v, std::pow(2.0, 16) / 16.0 + 8.0, 1e-9);
  EXPECT_NEAR(gauss16().integrate([](double x) { return std::cos(x); }, 0.0, M_PI / 2), 1.0, 1e-14);
}

TEST(Quadrature, SingularEndpointsAndInfiniteRanges) {
  EXPECT_NEAR(integrate_singular([](double t) { return std::pow(t, -0.3); }, 0.0, 1.0).value, 1.0 / 0.7, 1e-10);
  EXPECT_NEAR(integrate_to_infinity([](double y) { return std::exp(-y); }, 1.0).value, std::exp(-1.0), 1e-13);
  EXPECT_NEAR(integrate_from_minus_infinity([](double y) { return std::exp(y); }, 0.5).value, std::exp(0.5), 1e-12);
  EXPECT_NEAR(integrate_smooth([](double y) { return y * y; }, -1.0, 2.0).value, 3.0, 1e-13);
}

TEST(Roots, BracketedSolveAndExpansion) {
  const double r = solve_bracketed([](double x) { return x * x - 2.0; }, 0.0, 2.0, 52);
  EXPECT_NEAR(r, std::sqrt(2.0), 1e-14);
  const auto [lo, hi] = expand_until([](double x) { return std::exp(-x) <= 1e-6; }, 0.0, 0.1);
  EXPECT_LE(std::exp(-hi), 1e-6);
  EXPECT_LT(lo, hi);
}

TEST(Pchip, PreservesMonotonicityAndInterpolates) {
  std::vector<double> x{0.0, 1.0, 1.5, 4.0, 4.1, 7.0};
  std::vector<double> y{0.0, 0.0, 2.0, 2.1, 5.0, 5.0};
  Pchip p(x, y);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_DOUBLE_EQ(p(x[k]), y[k]);
  double prev = p(0.0);
  for (int k = 1; k <= 7000; ++k) {
    const double v = p(k * 1e-3);
    ASSERT_GE(v, prev - 1e-15) << "at " << k * 1e-3;
    prev = v;
  }
  // Flat stretches stay flat: no overshoot between equal values.
  EXPECT_DOUBLE_EQ(p(0.5), 0.0);
  EXPECT_DOUBLE_EQ(p(5.5), 5.0);
}

TEST(Pchip, HermiteSolveInvertsSegment) {
  const double x0 = 1.0, x1 = 2.0, y0 = 0.0, y1 = 3.0, d0 = 1.0, d1 = 4.0;
  for (double target : {0.3, 1.5, 2.9}) {
    const double x = hermite_solve(x0, x1, y0, y1, d0, d1, target);
    EXPECT_NEAR(hermite(x0, x1, y0, y1, d0, d1, x), target, 1e-12);
  }
}

TEST(Pchip, RejectsBadAbscissae) {
  EXPECT_THROW(Pchip({0.0, 0.0}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(Pchip({0.0}, {1.0}), std::invalid_argument);
}

TEST(Stats, MeanAndStandardError) {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = mean_stats(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.variance, 5.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
}

TEST(Stats, PairwiseSumIsOrderStableForLargeInputs) {
  std::vector<double> v(1 << 20, 0.1);
  EXPECT_NEAR(pairwise_sum(v), 0.1 * (1 << 20), 1e-7);
}

TEST(Parallel, EveryIndexVisitedOnceAtAnyThreadCount) {
  for (int threads : {1, 2, 7}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
    EXPECT_EQ(std::accumulate(hits.begin(), hits.end(), 0), 1000);
    EXPECT_EQ(*std::min_element(hits.begin(), hits.end()), 1);
  }
  EXPECT_GE(default_threads(), 1);
}
