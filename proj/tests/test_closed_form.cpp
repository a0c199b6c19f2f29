#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "multistop/closed_form/closed_form.hpp"
#include "multistop/ode/solver.hpp"
#include "support/oracles.hpp"

using namespace multistop;

namespace {

// H = 2 x^{-2}, v = sqrt(1 - t): u^1 = sqrt(x^2 + 2 (1 - t)).
ClosedFormSolution case1(int m) {
  return build_case(ClosedFormCase::FiniteLower, HFunction::power(2.0, 2.0), VFunction::power(1.0, 1.0, 0.5), m);
}
// H = -x on x < 0, v = 1 / (1 - t): u^1 = -2 / (1 - t).
ClosedFormSolution case2(int m) {
  return build_case(ClosedFormCase::UpperBounded, HFunction::truncated_power(1.0, 1.0),
                    VFunction::power(1.0, 1.0, -1.0), m);
}
// H = e^{-x}, v = ln(1 - t): u^1 = ln(e^x + 1 - t).
ClosedFormSolution case3(int m) {
  return build_case(ClosedFormCase::Translation, HFunction::exponential(1.0, 1.0), VFunction::log(1.0, 1.0), m);
}

}  // namespace

TEST(ClosedForm, FiniteLowerRootsAndPhi) {
  const auto sol = case1(3);
  EXPECT_NEAR(sol.root(1), std::sqrt(2.0), 1e-10);
  for (double x = 1.5; x <= 50.0; x *= 1.1) ASSERT_NEAR(sol.Phi(1, x), std::sqrt(x * x - 2.0), 1e-7) << "x = " << x;
  EXPECT_NEAR(sol.root(2), 1.70, 0.01);
  EXPECT_EQ(sol.root(0), 0.0);
  EXPECT_EQ(sol.Phi(1, sol.root(1)), 0.0);
}

TEST(ClosedForm, FiniteLowerLevelTwoMatchesTheCurveSolver) {
  const auto sol = case1(2);
  const auto fam = solve_curve_family(IntensityModel::frechet(2.0), 2);
  EXPECT_NEAR(fam.u_free(2, 0), sol.root(2), 1e-5);
  for (std::size_t i = 0; i < fam.nx(); i += 5)
    EXPECT_NEAR(fam.u(2, 0, i), eval_u(sol, 2, 0.0, fam.x_grid[i]), 1e-5) << "x = " << fam.x_grid[i];
}

TEST(ClosedForm, UpperBoundedRootsAndPhi) {
  const auto sol = case2(2);
  EXPECT_NEAR(sol.root(1), -2.0, 1e-10);
  EXPECT_NEAR(sol.root(2), oracle::case2_r2(), 1e-8);
  for (double z = -1.99; z < 0.0; z += 0.05) ASSERT_NEAR(sol.Phi(1, z), 2.0 * z / (2.0 + z), 1e-7) << "z = " << z;
  EXPECT_EQ(sol.Phi(1, 0.0), 0.0);
  EXPECT_EQ(sol.root(0), kMinusInf);
}

TEST(ClosedForm, TranslationRootsAndPhi) {
  const auto sol = case3(3);
  EXPECT_NEAR(sol.root(1), 0.0, 1e-10);
  EXPECT_NEAR(sol.root(2), oracle::case3_r2(), 1e-8);
  for (double x = 0.05; x < 20.0; x += 0.37) ASSERT_NEAR(sol.Phi(1, x), x + std::log1p(-std::exp(-x)), 1e-7);
  EXPECT_GT(sol.root(3), sol.root(2));
}

TEST(ClosedForm, EvalUExamples) {
  const auto s1 = case1(1);
  const auto s2 = case2(1);
  const auto s3 = case3(2);
  for (double t : {0.0, 0.3, 0.8}) {
    for (double x : {0.0, 0.5, 2.0}) EXPECT_NEAR(eval_u(s1, 1, t, x), std::sqrt(x * x + 2.0 * (1.0 - t)), 1e-7);
    for (double x : {-3.0, -1.0, -0.2}) EXPECT_NEAR(eval_u(s2, 1, t, x), 1.0 / (1.0 / x - 0.5 * (1.0 - t)), 1e-7);
    EXPECT_NEAR(eval_u(s2, 1, t, kMinusInf), oracle::weibull1_u1(t), 1e-9);
    for (double x : {-2.0, 0.0, 1.5}) EXPECT_NEAR(eval_u(s3, 1, t, x), std::log(std::exp(x) + 1.0 - t), 1e-7);
    EXPECT_NEAR(eval_u(s3, 2, t, kMinusInf), oracle::gumbel_u2(t), 1e-8);
  }
  EXPECT_EQ(eval_u(s2, 1, 0.4, 0.5), 0.5);  // above the support
  EXPECT_EQ(eval_u(s3, 2, 1.0, 0.7), 0.7);
}

TEST(ClosedForm, EvalGammaExamples) {
  const auto s3 = case3(2);
  // gamma^1 = u^1; gamma^2 at the free start is Phi^1(r_2) = r_2 + ln(1 - e^{-r_2}) = -ln(e - 1).
  EXPECT_NEAR(eval_gamma(s3, 1, 0.2, kMinusInf), std::log(0.8), 1e-9);
  EXPECT_NEAR(eval_gamma(s3, 2, 0.0, kMinusInf), -std::log(M_E - 1.0), 1e-8);
  EXPECT_NEAR(eval_gamma(s3, 2, 0.5, kMinusInf), std::log(0.5) - std::log(M_E - 1.0), 1e-8);

  const auto s1 = case1(2);
  const double r2 = s1.root(2);
  EXPECT_NEAR(eval_gamma(s1, 2, 0.0, 0.0), std::sqrt(r2 * r2 - 2.0), 1e-8);
  EXPECT_NEAR(eval_gamma(s1, 2, 0.75, 0.0), 0.5 * std::sqrt(r2 * r2 - 2.0), 1e-8);
  EXPECT_GE(eval_gamma(s1, 2, 0.1, 10.0), 10.0);
}

TEST(ClosedForm, PhiAndPhiInverseRoundTrip) {
  for (const auto& sol : {case1(3), case2(3), case3(3)}) {
    for (int j = 1; j <= 3; ++j) {
      const double r = sol.root(j);
      for (int k = 1; k <= 60; ++k) {
        double x;
        if (sol.kind() == ClosedFormCase::UpperBounded)
          x = r * (1.0 - k / 61.0);  // (r, 0)
        else
          x = r + 0.001 * std::pow(1.2, k);
        const double y = sol.Phi(j, x);
        ASSERT_NEAR(sol.phi(j, y), x, 1e-8 * (1.0 + std::abs(x))) << "j=" << j << " x=" << x;
      }
    }
  }
}

TEST(ClosedForm, RootsZeroTheirFunctionAndIncrease) {
  for (const auto& sol : {case1(3), case2(3), case3(3)}) {
    for (int j = 1; j <= 3; ++j) {
      EXPECT_LE(std::abs(sol.R(j, sol.root(j))), 1e-10) << "j = " << j;
      if (j > 1) {
        EXPECT_GT(sol.root(j), sol.root(j - 1));
      }
    }
  }
}

TEST(ClosedForm, PhiDecreasesWithLevel) {
  for (const auto& sol : {case1(3), case3(3)}) {
    for (double x = sol.root(3) + 0.01; x < sol.root(3) + 5.0; x += 0.1) {
      EXPECT_LE(sol.Phi(3, x), sol.Phi(2, x));
      EXPECT_LE(sol.Phi(2, x), sol.Phi(1, x));
    }
  }
}

TEST(ClosedForm, Errors) {
  EXPECT_THROW(case1(0), ConfigError);
  const auto sol = case1(2);
  EXPECT_THROW(sol.Phi(1, 1.0), DomainError);
  EXPECT_THROW(eval_u(sol, 1, 0.2, -1.0), DomainError);
  EXPECT_THROW(eval_u(sol, 3, 0.2, 1.0), DomainError);
  EXPECT_THROW(eval_gamma(sol, 1, 1.0, 1.0), DomainError);
  EXPECT_THROW(eval_gamma(sol, 0, 0.5, 1.0), DomainError);
  EXPECT_THROW(case2(1).Phi(1, 0.5), DomainError);
}
