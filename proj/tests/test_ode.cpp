#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "multistop/closed_form/closed_form.hpp"
#include "multistop/ode/solver.hpp"
#include "support/oracles.hpp"

using namespace multistop;

namespace {

// Largest |u^j(t_k, x_i) - exact(t_k, x_i)| over nodes with t_k <= t_max, free curve included.
double worst_error(const StoppingCurveFamily& fam, int j, const std::function<double(double, double)>& exact,
                   double t_max = 0.99) {
  double worst = 0.0;
  for (std::size_t k = 0; k < fam.nt() && fam.t_grid[k] <= t_max; ++k) {
    const double t = fam.t_grid[k];
    worst = std::max(worst, std::abs(fam.u_free(j, k) - exact(t, fam.c)));
    for (std::size_t i = 0; i < fam.nx(); ++i) worst = std::max(worst, std::abs(fam.u(j, k, i) - exact(t, fam.x_grid[i])));
  }
  return worst;
}

double gumbel_u1(double t, double x) {
  return x == kMinusInf ? std::log1p(-t) : std::log(std::exp(x) + 1.0 - t);
}

}  // namespace

TEST(SolveCurveFamily, GumbelMatchesAnalyticCurves) {
  const auto fam = solve_curve_family(IntensityModel::gumbel(), 2);
  EXPECT_LE(worst_error(fam, 1, gumbel_u1), 1e-5);
  for (std::size_t k = 0; k < fam.nt() && fam.t_grid[k] <= 0.99; ++k)
    ASSERT_NEAR(fam.u_free(2, k), oracle::gumbel_u2(fam.t_grid[k]), 1e-5) << "t = " << fam.t_grid[k];
  EXPECT_NEAR(eval_curve(fam, 1, 0.0, kMinusInf), 0.0, 1e-6);
  EXPECT_NEAR(eval_curve(fam, 2, 0.0, kMinusInf), oracle::gumbel_u2(0.0), 1e-6);
}

TEST(SolveCurveFamily, FrechetMatchesAnalyticCurve) {
  const auto fam = solve_curve_family(IntensityModel::frechet(2.0), 1);
  EXPECT_EQ(fam.x_grid.front(), 0.0);
  EXPECT_LE(worst_error(fam, 1, [](double t, double x) { return std::sqrt(x * x + 2.0 * (1.0 - t)); }), 1e-5);
  EXPECT_NEAR(fam.u_free(1, 0), std::sqrt(2.0), 1e-6);
}

TEST(SolveCurveFamily, WeibullMatchesAnalyticCurve) {
  const auto fam = solve_curve_family(IntensityModel::weibull(1.0), 1);
  const auto exact = [](double t, double x) {
    if (x >= 0.0) return x;
    return x == kMinusInf ? oracle::weibull1_u1(t) : 1.0 / (1.0 / x - 0.5 * (1.0 - t));
  };
  EXPECT_LE(worst_error(fam, 1, exact), 1e-5);
}

TEST(SolveCurveFamily, InhomogeneousGumbelFollowsTimeChange) {
  // G = t^{-k} e^{-y} is the homogeneous case run on the clock t^q, q = 1 - k.
  for (double kappa : {0.3, -0.3}) {
    const double q = 1.0 - kappa;
    const auto fam = solve_curve_family(IntensityModel::gumbel(kappa), 1);
    const auto exact = [q](double t, double x) {
      const double s = std::pow(t, q);
      return x == kMinusInf ? std::log1p(-s) - std::log(q) : std::log(q * std::exp(x) + 1.0 - s) - std::log(q);
    };
    EXPECT_LE(worst_error(fam, 1, exact, 0.95), 1e-4) << "kappa = " << kappa;
  }
}

TEST(SolveCurveFamily, InhomogeneousModelsAgreeWithClosedForm) {
  SolveSpec spec;
  spec.seed_sensitivity = false;
  for (const auto& model : {IntensityModel::gumbel(0.3), IntensityModel::frechet(3.0, 0.2)}) {
    ASSERT_TRUE(model.closed_form.has_value());
    const auto fam = solve_curve_family(model, 2, spec);
    const auto sol = closed_form_solve(*model.closed_form, 2);
    for (int j = 1; j <= 2; ++j) {
      const double err =
          worst_error(fam, j, [&](double t, double x) { return eval_u(sol, j, t, x); }, 0.95);
      EXPECT_LE(err, 1e-3) << model.family << " level " << j;
    }
  }
}

TEST(SolveCurveFamily, BoundaryAndLevelDominance) {
  const auto fam = solve_curve_family(IntensityModel::frechet(3.0), 3);
  const std::size_t last = fam.nt() - 1;
  EXPECT_EQ(fam.t_grid.front(), 0.0);
  EXPECT_EQ(fam.t_grid[last], 1.0);
  for (int j = 1; j <= 3; ++j) {
    for (std::size_t i = 0; i < fam.nx(); ++i) EXPECT_EQ(fam.u(j, last, i), fam.x_grid[i]);
    for (std::size_t k = 0; k < last; ++k) {
      ASSERT_GE(fam.u_free(j, k), fam.u_free(j - 1, k));
      for (std::size_t i = 0; i < fam.nx(); ++i) {
        ASSERT_GE(fam.u(j, k, i), fam.u(j - 1, k, i) - 1e-12) << "j=" << j << " k=" << k << " i=" << i;
        if (i > 0) {
          ASSERT_GE(fam.u(j, k, i), fam.u(j, k, i - 1));
        }
        if (k > 0) {
          ASSERT_LE(fam.u(j, k, i), fam.u(j, k - 1, i) + 1e-12);
        }
      }
    }
  }
}

TEST(SolveCurveFamily, LevelOneSatisfiesItsDifferentialEquation) {
  // du/dt = -int_u^inf G(t, y) dy, checked by central differences between nodes.
  const auto model = IntensityModel::frechet(3.0, 0.2);
  SolveSpec spec;
  spec.seed_sensitivity = false;
  const auto fam = solve_curve_family(model, 1, spec);
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < fam.nt() - 1; k += 5) {
    const double t0 = fam.t_grid[k - 1], t1 = fam.t_grid[k], t2 = fam.t_grid[k + 1];
    if (t1 < 0.1 || t1 > 0.95) continue;
    for (std::size_t i = 0; i < fam.nx(); i += 4) {
      const double du = (fam.u(1, k + 1, i) - fam.u(1, k - 1, i)) / (t2 - t0);
      const double rhs = -model.tail_integral(t1, fam.u(1, k, i));
      worst = std::max(worst, std::abs(du - rhs) / (1.0 + std::abs(rhs)));
    }
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(SolveCurveFamily, RefiningTheGridReducesTheError) {
  SolveSpec coarse, fine;
  coarse.dtau = 0.08;
  fine.dtau = 0.02;
  coarse.tol = fine.tol = 1.0;  // no automatic refinement
  coarse.seed_sensitivity = fine.seed_sensitivity = false;
  const auto model = IntensityModel::gumbel();
  const double e_coarse = worst_error(solve_curve_family(model, 1, coarse), 1, gumbel_u1);
  const double e_fine = worst_error(solve_curve_family(model, 1, fine), 1, gumbel_u1);
  EXPECT_LT(e_fine, e_coarse);
}

TEST(SolveCurveFamily, DiagnosticsAreReported) {
  const auto fam = solve_curve_family(IntensityModel::gumbel(), 2);
  const auto& d = fam.diagnostics;
  ASSERT_EQ(d.at("levels").size(), 2u);
  for (const auto& L : d.at("levels")) {
    EXPECT_LE(L.at("error_estimate").get<double>(), 1e-6);
    EXPECT_LE(L.at("seed_sensitivity").get<double>(), 1e-5);
    EXPECT_GE(L.at("queries_above_table").get<long>(), 0);
  }
  EXPECT_EQ(d.at("x_grid_size").get<std::size_t>(), fam.nx());
  EXPECT_EQ(d.at("t_grid_size").get<std::size_t>(), fam.nt());
  EXPECT_FALSE(d.at("t_floor_applied").get<bool>());
  EXPECT_EQ(d.at("assumptions").size(), 1u);
  EXPECT_EQ(fam.model_hash.size(), 16u);
  EXPECT_TRUE(solve_curve_family(IntensityModel::gumbel(0.3), 1).diagnostics.at("t_floor_applied").get<bool>());
}

TEST(SolveCurveFamily, Errors) {
  const auto model = IntensityModel::gumbel();
  SolveSpec bad;
  bad.eps = 0.0;
  EXPECT_THROW(solve_curve_family(model, 1, bad), ConfigError);
  EXPECT_THROW(solve_curve_family(model, 0), ConfigError);
  bad = {};
  bad.x_grid = {0.0, -1.0};
  EXPECT_THROW(solve_curve_family(model, 1, bad), ConfigError);
  EXPECT_THROW(IntensityModel::frechet(1.0), ConfigError);  // infinite tail integral
  IntensityModel empty;
  EXPECT_THROW(solve_curve_family(empty, 1), ConfigError);
}

TEST(InvertLevel, RoundTripsOnTheGrid) {
  const auto fam = solve_curve_family(IntensityModel::frechet(2.0), 2);
  for (int j = 1; j <= 2; ++j) {
    const auto inv = invert_level(fam, j);
    for (std::size_t k = 0; k + 1 < fam.nt(); k += 13)
      for (std::size_t i = 1; i < fam.nx(); ++i) {
        const double y = fam.u(j, k, i);
        ASSERT_NEAR(eval_curve(fam, j, fam.t_grid[k], inv.at_node(k, y)), y, 1e-9);
      }
  }
  EXPECT_THROW(invert_level(fam, 3), DomainError);
}

TEST(Thresholds, GumbelExamples) {
  const auto fam = solve_curve_family(IntensityModel::gumbel(), 2);
  const auto th = thresholds_from_family(fam);
  EXPECT_EQ(th.t_grid.size() + 1, fam.nt());
  for (std::size_t k = 0; k < th.nt() && th.t_grid[k] <= 0.99; k += 7) {
    const double t = th.t_grid[k];
    // gamma^1 = u^1; gamma^2 of the free problem solves u^1(t, g) = u^2(t).
    EXPECT_NEAR(th.gamma_free(1, k), std::log1p(-t), 1e-5);
    EXPECT_NEAR(th.gamma_free(2, k), std::log1p(-t) - std::log(M_E - 1.0), 1e-5) << "t = " << t;
    for (std::size_t i = 0; i < th.nx(); ++i) ASSERT_GE(th.gamma(2, k, i), th.x_grid[i]);
  }
}

TEST(Thresholds, FrechetLevelTwoFromClosedForm) {
  const auto fam = solve_curve_family(IntensityModel::frechet(2.0), 2);
  const auto th = thresholds_from_family(fam);
  const auto sol = closed_form_solve(*IntensityModel::frechet(2.0).closed_form, 2);
  // gamma^2(0, 0) = Phi^1(r_2) = sqrt(r_2^2 - 2).
  const double r2 = sol.root(2);
  EXPECT_NEAR(th.gamma_free(2, 0), std::sqrt(r2 * r2 - 2.0), 1e-5);
  EXPECT_NEAR(eval_threshold(th, 2, 0.0, 0.0), eval_gamma(sol, 2, 0.0, 0.0), 1e-5);
}
