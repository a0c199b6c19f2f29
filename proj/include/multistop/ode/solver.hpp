#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multistop/closed_form/closed_form.hpp"
#include "multistop/core/curve_family.hpp"
#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"
#include "multistop/core/hash.hpp"
#include "multistop/core/intensity.hpp"
#include "multistop/numerics/gauss_legendre.hpp"
#include "multistop/numerics/parallel.hpp"
#include "multistop/numerics/pchip.hpp"
#include "multistop/numerics/quadrature.hpp"
#include "multistop/numerics/roots.hpp"

namespace multistop {

/// How u^j(1 - eps, x) is obtained.
enum class SeedMode {
  Asymptotic,  // time-frozen balance of the curve equation at t = 1 - eps
  ClosedForm,  // evaluate the model's closed-form class at 1 - eps (needs a tag)
};

/// Step and grid controls of the curve solver.
struct SolveSpec {
  SeedMode seed_mode = SeedMode::Asymptotic;
  double eps = 1e-8;            // integration starts at t = 1 - eps
  double dtau = 0.01;           // node spacing in tau = -ln(1 - t); one RK4 step spans two nodes
  double dtau_x = 0.05;         // spacing of the automatic x grid along the level-1 curve
  double ext_tau = 5.0;         // extension of the x grid below the level-1 curve
  double top_tol = 1e-12;       // x grid stops once the tail integral over t in [0, 1] is this small (relative)
  double top_growth = 1.2;      // spacing growth above the level-1 curve
  double top_mass_ratio = 0.6;  // least ratio of tail masses at consecutive nodes above it
  int max_top_nodes = 400;
  std::vector<double> x_grid;   // explicit grid overrides the automatic one
  double tol = 1e-6;            // accepted step-doubling discrepancy: tol (1 + |u|)
  int max_refinements = 2;      // halvings of dtau when the discrepancy is too large
  bool seed_sensitivity = true; // also solve with eps/2 and report the change of u^j(0, .)
  double t_floor = 1e-12;       // G is evaluated at max(t, t_floor) when singular at t = 0
  double monotone_tol = 1e-9;   // relative size of a monotonicity violation that is repaired silently
  int threads = 1;
};

namespace ode_detail {

struct TimeGrid {
  int steps = 0;  // RK4 steps of size 2h in the integration variable s
  double h = 0.0;
  std::vector<double> tau, t;  // nodes 0..2 steps, increasing t
  std::vector<double> dtau_ds; // 1 except on the power-law stretch near t = 0
};

// tau = s^p / (p s0^(p-1)) below s0 and s - s0 (1 - 1/p) above, so the integrand
// t^(-kappa) dt/ds stays bounded at t = 0 once p (1 - kappa) >= 1.
inline TimeGrid make_time_grid(double eps, double dtau, double power = 1.0, double s0 = 0.25) {
  const double tau_max = -std::log(eps);
  const double shift = power > 1.0 ? s0 * (1.0 - 1.0 / power) : 0.0;
  const double s_max = tau_max + shift;
  TimeGrid g;
  g.steps = std::max(2, static_cast<int>(std::ceil(s_max / (2.0 * dtau))));
  if (g.steps % 2) ++g.steps;  // the step-doubling pass needs an even count
  g.h = s_max / (2.0 * g.steps);
  const int K = 2 * g.steps;
  g.tau.resize(K + 1);
  g.t.resize(K + 1);
  g.dtau_ds.assign(K + 1, 1.0);
  for (int k = 0; k <= K; ++k) {
    const double s = k == K ? s_max : k * g.h;
    if (power > 1.0 && s < s0) {
      g.tau[k] = s0 / power * std::pow(s / s0, power);
      g.dtau_ds[k] = std::pow(s / s0, power - 1.0);
    } else {
      g.tau[k] = k == K ? tau_max : s - shift;
    }
    g.t[k] = -std::expm1(-g.tau[k]);
  }
  return g;
}

// Stretch exponent for the grid near t = 0: G ~ t^(-kappa) is measured from
// the model and p = 3 / (1 - kappa) keeps the stretched integrand smooth enough.
inline double grid_power(const IntensityModel& model) {
  if (!model.singular_at_zero) return 1.0;
  double kappa = 0.0;
  const double y = model.solve_level(0.5, 1.0, model.lower);
  for (double t : {1e-10, 1e-8, 1e-6}) {
    const double a = model.G(t, y), b = model.G(2.0 * t, y);
    if (a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b))
      kappa = std::max(kappa, std::log(a / b) / std::log(2.0));
  }
  return std::min(12.0, 3.0 / (1.0 - std::clamp(kappa, 0.0, 0.75)));
}

struct Counters {
  long above = 0;
  long below = 0;
};

/// J(t_k, u) = integral of G(t_k, xi(y)) over (u, inf) at one time node.
class NodeTable {
 public:
  const IntensityModel* model = nullptr;
  double t = 0.0;
  bool analytic = false;        // level 1 with a closed tail: J = model tail
  std::vector<double> y, x, d, C;

  double J(double u, Counters& cnt) const {
    if (analytic) return model->tail_integral(t, u);
    const std::size_t n = y.size();
    if (u >= y[n - 1]) {
      ++cnt.above;
      return model->tail_integral(t, u - y[n - 1] + x[n - 1]);
    }
    if (u < y[0]) {
      ++cnt.below;
      return C[0] + (y[0] - u) * model->G(t, x[0]);
    }
    const std::size_t l = numerics::segment_index(y, u);
    return C[l + 1] + partial(l, u, y[l + 1]);
  }

  double partial(std::size_t l, double a, double b) const {
    if (a >= b) return 0.0;
    return numerics::gauss8().integrate(
        [&](double yy) {
          return model->G(t, numerics::hermite(y[l], y[l + 1], x[l], x[l + 1], d[l], d[l + 1], yy));
        },
        a, b);
  }
};

// Keeps (y_i, x_i) pairs with strictly increasing y; returns the number dropped.
inline std::size_t strictly_increasing(const std::vector<double>& yin, const std::vector<double>& xin,
                                       std::vector<double>& y, std::vector<double>& x, double tol) {
  y.clear();
  x.clear();
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < yin.size(); ++i) {
    if (!y.empty() && !(yin[i] > y.back())) {
      if (yin[i] < y.back() - tol * (1.0 + std::abs(y.back())))
        throw SolverError("curve not monotone in x at node " + std::to_string(i));
      ++dropped;
      continue;
    }
    y.push_back(yin[i]);
    x.push_back(xin[i]);
  }
  if (y.size() < 2) throw SolverError("curve is flat in x; cannot invert");
  return dropped;
}

inline NodeTable build_table(const IntensityModel& model, double t, const std::vector<double>& yv,
                             const std::vector<double>& xv, double tol) {
  NodeTable T;
  T.model = &model;
  T.t = t;
  strictly_increasing(yv, xv, T.y, T.x, tol);
  const std::size_t n = T.y.size();
  T.d.resize(n);
  numerics::pchip_slopes(T.y, T.x, T.d);
  T.C.assign(n, 0.0);
  T.C[n - 1] = model.tail_integral(t, T.x[n - 1]);
  for (std::size_t l = n - 1; l-- > 0;) T.C[l] = T.C[l + 1] + T.partial(l, T.y[l], T.y[l + 1]);
  return T;
}

// Gauss-Legendre panels, bisected until the endpoint values agree within a factor of two.
template <class F>
double panels(F& f, double a, double b, double fa, double fb, int depth) {
  const double lo = std::min(fa, fb), hi = std::max(fa, fb);
  if (depth == 0 || hi == 0.0 || (lo > 0.0 && hi <= 2.0 * lo)) return numerics::gauss16().integrate(f, a, b);
  const double mid = 0.5 * (a + b);
  const double fm = f(mid);
  return panels(f, a, mid, fa, fm, depth - 1) + panels(f, mid, b, fm, fb, depth - 1);
}

// Solves integral_L^u dz / J(z) = eps for u > L (L may be -inf).
template <class Jfn>
double seed(Jfn&& J, double L, double eps) {
  auto inv = [&](double z) {
    const double j = J(z);
    return j > 0.0 ? 1.0 / j : kPlusInf;
  };
  auto F = [&](double u) {
    if (L == kMinusInf) return numerics::integrate_from_minus_infinity(inv, u, 1e-10).value;
    const double fu = inv(u);
    if (!std::isfinite(fu)) return kPlusInf;
    return panels(inv, L, u, inv(L), fu, 50);
  };
  auto G = [&](double u) { return F(u) - eps; };
  double lo, hi;
  if (L == kMinusInf) {
    hi = 0.0;
    for (double step = 1.0; G(hi) < 0.0; step *= 2.0) hi += step;
    lo = std::min(hi, 0.0) - 1.0;
    for (double step = 1.0; G(lo) > 0.0; step *= 2.0) {
      lo -= step;
      if (lo < -1e300) throw SolverError("seed bracket failed");
    }
  } else {
    lo = L;
    if (!(J(L) > 0.0)) return L;  // nothing above L: the curve stays flat
    const double j0 = J(L + 1e-9 * (1.0 + std::abs(L)));
    double step = std::isfinite(j0) && j0 > 0.0 ? 0.5 * eps * j0 : 1e-12 * (1.0 + std::abs(L));
    step = std::max(step, 1e-15 * (1.0 + std::abs(L)));
    hi = L + step;
    // Past the support of G the integral is infinite: pull hi back toward lo.
    for (int guard = 0;; ++guard) {
      if (guard > 2000) throw SolverError("seed bracket failed");
      const double v = G(hi);
      if (!std::isfinite(v)) {
        hi = 0.5 * (lo + hi);
        continue;
      }
      if (v >= 0.0) break;
      lo = hi;
      step *= 2.0;
      hi = L + step;
    }
  }
  return numerics::solve_bracketed(G, lo, hi, 48);
}

struct Trajectory {
  std::vector<double> u;       // all nodes, fine pass
  double coarse0 = 0.0;        // u at node 0 from the step-doubled pass
  double max_diff = 0.0;       // largest |fine - coarse| / (1 + |u|) over shared nodes
  Counters cnt;
};

// Fixed-step RK4 in s from node 2 steps down to 0, with dense output on odd nodes.
template <class Jk>
Trajectory integrate(const TimeGrid& g, Jk&& J, double u_seed, bool coarse) {
  const int K = 2 * g.steps;
  Trajectory tr;
  tr.u.assign(K + 1, 0.0);
  auto f = [&](int k, double u) {
    if (g.dtau_ds[k] == 0.0) return 0.0;
    const double v = -std::exp(-g.tau[k]) * g.dtau_ds[k] * J(k, u, tr.cnt);
    if (!std::isfinite(v))
      throw SolverError("intensity integral diverges above u = " + std::to_string(u) + " at t = " +
                        std::to_string(g.t[k]) + " (boundedness condition violated?)");
    return v;
  };
  const double H = -2.0 * g.h;
  double u = u_seed;
  tr.u[K] = u;
  double fu = f(K, u);
  std::vector<double> fvals(K + 1, 0.0);
  fvals[K] = fu;
  for (int s = g.steps - 1; s >= 0; --s) {
    const int k = 2 * s;
    const double k1 = fu;
    const double k2 = f(k + 1, u + 0.5 * H * k1);
    const double k3 = f(k + 1, u + 0.5 * H * k2);
    const double k4 = f(k, u + H * k3);
    const double un = u + H / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double fn = f(k, un);
    tr.u[k + 1] = 0.5 * (u + un) - 0.25 * g.h * (k1 - fn);
    tr.u[k] = un;
    fvals[k] = fn;
    u = un;
    fu = fn;
  }
  if (coarse) {
    const double Hc = -4.0 * g.h;
    double uc = u_seed;
    double fc = fvals[K];
    for (int s = g.steps / 2 - 1; s >= 0; --s) {
      const int k = 4 * s;
      const double k1 = fc;
      const double k2 = f(k + 2, uc + 0.5 * Hc * k1);
      const double k3 = f(k + 2, uc + 0.5 * Hc * k2);
      const double k4 = f(k, uc + Hc * k3);
      uc = uc + Hc / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      fc = f(k, uc);
      tr.max_diff = std::max(tr.max_diff, std::abs(uc - tr.u[k]) / (1.0 + std::abs(tr.u[k])));
    }
    tr.coarse0 = uc;
  }
  return tr;
}

struct LevelResult {
  GridSurface surface;       // nodes 0..K (t = 1 is appended by the caller)
  double error_estimate = 0.0;  // scaled like Trajectory::max_diff
  Counters cnt;
  long repaired = 0;
};

// The guarantee-free level-1 curve from the model tail alone; used to design the x grid.
inline std::vector<double> free_level1(const IntensityModel& model, const TimeGrid& g, double t_floor) {
  auto tt = [&](int k) { return model.singular_at_zero ? std::max(g.t[k], t_floor) : g.t[k]; };
  const int K = 2 * g.steps;
  const double u0 = seed([&](double z) { return model.tail_integral(tt(K), z); }, model.lower, 1.0 - g.t[K]);
  auto J = [&](int k, double u, Counters&) { return model.tail_integral(tt(k), u); };
  return integrate(g, J, u0, false).u;
}

inline std::vector<double> auto_x_grid(const IntensityModel& model, const SolveSpec& spec) {
  const TimeGrid gx = make_time_grid(spec.eps, spec.dtau_x, grid_power(model));
  std::vector<double> core = free_level1(model, gx, spec.t_floor);
  std::sort(core.begin(), core.end());
  std::vector<double> g;
  for (double v : core)
    if (g.empty() || v > g.back() * (1.0 + 1e-12) + 1e-300 + 1e-12 * std::abs(g.back()))
      if (g.empty() || v > g.back()) g.push_back(v);
  if (g.size() < 3) throw SolverError("level-1 curve is too flat to design an x grid");
  const double c = model.lower;
  const int n_ext = static_cast<int>(std::ceil(spec.ext_tau / spec.dtau_x));
  // Downward: continue the ratio of consecutive spacings.
  std::vector<double> below;
  {
    double d = g[1] - g[0];
    const double rho = d / (g[2] - g[1]);
    double x = g[0];
    for (int k = 0; k < n_ext; ++k) {
      d *= rho;
      double nx = x - d;
      if (std::isfinite(c) && !(nx > c)) break;
      below.push_back(nx);
      x = nx;
    }
    if (std::isfinite(c)) below.push_back(c);
  }
  std::reverse(below.begin(), below.end());
  // Upward until the tail mass over the whole horizon is negligible; above
  // that the curves are shifts of the identity.
  std::vector<double> above;
  {
    const std::size_t n = g.size();
    double d = g[n - 1] - g[n - 2];
    const double rho = d / (g[n - 2] - g[n - 3]);
    const double grow = std::max(rho, 1.0) * spec.top_growth;
    double x = g[n - 1];
    auto mass = [&](double xx) {
      if (model.time_homogeneous) return model.tail_integral(0.5, xx);
      return numerics::integrate_singular(
                 [&](double t) { return model.tail_integral(std::max(t, spec.t_floor), xx); }, 0.0, 1.0, 1e-8)
          .value;
    };
    for (int k = 0; k < spec.max_top_nodes; ++k) {
      const double mx = mass(x);
      if (mx <= spec.top_tol * std::max(1.0, std::abs(x))) break;
      // The step also may not shrink the tail mass by more than top_mass_ratio.
      d *= grow;
      const double goal = spec.top_mass_ratio * mx;
      if (mass(x + d) < goal) {
        double lo = 0.0, hi = d;
        for (int it = 0; it < 40; ++it) (mass(x + 0.5 * (lo + hi)) < goal ? hi : lo) = 0.5 * (lo + hi);
        d = std::max(lo, 1e-12 * (1.0 + std::abs(x)));
      }
      x += d;
      above.push_back(x);
    }
  }
  std::vector<double> out = below;
  out.insert(out.end(), g.begin(), g.end());
  out.insert(out.end(), above.begin(), above.end());
  std::vector<double> clean;
  for (double v : out)
    if (clean.empty() || v > clean.back()) clean.push_back(v);
  return clean;
}

inline void validate_grid(const std::vector<double>& xg, double c) {
  if (xg.size() < 3) throw ConfigError("x grid needs at least three nodes");
  for (std::size_t i = 0; i < xg.size(); ++i) {
    if (!std::isfinite(xg[i])) throw ConfigError("x grid must be finite");
    if (i > 0 && !(xg[i] > xg[i - 1])) throw ConfigError("x grid must be strictly increasing");
  }
  if (std::isfinite(c) && xg.front() != c) throw ConfigError("x grid must start at the lower boundary c");
}

// Integrates level j given level j-1 (nullptr for j = 1) on a fixed time grid and x grid.
inline LevelResult solve_level(const IntensityModel& model, int j, const TimeGrid& g, const std::vector<double>& xg,
                               const GridSurface* prev, const SolveSpec& spec,
                               const ClosedFormSolution* cf = nullptr) {
  const int K = 2 * g.steps;
  const std::size_t nx = xg.size();
  const double c = model.lower;
  auto tt = [&](int k) { return model.singular_at_zero ? std::max(g.t[k], spec.t_floor) : g.t[k]; };
  std::vector<NodeTable> tables(K + 1);
  const bool analytic = j == 1 && static_cast<bool>(model.tail);
  numerics::parallel_for(static_cast<std::size_t>(K + 1), spec.threads, [&](std::size_t k) {
    if (analytic) {
      tables[k].model = &model;
      tables[k].t = tt(static_cast<int>(k));
      tables[k].analytic = true;
      return;
    }
    std::vector<double> yv(nx);
    for (std::size_t i = 0; i < nx; ++i) yv[i] = prev ? prev->values[k * nx + i] : xg[i];
    tables[k] = build_table(model, tt(static_cast<int>(k)), yv, xg, spec.monotone_tol);
  });
  auto J = [&](int k, double u, Counters& cnt) { return tables[k].J(u, cnt); };

  // Trajectory 0 is guarantee-free, 1..nx follow the grid.
  const std::size_t ntr = nx + 1;
  std::vector<Trajectory> trs(ntr);
  const double eps = 1.0 - g.t[K];
  const double yc = prev ? prev->free[K] : c;
  numerics::parallel_for(ntr, spec.threads, [&](std::size_t r) {
    const double x = r == 0 ? c : xg[r - 1];
    const double L = join(x, yc);
    Counters scratch;
    const double u0 = cf ? eval_u(*cf, j, TimePoint(g.t[K]), x == kMinusInf ? Guarantee::minus_infinity() : Guarantee(x))
                         : seed([&](double z) { return tables[K].J(z, scratch); }, L, eps);
    trs[r] = integrate(g, J, u0, true);
  });

  LevelResult res;
  res.surface.values.assign(static_cast<std::size_t>(K + 1) * nx, 0.0);
  res.surface.free.assign(K + 1, 0.0);
  for (std::size_t r = 0; r < ntr; ++r) {
    const auto& tr = trs[r];
    for (int k = 0; k <= K; ++k) {
      if (r == 0) res.surface.free[k] = tr.u[k];
      else res.surface.values[k * nx + (r - 1)] = tr.u[k];
    }
    res.error_estimate = std::max(res.error_estimate, tr.max_diff);
    res.cnt.above += tr.cnt.above;
    res.cnt.below += tr.cnt.below;
  }
  if (std::isfinite(c))
    for (int k = 0; k <= K; ++k) res.surface.free[k] = res.surface.values[k * nx];

  // Monotonicity: in x, in t (nonincreasing), across levels, and u >= x.
  auto fix = [&](double& v, double floor_value, const char* what, int k, std::size_t i) {
    if (v >= floor_value) return;
    if (v < floor_value - spec.monotone_tol * (1.0 + std::abs(floor_value)))
      throw SolverError(std::string("non-monotone curve (") + what + ") at level " + std::to_string(j) +
                        ", t = " + std::to_string(g.t[k]) + ", node " + std::to_string(i) + ": " +
                        std::to_string(v) + " < " + std::to_string(floor_value));
    v = floor_value;
    ++res.repaired;
  };
  for (int k = K; k >= 0; --k) {
    double& fr = res.surface.free[k];
    if (prev) fix(fr, prev->free[k], "level", k, 0);
    if (k < K) fix(fr, res.surface.free[k + 1], "time", k, 0);
    for (std::size_t i = 0; i < nx; ++i) {
      double& v = res.surface.values[k * nx + i];
      fix(v, xg[i], "u >= x", k, i);
      if (prev) fix(v, prev->values[k * nx + i], "level", k, i);
      if (k < K) fix(v, res.surface.values[(k + 1) * nx + i], "time", k, i);
      fix(v, i == 0 ? fr : res.surface.values[k * nx + i - 1], "x", k, i);
    }
  }
  return res;
}

struct FamilySolve {
  TimeGrid grid;
  std::vector<LevelResult> levels;
};

inline FamilySolve solve_all(const IntensityModel& model, int m, const std::vector<double>& xg, double eps,
                             double dtau, const SolveSpec& spec) {
  FamilySolve fs;
  fs.grid = make_time_grid(eps, dtau, grid_power(model));
  std::optional<ClosedFormSolution> cf;
  if (spec.seed_mode == SeedMode::ClosedForm) {
    if (!model.closed_form) throw ConfigError("closed-form seeding needs a model with a closed-form class");
    cf = closed_form_solve(*model.closed_form, m);
  }
  for (int j = 1; j <= m; ++j)
    fs.levels.push_back(solve_level(model, j, fs.grid, xg, j == 1 ? nullptr : &fs.levels.back().surface, spec,
                                    cf ? &*cf : nullptr));
  return fs;
}

}  // namespace ode_detail

/**
 * Solves du^j/dt = -int_{u^j}^inf G(t, xi^{j-1}(t, y)) dy, u^j(1, x) = x for j = 1..m.
 *
 * Levels are integrated in order, each backward from t = 1 - eps on a grid
 * uniform in tau = -ln(1 - t), using tables of level j-1's inverse at every
 * node. Diagnostics record step-doubling errors, seed sensitivity, and how
 * often a query fell outside the tables.
 */
inline StoppingCurveFamily solve_curve_family(const IntensityModel& model, int m, const SolveSpec& spec = {}) {
  if (m < 1) throw ConfigError("number of stops must be positive");
  if (!(spec.eps > 0.0 && spec.eps < 0.5)) throw ConfigError("eps must lie in (0, 0.5)");
  if (!(spec.dtau > 0.0) || !(spec.dtau_x > 0.0)) throw ConfigError("grid spacings must be positive");
  if (!model.G) throw ConfigError("intensity model has no G");

  std::vector<double> xg = spec.x_grid.empty() ? ode_detail::auto_x_grid(model, spec) : spec.x_grid;
  if (!spec.x_grid.empty() && std::isfinite(model.lower) && xg.front() > model.lower)
    xg.insert(xg.begin(), model.lower);
  ode_detail::validate_grid(xg, model.lower);

  double dtau = spec.dtau;
  ode_detail::FamilySolve fs;
  int refinements = 0;
  for (;; ++refinements) {
    fs = ode_detail::solve_all(model, m, xg, spec.eps, dtau, spec);
    bool ok = true;
    for (const auto& L : fs.levels) ok = ok && L.error_estimate <= spec.tol;
    if (ok || refinements >= spec.max_refinements) break;
    dtau *= 0.5;
  }

  StoppingCurveFamily fam;
  fam.c = model.lower;
  fam.t_grid = fs.grid.t;
  fam.t_grid.push_back(1.0);
  fam.x_grid = xg;
  fam.model = model.to_json();
  fam.model_hash = config_hash(fam.model);
  const std::size_t nx = xg.size();
  nlohmann::json diag_levels = nlohmann::json::array();
  std::vector<double> sens(m, 0.0);
  if (spec.seed_sensitivity) {
    const auto half = ode_detail::solve_all(model, m, xg, 0.5 * spec.eps, dtau, spec);
    for (int j = 0; j < m; ++j) {
      const auto& a = fs.levels[j].surface;
      const auto& b = half.levels[j].surface;
      double d = std::abs(a.free[0] - b.free[0]);
      for (std::size_t i = 0; i < nx; ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
      sens[j] = d;
    }
  }
  for (int j = 0; j < m; ++j) {
    auto& L = fs.levels[j];
    GridSurface s = std::move(L.surface);
    for (std::size_t i = 0; i < nx; ++i) s.values.push_back(xg[i]);
    s.free.push_back(model.lower);
    fam.levels.push_back(std::move(s));
    diag_levels.push_back({{"j", j + 1},
                           {"error_estimate", L.error_estimate},
                           {"seed_sensitivity", spec.seed_sensitivity ? nlohmann::json(sens[j]) : nlohmann::json()},
                           {"queries_above_table", L.cnt.above},
                           {"queries_below_table", L.cnt.below},
                           {"repaired_monotonicity", L.repaired}});
  }
  nlohmann::json assumptions = nlohmann::json::array();
  if (model.lower == kMinusInf && m >= 2)
    assumptions.push_back("uniqueness of the curve equation's solution is assumed, not verified, for c = -inf");
  fam.diagnostics = {{"levels", diag_levels},
                     {"eps", spec.eps},
                     {"dtau", dtau},
                     {"refinements", refinements},
                     {"t_floor_applied", model.singular_at_zero},
                     {"x_grid_size", nx},
                     {"t_grid_size", fam.t_grid.size()},
                     {"assumptions", assumptions}};
  return fam;
}

/// xi^j(t_k, .) at every node t_k < 1 as monotone interpolants of u^j(t_k, .).
struct InverseLevel {
  int j = 0;
  double c = kMinusInf;
  std::vector<double> t_grid;
  std::vector<std::vector<double>> y, x, d;  // per node
  std::vector<double> floor;                 // u^j(t_k, c)
  long dropped = 0;

  /// xi^j at node k; below the table it returns c (or the first node, flagged by the caller).
  double at_node(std::size_t k, double yq) const {
    if (j == 0) return yq;
    const auto& Y = y[k];
    const auto& X = x[k];
    if (yq >= Y.back()) return X.back() + (yq - Y.back());
    if (yq <= floor[k]) return c;
    if (yq < Y.front()) return X.front();
    const std::size_t l = numerics::segment_index(Y, yq);
    return numerics::hermite(Y[l], Y[l + 1], X[l], X[l + 1], d[k][l], d[k][l + 1], yq);
  }
};

/**
 * Inverse of u^j(t, .) tabulated from a solved family. Nodes whose values are
 * numerically indistinguishable from their neighbour are merged; a decrease
 * raises SolverError.
 */
inline InverseLevel invert_level(const StoppingCurveFamily& fam, int j) {
  if (j < 0 || j > fam.m()) throw DomainError("inverse level out of range");
  InverseLevel inv;
  inv.j = j;
  inv.c = fam.c;
  const std::size_t K = fam.nt() - 1;  // exclude t = 1
  inv.t_grid.assign(fam.t_grid.begin(), fam.t_grid.begin() + static_cast<long>(K));
  if (j == 0) return inv;
  const std::size_t nx = fam.nx();
  inv.y.resize(K);
  inv.x.resize(K);
  inv.d.resize(K);
  inv.floor.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> yv(nx);
    for (std::size_t i = 0; i < nx; ++i) yv[i] = fam.u(j, k, i);
    inv.dropped += static_cast<long>(ode_detail::strictly_increasing(yv, fam.x_grid, inv.y[k], inv.x[k], 1e-9));
    inv.d[k].resize(inv.y[k].size());
    numerics::pchip_slopes(inv.y[k], inv.x[k], inv.d[k]);
    inv.floor[k] = fam.u_free(j, k);
  }
  return inv;
}

/**
 * γ^j(t_k, x_i) = ξ^{j-1}(t_k, u^j(t_k, x_i)) on the family's grid (t < 1).
 * Enforces γ >= x and monotonicity in x; where u^j and u^{j-1} agree within
 * tol, γ = x.
 */
inline ThresholdFamily thresholds_from_family(const StoppingCurveFamily& fam, double tol = 1e-12) {
  ThresholdFamily th;
  th.c = fam.c;
  th.x_grid = fam.x_grid;
  th.model_hash = fam.model_hash;
  const std::size_t K = fam.nt() - 1;
  th.t_grid.assign(fam.t_grid.begin(), fam.t_grid.begin() + static_cast<long>(K));
  const std::size_t nx = fam.nx();
  long below = 0;
  for (int j = 1; j <= fam.m(); ++j) {
    const InverseLevel inv = invert_level(fam, j - 1);
    GridSurface s;
    s.values.resize(K * nx);
    s.free.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      auto gam = [&](double x, double uj, double ujm1) {
        if (uj - ujm1 <= tol * (1.0 + std::abs(uj))) return x;
        if (j > 1 && uj < inv.y[k].front() && uj > inv.floor[k]) ++below;
        return join(inv.at_node(k, uj), x);
      };
      s.free[k] = gam(fam.c, fam.u_free(j, k), fam.u_free(j - 1, k));
      double run = s.free[k];
      for (std::size_t i = 0; i < nx; ++i) {
        const double x = fam.x_grid[i];
        run = join(run, gam(x, fam.u(j, k, i), fam.u(j - 1, k, i)));
        s.values[k * nx + i] = run;
      }
    }
    th.levels.push_back(std::move(s));
  }
  th.diagnostics = {{"inverse_queries_below_table", below}};
  return th;
}

}  // namespace multistop
