#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "multistop/core/discrete_model.hpp"
#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"
#include "multistop/core/hash.hpp"
#include "multistop/core/result.hpp"
#include "multistop/numerics/gauss_legendre.hpp"
#include "multistop/numerics/parallel.hpp"
#include "multistop/numerics/pchip.hpp"

namespace multistop {

/// Quadrature settings of the backward induction.
struct QuadSpec {
  int nodes = 64;            // Gauss-Legendre nodes on the mapped quantile interval
  double map_power = 4.0;    // endpoint clustering of the quantile map
  // Accepted |E_N - E_{N/2}| relative to max(1, |E|). This measures the coarse
  // rule, so the N-node error is usually far smaller.
  double tolerance = 1e-5;
  int threads = 1;
};

/**
 * W^j_i(x) for j = 1..m and i = 0..n-j, tabulated on a shared x grid plus the
 * guarantee-free column x = -inf. W^0 and the anchors W^j_{n-j+1} are the
 * identity and are not stored.
 */
class ThresholdTable {
 public:
  struct Column {
    double free = kMinusInf;
    std::vector<double> w;
    std::vector<double> slope;
  };

  long n = 0;
  int m = 0;
  std::vector<double> x_grid;
  bool exact = false;            // finite support: sums are exact at grid nodes
  double error_estimate = 0.0;   // largest quadrature discrepancy seen
  std::string model_hash;
  std::vector<std::vector<Column>> columns;  // columns[j-1][i]

  bool is_identity(int j, long i) const { return j == 0 || i == n - j + 1; }

  const Column& column(int j, long i) const {
    if (j < 1 || j > m || i < 0 || i > n - j) throw DomainError("threshold table index out of range");
    return columns[j - 1][i];
  }

  double W_free(int j, long i) const {
    if (is_identity(j, i)) return kMinusInf;
    return column(j, i).free;
  }

  double W(int j, long i, double x) const {
    if (j < 0 || j > m || i < 0 || i > n - j + 1) throw DomainError("threshold table index out of range");
    if (is_identity(j, i)) return x;
    const Column& col = columns[j - 1][i];
    if (x == kMinusInf) return col.free;
    if (x < x_grid.front()) return join(x, col.free);
    if (x > x_grid.back()) return join(x, col.w.back());
    const std::size_t k = numerics::segment_index(x_grid, x);
    if (x == x_grid[k]) return col.w[k];
    if (x == x_grid[k + 1]) return col.w[k + 1];
    return numerics::hermite(x_grid[k], x_grid[k + 1], col.w[k], col.w[k + 1], col.slope[k], col.slope[k + 1], x);
  }

  /// sup{x : W^j_i(x) <= w}; -inf when W^j_i exceeds w everywhere.
  double upper_preimage(int j, long i, double w) const {
    if (is_identity(j, i)) return w;
    const Column& col = columns[j - 1][i];
    if (w < col.w.front()) return col.free > w ? kMinusInf : std::min(w, x_grid.front());
    if (w >= col.w.back()) return std::max(w, x_grid.back());
    const auto it = std::upper_bound(col.w.begin(), col.w.end(), w);
    const std::size_t k = static_cast<std::size_t>(it - col.w.begin()) - 1;
    if (col.w[k + 1] == col.w[k]) return x_grid[k + 1];
    return numerics::hermite_solve(x_grid[k], x_grid[k + 1], col.w[k], col.w[k + 1], col.slope[k],
                                   col.slope[k + 1], w);
  }
};

/**
 * Grid of reachable values for the backward induction.
 *
 * Finite support: every atom value c_i z + d_i. Otherwise quantiles of the
 * first and last X_i from 1e-8 to 1 - 1e-8 on a logit-uniform scale.
 */
inline std::vector<double> default_x_grid(const DiscreteModel& model, int points_per_end = 161) {
  std::vector<double> g;
  const auto& F = model.base();
  if (F.is_finite()) {
    for (long i = 1; i <= model.n(); ++i)
      for (double z : F.atoms()) g.push_back(model.c(i) * z + model.d(i));
  } else {
    const double lmax = std::log(1e8);
    for (long i : {1L, model.n()}) {
      for (int k = 0; k < points_per_end; ++k) {
        const double l = -lmax + 2.0 * lmax * k / (points_per_end - 1);
        const double u = 1.0 / (1.0 + std::exp(-l));
        g.push_back(model.c(i) * F.quantile(u) + model.d(i));
      }
      if (std::isfinite(F.support_lo())) g.push_back(model.c(i) * F.support_lo() + model.d(i));
      if (std::isfinite(F.support_hi())) g.push_back(model.c(i) * F.support_hi() + model.d(i));
    }
  }
  std::sort(g.begin(), g.end());
  std::vector<double> out;
  for (double x : g) {
    if (out.empty() || x > out.back() + (F.is_finite() ? 0.0 : 1e-12 * (1.0 + std::abs(x)))) out.push_back(x);
  }
  if (out.size() == 1) out.push_back(out.front() + 1.0);
  return out;
}

namespace detail {

// E[f(X v x) v w] for X = c Z + d, Z continuous, f nondecreasing with sup{f <= w} = xstar.
// Below s = max(xstar, x) the integrand is the constant f(x) v w.
template <class F>
double continuous_expectation(const BaseDistribution& Fz, double c, double d, double x, double w, double xstar,
                              F&& f, const numerics::GaussRule& rule, double p) {
  const double s = std::max(xstar, x);
  const double below = x == kMinusInf ? w : join(f(x), w);
  if (s == kPlusInf) return below;
  const double ustar = s == kMinusInf ? 0.0 : Fz.cdf((s - d) / c);
  if (ustar >= 1.0) return below;
  const double len = 1.0 - ustar;
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double t = 0.5 * (rule.nodes[k] + 1.0);
    const double a = std::pow(t, p), b = std::pow(1.0 - t, p);
    const double phi = a / (a + b);
    const double dphi = p * std::pow(t, p - 1.0) * std::pow(1.0 - t, p - 1.0) / ((a + b) * (a + b));
    double u = ustar + len * phi;
    if (u >= 1.0) u = std::nextafter(1.0, 0.0);
    if (u <= 0.0) u = std::nextafter(0.0, 1.0);
    const double y = c * Fz.quantile(u) + d;
    acc += 0.5 * rule.weights[k] * dphi * join(f(join(y, x)), w);
  }
  return (ustar > 0.0 ? below * ustar : 0.0) + len * acc;
}

}  // namespace detail

/**
 * Backward induction W^j_i(x) = E[W^{j-1}_{i+1}(x v X_{i+1}) v W^j_{i+1}(x)] with
 * W^0 = identity and W^j_{n-j+1}(x) = x. The guarantee enters the stopped
 * branch, so a stop below x keeps x; this is what makes the anchor harmless
 * when the remaining stops are forced.
 */
inline ThresholdTable backward_thresholds(const DiscreteModel& model, int m, std::vector<double> x_grid = {},
                                          const QuadSpec& quad = {}) {
  const long n = model.n();
  if (m < 1) throw ConfigError("number of stops must be positive");
  if (m > n) throw ConfigError("number of stops exceeds the horizon");
  if (x_grid.empty()) x_grid = default_x_grid(model);
  for (std::size_t k = 1; k < x_grid.size(); ++k)
    if (!(x_grid[k] > x_grid[k - 1])) throw ConfigError("x_grid must be strictly increasing");
  if (x_grid.size() < 2) throw ConfigError("x_grid needs at least two nodes");
  for (double x : x_grid)
    if (!std::isfinite(x)) throw ConfigError("x_grid must be finite");
  if (quad.nodes < 4 || quad.nodes % 2 != 0) throw ConfigError("quadrature needs an even node count >= 4");

  ThresholdTable T;
  T.n = n;
  T.m = m;
  T.x_grid = std::move(x_grid);
  T.model_hash = config_hash(model.to_json());
  const auto& F = model.base();
  T.exact = F.is_finite();
  T.columns.resize(m);
  const std::size_t nx = T.x_grid.size();
  const auto rule = numerics::make_gauss_rule(quad.nodes);
  const auto half_rule = numerics::make_gauss_rule(quad.nodes / 2);

  for (int j = 1; j <= m; ++j) {
    auto& cols = T.columns[j - 1];
    cols.resize(static_cast<std::size_t>(n - j + 1));
    for (long i = n - j; i >= 0; --i) {
      const double c = model.c(i + 1), d = model.d(i + 1);
      auto f = [&](double x) { return T.W(j - 1, i + 1, x); };
      auto expect = [&](double x, double w, const numerics::GaussRule& r) {
        if (T.exact) {
          double s = 0.0;
          const auto& z = F.atoms();
          const auto& p = F.probabilities();
          for (std::size_t k = 0; k < z.size(); ++k) s += p[k] * join(f(join(c * z[k] + d, x)), w);
          return s;
        }
        return detail::continuous_expectation(F, c, d, x, w, T.upper_preimage(j - 1, i + 1, w), f, r,
                                              quad.map_power);
      };
      ThresholdTable::Column col;
      col.w.resize(nx);
      const double w_free = T.W(j, i + 1, kMinusInf);
      col.free = expect(kMinusInf, w_free, rule);
      if (!T.exact) {
        const double coarse = expect(kMinusInf, w_free, half_rule);
        const double err = std::abs(col.free - coarse);
        T.error_estimate = std::max(T.error_estimate, err);
        if (err > quad.tolerance * std::max(1.0, std::abs(col.free)))
          throw QuadratureError("backward induction quadrature missed its tolerance at j=" + std::to_string(j) +
                                    ", i=" + std::to_string(i),
                                err);
      }
      numerics::parallel_for(nx, quad.threads, [&](std::size_t k) {
        col.w[k] = expect(T.x_grid[k], T.W(j, i + 1, T.x_grid[k]), rule);
      });
      // Exact identities the quadrature may blur: W >= x, nondecreasing in x.
      for (std::size_t k = 0; k < nx; ++k) {
        col.w[k] = join(col.w[k], T.x_grid[k]);
        if (k > 0) col.w[k] = join(col.w[k], col.w[k - 1]);
      }
      col.slope.resize(nx);
      numerics::pchip_slopes(T.x_grid, col.w, col.slope);
      cols[static_cast<std::size_t>(i)] = std::move(col);
    }
  }
  return T;
}

/// W^m_0(x): the optimal expected reward with guarantee x.
inline double optimal_value(const ThresholdTable& table, Guarantee g) {
  const double x = g.value();
  if (!g.is_minus_infinity() && x < table.x_grid.front())
    throw DomainError("guarantee lies below the tabulated x_grid; pass -inf or extend the grid");
  return table.W(table.m, 0, x);
}

/**
 * Applies the optimal rule to one realization X_1..X_n.
 *
 * Stop l is the first index i after stop l-1 with i <= n-m+l and
 * W^{m-l}_i(X_i) > W^{m-l+1}_i(x v M), M the best value stopped so far;
 * without an exceedance it is forced at n-m+l.
 */
inline MultiStopResult run_policy(const ThresholdTable& table, std::span<const double> xs, Guarantee g) {
  const long n = table.n;
  const int m = table.m;
  if (static_cast<long>(xs.size()) != n) throw ConfigError("realization length differs from the horizon");
  MultiStopResult r;
  r.guarantee = g.value();
  double best = g.value();
  long prev = 0;
  for (int l = 1; l <= m; ++l) {
    const long last = n - m + l;
    long stop = last;
    bool forced = true;
    for (long i = prev + 1; i <= last; ++i) {
      if (table.W(m - l, i, xs[i - 1]) > table.W(m - l + 1, i, best)) {
        stop = i;
        forced = false;
        break;
      }
    }
    const double v = xs[stop - 1];
    r.times.push_back(static_cast<double>(stop));
    r.indices.push_back(static_cast<std::size_t>(stop));
    r.values.push_back(v);
    r.forced.push_back(forced);
    best = join(best, v);
    prev = stop;
  }
  r.reward = best;
  return r;
}

}  // namespace multistop
