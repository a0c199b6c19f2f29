#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"

namespace multistop {

/**
 * Values s(t_k, x_i) of one level on a (t, x) grid, plus the guarantee-free
 * column s(t_k, c). Node-major storage: values[k * nx + i].
 */
struct GridSurface {
  std::vector<double> values;
  std::vector<double> free;
};

namespace detail {

// Column k of a surface evaluated at finite or infinite x, piecewise linear in x.
inline double column_value(const std::vector<double>& xg, const GridSurface& s, std::size_t k, double x,
                           double c) {
  const std::size_t nx = xg.size();
  const double* col = s.values.data() + k * nx;
  if (x == kMinusInf || x == c) return s.free[k];
  if (x < xg.front()) return join(x, s.free[k]);
  if (x >= xg.back()) return col[nx - 1] + (x - xg.back());
  const auto it = std::upper_bound(xg.begin(), xg.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - xg.begin()) - 1;
  const double w = (x - xg[i]) / (xg[i + 1] - xg[i]);
  return col[i] + w * (col[i + 1] - col[i]);
}

inline double lerp_extended(double a, double b, double w) {
  if (w <= 0.0) return a;
  if (w >= 1.0) return b;
  if (a == kMinusInf || b == kMinusInf) return kMinusInf;
  return a + w * (b - a);
}

}  // namespace detail

/// u^j(t, x) for j = 1..m on a shared grid; u^0(t, x) = x is implicit.
class StoppingCurveFamily {
 public:
  double c = kMinusInf;
  std::vector<double> t_grid;  // increasing, t_grid.front() = 0, t_grid.back() = 1
  std::vector<double> x_grid;  // increasing, finite; x_grid.front() = c when c is finite
  std::vector<GridSurface> levels;  // levels[j-1]
  std::string model_hash;
  nlohmann::json model = nlohmann::json::object();
  nlohmann::json diagnostics = nlohmann::json::object();

  int m() const { return static_cast<int>(levels.size()); }
  std::size_t nt() const { return t_grid.size(); }
  std::size_t nx() const { return x_grid.size(); }

  double u(int j, std::size_t k, std::size_t i) const {
    if (j == 0) return x_grid[i];
    return levels[j - 1].values[k * nx() + i];
  }
  double u_free(int j, std::size_t k) const {
    if (j == 0) return c;
    return levels[j - 1].free[k];
  }
};

/// γ^j(t, x) for j = 1..m on the family's grid, excluding t = 1.
class ThresholdFamily {
 public:
  double c = kMinusInf;
  std::vector<double> t_grid;  // increasing, last node < 1
  std::vector<double> x_grid;
  std::vector<GridSurface> levels;  // levels[j-1]
  std::string model_hash;
  nlohmann::json diagnostics = nlohmann::json::object();

  int m() const { return static_cast<int>(levels.size()); }
  std::size_t nt() const { return t_grid.size(); }
  std::size_t nx() const { return x_grid.size(); }
  double gamma(int j, std::size_t k, std::size_t i) const { return levels[j - 1].values[k * nx() + i]; }
  double gamma_free(int j, std::size_t k) const { return levels[j - 1].free[k]; }
};

/**
 * u^j(t, x), piecewise linear in each argument between grid nodes.
 *
 * Exact at nodes. u^0 is the identity, u^j(1, x) = x. Below the grid (c = -inf)
 * the value is max(x, u^j(t)); above it the curve continues as x plus the last
 * tabulated offset.
 */
inline double eval_curve(const StoppingCurveFamily& f, int j, TimePoint tp, Guarantee g) {
  if (j < 0 || j > f.m()) throw DomainError("curve level out of range: " + std::to_string(j));
  const double x = g.value();
  if (x < f.c) throw DomainError("guarantee below the lower boundary c");
  if (j == 0) return x;
  const double t = tp.value();
  if (t >= 1.0) return x;
  const auto& tg = f.t_grid;
  const auto it = std::upper_bound(tg.begin(), tg.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - tg.begin()) - 1;
  const double w = (t - tg[k]) / (tg[k + 1] - tg[k]);
  const auto& s = f.levels[j - 1];
  const double a = detail::column_value(f.x_grid, s, k, x, f.c);
  const double b = k + 1 == tg.size() - 1 ? x : detail::column_value(f.x_grid, s, k + 1, x, f.c);
  return detail::lerp_extended(a, b, w);
}

inline double eval_curve(const StoppingCurveFamily& f, int j, double t, double x) {
  return eval_curve(f, j, TimePoint(t), Guarantee(x));
}

/**
 * γ^j(t, x), interpolated like eval_curve. t = 1 has no threshold and raises
 * DomainError; times past the last node reuse the last node's values.
 */
inline double eval_threshold(const ThresholdFamily& f, int j, TimePoint tp, Guarantee g) {
  if (j < 1 || j > f.m()) throw DomainError("threshold level out of range: " + std::to_string(j));
  const double x = g.value();
  if (x < f.c) throw DomainError("guarantee below the lower boundary c");
  const double t = tp.value();
  if (t >= 1.0) throw DomainError("threshold undefined at t = 1");
  const auto& tg = f.t_grid;
  const auto& s = f.levels[j - 1];
  if (t >= tg.back()) return detail::column_value(f.x_grid, s, tg.size() - 1, x, f.c);
  const auto it = std::upper_bound(tg.begin(), tg.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - tg.begin()) - 1;
  const double w = (t - tg[k]) / (tg[k + 1] - tg[k]);
  const double a = detail::column_value(f.x_grid, s, k, x, f.c);
  const double b = detail::column_value(f.x_grid, s, k + 1, x, f.c);
  return detail::lerp_extended(a, b, w);
}

inline double eval_threshold(const ThresholdFamily& f, int j, double t, double x) {
  return eval_threshold(f, j, TimePoint(t), Guarantee(x));
}

}  // namespace multistop
