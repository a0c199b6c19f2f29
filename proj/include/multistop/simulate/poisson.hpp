#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "multistop/core/curve_family.hpp"
#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"
#include "multistop/core/intensity.hpp"
#include "multistop/core/result.hpp"
#include "multistop/numerics/parallel.hpp"
#include "multistop/numerics/quadrature.hpp"
#include "multistop/numerics/roots.hpp"
#include "multistop/simulate/estimate.hpp"
#include "multistop/simulate/rng.hpp"

namespace multistop {

/// Points (tau_k, Y_k) sorted by time, with the region they were drawn from.
struct MarkedPointSet {
  std::vector<double> tau;
  std::vector<double> y;
  double horizon = 1.0;        // 1 - delta
  double level = kMinusInf;    // lowest level cutoff L of the region

  std::size_t size() const { return tau.size(); }
};

/**
 * Union of cells [edges[b], edges[b+1]] x (levels[b], inf). A rectangle has
 * one level throughout; a staircase follows the lowest threshold curve.
 */
struct SamplingRegion {
  std::vector<double> edges;
  std::vector<double> levels;
  std::vector<double> mass;  // mean point count per cell
  std::vector<double> cum;   // running sum of mass
  bool homogeneous = false;

  double total() const { return cum.empty() ? 0.0 : cum.back(); }
  double horizon() const { return edges.back(); }
  double lowest() const { return *std::min_element(levels.begin(), levels.end()); }
};

namespace detail {

inline double cell_mass(const IntensityModel& model, double a, double b, double L, bool homogeneous) {
  if (homogeneous) return (b - a) * model.G(0.5, L);
  return numerics::integrate_singular([&](double t) { return model.G(t, L); }, a, b, 1e-10).value;
}

inline void finish_region(const IntensityModel& model, SamplingRegion& R) {
  R.homogeneous = model.time_homogeneous;
  const std::size_t nb = R.levels.size();
  R.mass.resize(nb);
  R.cum.resize(nb);
  double acc = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    if (std::isfinite(model.lower) && !(R.levels[b] > model.lower))
      throw DomainError("sampling region reaches the lower boundary c; its mass is infinite");
    const double mu = cell_mass(model, R.edges[b], R.edges[b + 1], R.levels[b], R.homogeneous);
    if (!std::isfinite(mu) || mu < 0.0)
      throw DomainError("infinite regional mass: cutoffs too close to the boundary (level " +
                        std::to_string(R.levels[b]) + ")");
    R.mass[b] = mu;
    acc += mu;
    R.cum[b] = acc;
  }
}

}  // namespace detail

/// [0, horizon] x (level, inf), split into `cells` equal time cells for the time inverse.
inline SamplingRegion rectangle_region(const IntensityModel& model, double horizon, double level, int cells = 64) {
  if (!(horizon > 0.0 && horizon <= 1.0)) throw ConfigError("horizon must lie in (0, 1]");
  SamplingRegion R;
  const int nb = model.time_homogeneous ? 1 : std::max(1, cells);
  for (int b = 0; b <= nb; ++b) R.edges.push_back(horizon * b / nb);
  R.edges.back() = horizon;
  R.levels.assign(static_cast<std::size_t>(nb), level);
  detail::finish_region(model, R);
  return R;
}

/**
 * Staircase below every threshold curve: on each time bin (uniform in
 * -ln(1 - t)) the level is the minimum of γ^j(t, c) over the bin's grid points,
 * lowered by a relative margin. Points below it can never trigger a stop.
 */
inline SamplingRegion staircase_region(const IntensityModel& model, const ThresholdFamily& th, double horizon,
                                       double tau_bin = 0.05, double margin = 1e-9) {
  if (!(horizon > 0.0 && horizon < 1.0)) throw ConfigError("staircase horizon must lie in (0, 1)");
  const double tau_h = -std::log1p(-horizon);
  const int nb = std::max(1, static_cast<int>(std::ceil(tau_h / tau_bin)));
  SamplingRegion R;
  for (int b = 0; b <= nb; ++b) R.edges.push_back(-std::expm1(-tau_h * b / nb));
  R.edges.back() = horizon;
  const Guarantee g = th.c == kMinusInf ? Guarantee::minus_infinity() : Guarantee(th.c);
  for (int b = 0; b < nb; ++b) {
    const double a = R.edges[b], e = R.edges[b + 1];
    std::vector<double> ts{a, e};
    for (auto it = std::upper_bound(th.t_grid.begin(), th.t_grid.end(), a); it != th.t_grid.end() && *it < e; ++it)
      ts.push_back(*it);
    double lo = kPlusInf;
    for (int j = 1; j <= th.m(); ++j)
      for (double t : ts) lo = std::min(lo, eval_threshold(th, j, TimePoint(t), g));
    R.levels.push_back(lo - margin * (1.0 + std::abs(lo)));
  }
  detail::finish_region(model, R);
  return R;
}

/// Poisson points in the region: total ~ Poisson(mass), cells by mass, then t and y by inverse transform.
inline MarkedPointSet sample_poisson(const IntensityModel& model, const SamplingRegion& R, Stream& rng) {
  MarkedPointSet P;
  P.horizon = R.horizon();
  P.level = R.lowest();
  const long n = rng.poisson(R.total());
  P.tau.reserve(static_cast<std::size_t>(n));
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) {
    const double target = rng.uniform() * R.total();
    std::size_t b = static_cast<std::size_t>(std::upper_bound(R.cum.begin(), R.cum.end(), target) - R.cum.begin());
    b = std::min(b, R.cum.size() - 1);
    const double a = R.edges[b], e = R.edges[b + 1], L = R.levels[b];
    const double ut = rng.uniform();
    double t;
    if (R.homogeneous) {
      t = a + ut * (e - a);
    } else {
      const double goal = ut * R.mass[b];
      auto F = [&](double s) {
        return numerics::integrate_singular([&](double q) { return model.G(q, L); }, a, s, 1e-10).value - goal;
      };
      t = numerics::solve_bracketed(F, a, e, 40, -goal, R.mass[b] - goal);
    }
    const double g = rng.uniform() * model.G(t, L);
    pts.emplace_back(t, model.solve_level(t, g, L));
  }
  std::sort(pts.begin(), pts.end());
  P.y.reserve(pts.size());
  for (const auto& [t, y] : pts) {
    P.tau.push_back(t);
    P.y.push_back(y);
  }
  return P;
}

inline MarkedPointSet sample_poisson(const IntensityModel& model, double horizon, double level, std::uint64_t seed,
                                     std::uint64_t stream = 0) {
  Stream rng(seed, stream);
  return sample_poisson(model, rectangle_region(model, horizon, level), rng);
}

/**
 * Threshold rule on a point set: stop l is the first point after stop l-1
 * with Y > γ^{m-l+1}(τ, best v x). Levels left unused default to t = 1 and
 * contribute the guarantee.
 */
inline MultiStopResult stop_poisson(const MarkedPointSet& pts, const ThresholdFamily& th, int m, Guarantee x) {
  if (m < 1 || m > th.m()) throw DomainError("threshold family lacks the requested number of stops");
  MultiStopResult r;
  r.guarantee = x.value();
  double best = x.value();
  std::size_t k = 0;
  for (int l = 1; l <= m; ++l) {
    const int j = m - l + 1;
    bool stopped = false;
    for (; k < pts.size(); ++k) {
      const Guarantee g = best == kMinusInf ? Guarantee::minus_infinity() : Guarantee(best);
      if (pts.y[k] > eval_threshold(th, j, TimePoint(pts.tau[k]), g)) {
        r.times.push_back(pts.tau[k]);
        r.indices.push_back(k);
        r.values.push_back(pts.y[k]);
        r.forced.push_back(false);
        best = join(best, pts.y[k]);
        ++k;
        stopped = true;
        break;
      }
    }
    if (!stopped) {
      r.times.push_back(1.0);
      r.indices.push_back(kNoIndex);
      r.values.push_back(x.value());
      r.forced.push_back(true);
    }
  }
  r.reward = best;
  return r;
}

/// Reward of a truncated run: unused stops are credited with u^k(horizon, best).
inline double completed_reward(const MultiStopResult& r, const StoppingCurveFamily& fam, double horizon) {
  int unused = 0;
  for (bool f : r.forced) unused += f ? 1 : 0;
  if (unused == 0) return r.reward;
  const Guarantee g = r.reward == kMinusInf ? Guarantee::minus_infinity() : Guarantee(r.reward);
  return eval_curve(fam, unused, TimePoint(horizon), g);
}

/// Poisson estimator settings.
struct PoissonEstimateSpec {
  double delta = 1e-3;   // simulate on [0, 1 - delta]
  double tau_bin = 0.05;
  bool bias_check = true;  // repeat with delta / 2 and report the change
  double level = 0.95;
  int threads = 1;
};

namespace detail {

inline std::vector<double> poisson_rewards(const IntensityModel& model, const StoppingCurveFamily& fam,
                                           const ThresholdFamily& th, int m, Guarantee x, double delta,
                                           const PoissonEstimateSpec& spec, std::size_t reps, std::uint64_t seed) {
  const double horizon = 1.0 - delta;
  const SamplingRegion R = staircase_region(model, th, horizon, spec.tau_bin);
  std::vector<double> rewards(reps);
  numerics::parallel_for(reps, spec.threads, [&](std::size_t r) {
    Stream rng(seed, r);
    const auto pts = sample_poisson(model, R, rng);
    rewards[r] = completed_reward(stop_poisson(pts, th, m, x), fam, horizon);
  });
  return rewards;
}

}  // namespace detail

/**
 * Expected reward of the threshold rule in the limit model, estimated on
 * [0, 1 - delta] with the continuation value credited at the cutoff.
 */
inline EstimateReport estimate_poisson_value(const IntensityModel& model, const StoppingCurveFamily& fam,
                                             const ThresholdFamily& th, int m, Guarantee x, std::size_t reps,
                                             std::uint64_t seed, const PoissonEstimateSpec& spec = {}) {
  if (!(spec.delta > 0.0 && spec.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  const auto rewards = detail::poisson_rewards(model, fam, th, m, x, spec.delta, spec, reps, seed);
  EstimateReport rep = summarize(rewards, spec.level, seed);
  rep.notes.push_back("simulated on [0, " + std::to_string(1.0 - spec.delta) +
                      "]; unused stops credited with u^k(1 - delta, best)");
  if (spec.bias_check) {
    const auto half = detail::poisson_rewards(model, fam, th, m, x, 0.5 * spec.delta, spec, reps, seed ^ 0x5bd1e995u);
    const auto s = numerics::mean_stats(half);
    rep.notes.push_back("truncation bias estimate (delta vs delta/2): " + std::to_string(rep.mean - s.mean) +
                        " +- " + std::to_string(std::hypot(rep.se, s.se)));
  }
  return rep;
}

}  // namespace multistop
