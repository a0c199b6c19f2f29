#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multistop/closed_form/closed_form.hpp"
#include "multistop/core/curve_family.hpp"
#include "multistop/core/discrete_model.hpp"
#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"
#include "multistop/core/result.hpp"
#include "multistop/dp/dp_oracle.hpp"
#include "multistop/numerics/parallel.hpp"
#include "multistop/ode/solver.hpp"
#include "multistop/simulate/estimate.hpp"
#include "multistop/simulate/rng.hpp"

namespace multistop {

/// X_1..X_n with X_i = c_i F^{-1}(U_i) + d_i, consuming one uniform per index.
inline std::vector<double> sample_discrete(const DiscreteModel& model, Stream& rng) {
  std::vector<double> xs(static_cast<std::size_t>(model.n()));
  const auto& F = model.base();
  for (long i = 1; i <= model.n(); ++i) xs[i - 1] = model.c(i) * F.quantile(rng.uniform()) + model.d(i);
  return xs;
}

inline std::vector<double> sample_discrete(const DiscreteModel& model, std::uint64_t seed, std::uint64_t stream = 0) {
  Stream rng(seed, stream);
  return sample_discrete(model, rng);
}

enum class PolicyKind {
  DP,              // backward-induction thresholds
  LimitThreshold,  // X_i > a γ^{m-l+1}(i/n, (best - b)/a) + b with the limit thresholds
  DomainRule,      // the asymptotically optimal rules with the w_n correction on the first stop
};

inline std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::DP: return "dp";
    case PolicyKind::LimitThreshold: return "limit";
    case PolicyKind::DomainRule: return "domain";
  }
  return "?";
}

inline PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "dp") return PolicyKind::DP;
  if (s == "limit") return PolicyKind::LimitThreshold;
  if (s == "domain") return PolicyKind::DomainRule;
  throw ConfigError("unknown policy '" + s + "' (expected dp, limit or domain)");
}

struct PolicySpec {
  PolicyKind kind = PolicyKind::DP;
  int m = 1;
  std::function<double(long)> w;        // w_k override for domain rules; w_0 is treated as -inf
  bool verbatim_weibull_gamma = false;  // use -Phi^{m-1}(r_m) u_{c,0}(t) for γ^m_{c,0}
};

/// Curves and tables a policy may need; all in the limit model's coordinates.
struct PolicyInputs {
  const ThresholdTable* table = nullptr;          // DP
  const ThresholdFamily* gamma = nullptr;         // γ_{c,d}
  const ThresholdFamily* gamma_c0 = nullptr;      // Weibull rule: γ_{c,0}; defaults to gamma
  const StoppingCurveFamily* u00 = nullptr;       // Weibull rule: u_{0,0}
  const ClosedFormSolution* closed_c0 = nullptr;  // Weibull rule, verbatim form
};

/// A policy bound to one model: first-stop thresholds are tabulated per index.
class PreparedPolicy {
 public:
  PolicySpec spec;
  long n = 0;
  Normalization norm;
  double c_limit = kMinusInf;          // lower boundary of the threshold family
  std::vector<double> first;           // first[i]: stop 1 at i iff X_i > first[i] (non-DP)
  std::vector<double> first_w;         // first_w[i] = W^m_i(x) (DP, per guarantee)
  double guarantee = kMinusInf;
  PolicyInputs in;

  std::string name() const { return to_string(spec.kind); }

  /// Whether stop l (1-based) is taken at index i given the best value so far.
  bool exceeds(int l, long i, double xi, double best) const {
    const int m = spec.m;
    if (spec.kind == PolicyKind::DP) {
      const double rhs = l == 1 ? first_w[i] : in.table->W(m - l + 1, i, best);
      return in.table->W(m - l, i, xi) > rhs;
    }
    if (l == 1) return xi > first[i];
    if (i == n) return false;
    const double t = static_cast<double>(i) / static_cast<double>(n);
    double g = best == kMinusInf ? kMinusInf : (best - norm.b_hat) / norm.a_hat;
    if (g < c_limit) g = c_limit;
    const Guarantee G = g == kMinusInf ? Guarantee::minus_infinity() : Guarantee(g);
    return xi > norm.a_hat * eval_threshold(*in.gamma, m - l + 1, TimePoint(t), G) + norm.b_hat;
  }
};

namespace detail {

inline double w_default(const DiscreteModel& model, long k) {
  if (k <= 0) return kMinusInf;
  const auto& dom = *model.domain();
  const Normalizing nz = model.base_normalizing(k);
  switch (dom.kind) {
    case DomainKind::Gumbel: return nz.b;
    case DomainKind::Weibull: return -std::pow((dom.alpha + 1.0) / dom.alpha, 1.0 / dom.alpha) * nz.a;
    case DomainKind::Frechet: return kNaN;
  }
  return kNaN;
}

inline Guarantee as_guarantee(double g) { return g == kMinusInf ? Guarantee::minus_infinity() : Guarantee(g); }

}  // namespace detail

/**
 * Binds a policy to a model and guarantee.
 *
 * Domain rules need the model's domain tag: Fréchet uses γ^m(t, d); Weibull
 * the corrected curve v_n^m(t) = γ^m_{c,0}/u_{0,0} w_{n-i}/a_n + γ^m_{c,d} -
 * γ^m_{c,0}; Gumbel v_n^m(t) = (w_{n-i} - b_n)/a_n + γ^m(t) - ln(1 - t).
 * Later stops follow γ^{m-l+1} recentred by (â_n, b̂_n).
 */
inline PreparedPolicy prepare_policy(const DiscreteModel& model, const PolicySpec& spec, const PolicyInputs& in,
                                     Guarantee x = Guarantee::minus_infinity()) {
  const long n = model.n();
  const int m = spec.m;
  if (m < 1 || m > n) throw ConfigError("number of stops must lie in [1, n]");
  PreparedPolicy p;
  p.spec = spec;
  p.n = n;
  p.in = in;
  p.guarantee = x.value();
  if (spec.kind == PolicyKind::DP) {
    if (!in.table) throw ConfigError("DP policy needs a threshold table");
    if (in.table->n != n || in.table->m < m) throw ConfigError("threshold table does not match the model");
    p.first_w.assign(static_cast<std::size_t>(n + 1), kNaN);
    for (long i = 1; i <= n - m + 1; ++i) p.first_w[i] = in.table->W(m, i, x.value());
    return p;
  }
  if (!in.gamma) throw ConfigError("policy needs the limit threshold family");
  if (in.gamma->m() < m) throw ConfigError("threshold family lacks levels: need " + std::to_string(m));
  if (!model.domain()) throw ConfigError("limit and domain policies need a model with a domain tag");
  p.norm = model.normalization();
  p.c_limit = in.gamma->c;
  const auto& dom = *model.domain();
  const double a = p.norm.a_hat, b = p.norm.b_hat;
  auto scaled_x = [&] {
    double g = x.value() == kMinusInf ? kMinusInf : (x.value() - b) / a;
    return g < p.c_limit ? p.c_limit : g;
  };
  p.first.assign(static_cast<std::size_t>(n + 1), kNaN);
  auto wseq = [&](long k) { return k <= 0 ? kMinusInf : (spec.w ? spec.w(k) : detail::w_default(model, k)); };
  for (long i = 1; i <= n - m + 1; ++i) {
    if (i == n) {  // t = 1: no threshold, the stop is taken
      p.first[i] = kMinusInf;
      continue;
    }
    const double t = static_cast<double>(i) / static_cast<double>(n);
    const TimePoint tp(t);
    double thr;
    if (spec.kind == PolicyKind::LimitThreshold) {
      thr = a * eval_threshold(*in.gamma, m, tp, detail::as_guarantee(scaled_x())) + b;
    } else {
      switch (dom.kind) {
        case DomainKind::Frechet:
          thr = a * eval_threshold(*in.gamma, m, tp, Guarantee(join(dom.d, p.c_limit))) + b;
          break;
        case DomainKind::Gumbel: {
          const Normalizing nz = model.base_normalizing(n);
          const double w = wseq(n - i);
          const double v = (w - nz.b) / nz.a + eval_threshold(*in.gamma, m, tp, Guarantee::minus_infinity()) -
                           std::log1p(-t);
          thr = a * v + b;
          break;
        }
        case DomainKind::Weibull: {
          const ThresholdFamily& g0 = in.gamma_c0 ? *in.gamma_c0 : *in.gamma;
          if (!in.u00) throw ConfigError("Weibull domain rule needs the u_{0,0} curve family");
          const Normalizing nz = model.base_normalizing(n);
          const double gcd = eval_threshold(*in.gamma, m, tp, Guarantee::minus_infinity());
          double gc0 = eval_threshold(g0, m, tp, Guarantee::minus_infinity());
          double ratio = gc0 / eval_curve(*in.u00, 1, tp, Guarantee::minus_infinity());
          if (spec.verbatim_weibull_gamma) {
            if (!in.closed_c0) throw ConfigError("verbatim Weibull rule needs the closed-form solution");
            const auto& cf = *in.closed_c0;
            const double phi_r = m == 1 ? cf.root(m) : cf.Phi(m - 1, cf.root(m));
            const double gv = -phi_r * eval_u(cf, 1, tp, Guarantee::minus_infinity());
            ratio = gv / eval_curve(*in.u00, 1, tp, Guarantee::minus_infinity());
            gc0 = gv;
          }
          const double w = wseq(n - i);
          const double v = w == kMinusInf ? kMinusInf : ratio * w / nz.a + gcd - gc0;
          thr = a * v + b;
          break;
        }
        default: thr = kNaN;
      }
    }
    p.first[i] = thr;
  }
  return p;
}

/**
 * Runs a prepared policy on one sequence. Stop l is searched over
 * (T_{l-1}, n-m+l] and forced at n-m+l when nothing exceeds its threshold.
 */
inline MultiStopResult stop_discrete(std::span<const double> xs, const PreparedPolicy& p) {
  const long n = p.n;
  const int m = p.spec.m;
  if (static_cast<long>(xs.size()) != n) throw ConfigError("sequence length differs from the horizon");
  MultiStopResult r;
  r.guarantee = p.guarantee;
  double best = p.guarantee;
  long prev = 0;
  for (int l = 1; l <= m; ++l) {
    const long last = n - m + l;
    long stop = last;
    bool forced = true;
    for (long i = prev + 1; i <= last; ++i) {
      if (p.exceeds(l, i, xs[i - 1], best)) {
        stop = i;
        forced = false;
        break;
      }
    }
    r.times.push_back(static_cast<double>(stop));
    r.indices.push_back(static_cast<std::size_t>(stop));
    r.values.push_back(xs[stop - 1]);
    r.forced.push_back(forced);
    best = join(best, xs[stop - 1]);
    prev = stop;
  }
  r.reward = best;
  return r;
}

inline MultiStopResult stop_discrete(std::span<const double> xs, const PolicySpec& spec, const DiscreteModel& model,
                                     const PolicyInputs& in, Guarantee x = Guarantee::minus_infinity()) {
  return stop_discrete(xs, prepare_policy(model, spec, in, x));
}

/**
 * Rewards of several policies on the same sequences (common random numbers):
 * replication r uses stream (seed, r) for every policy.
 */
inline std::vector<std::vector<double>> simulate_rewards(const DiscreteModel& model,
                                                         const std::vector<PreparedPolicy>& policies,
                                                         std::size_t reps, std::uint64_t seed, int threads = 1) {
  std::vector<std::vector<double>> out(policies.size(), std::vector<double>(reps));
  numerics::parallel_for(reps, threads, [&](std::size_t r) {
    Stream rng(seed, r);
    const auto xs = sample_discrete(model, rng);
    for (std::size_t q = 0; q < policies.size(); ++q) out[q][r] = stop_discrete(xs, policies[q]).reward;
  });
  return out;
}

inline EstimateReport estimate_value(const DiscreteModel& model, const PreparedPolicy& policy, std::size_t reps,
                                     std::uint64_t seed, double level = 0.95, int threads = 1) {
  const auto rewards = simulate_rewards(model, {policy}, reps, seed, threads);
  return summarize(rewards[0], level, seed);
}

/// One row of a convergence table.
struct StudyRow {
  long n = 0;
  int m = 0;
  std::string policy;
  double raw_value = 0.0;
  double scaled_value = 0.0;
  double limit = 0.0;
  double gap = 0.0;
  double se = 0.0;  // of the scaled value
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::string scaling;  // "value/a_hat" or "(value-b_hat)/a_hat"
};

/// Limit-side inputs of a study: thresholds for the rules and the limit value u^m(0).
struct LimitInputs {
  ThresholdFamily gamma;
  std::optional<ThresholdFamily> gamma_c0;
  std::optional<StoppingCurveFamily> u00;
  std::optional<ClosedFormSolution> closed_c0;
  double limit = kNaN;
};

/**
 * Solves the limit model of a tagged discrete model: γ_{c,d}, u^m_{c,d}(0) and,
 * for the Weibull rule, γ_{c,0} and u_{0,0} (reused when c and d vanish).
 */
inline LimitInputs prepare_limit(const DiscreteModel& model, int m, const SolveSpec& solve = {},
                                 bool with_closed_form = false) {
  if (!model.domain()) throw ConfigError("limit inputs need a model with a domain tag");
  const auto& dom = *model.domain();
  LimitInputs L;
  const IntensityModel lim = model.limit_intensity();
  const StoppingCurveFamily fam = solve_curve_family(lim, m, solve);
  L.gamma = thresholds_from_family(fam);
  L.limit = fam.u_free(m, 0);
  if (dom.kind == DomainKind::Weibull) {
    if (dom.d != 0.0) L.gamma_c0 = thresholds_from_family(solve_curve_family(model.limit_intensity(dom.c, 0.0), m, solve));
    L.u00 = dom.c == 0.0 && dom.d == 0.0 ? fam : solve_curve_family(model.limit_intensity(0.0, 0.0), 1, solve);
    if (with_closed_form) {
      const IntensityModel c0 = model.limit_intensity(dom.c, 0.0);
      if (c0.closed_form) L.closed_c0 = closed_form_solve(*c0.closed_form, m);
    }
  }
  return L;
}

struct StudySpec {
  std::vector<long> n_list;
  int m = 1;
  std::vector<PolicyKind> policies{PolicyKind::DP, PolicyKind::DomainRule};
  std::size_t reps = 10000;
  std::uint64_t seed = 0;
  double level = 0.95;
  int threads = 1;
  QuadSpec quad;
  bool verbatim_weibull_gamma = false;
};

/**
 * Scaled values of each policy over a list of horizons, all policies sharing
 * the same sequences per horizon. Fréchet and Weibull rows report value/â_n,
 * Gumbel rows (value - b̂_n)/â_n.
 */
inline std::vector<StudyRow> convergence_study(const DiscreteModel& base_model, const LimitInputs& lim,
                                               const StudySpec& spec) {
  if (!std::isfinite(lim.limit)) throw ConfigError("convergence study needs the limit value u^m(0)");
  if (!base_model.domain()) throw ConfigError("convergence study needs a model with a domain tag");
  std::vector<StudyRow> rows;
  for (long n : spec.n_list) {
    const DiscreteModel model = base_model.with_horizon(n);
    std::optional<ThresholdTable> table;
    std::vector<PreparedPolicy> prepared;
    for (PolicyKind k : spec.policies) {
      PolicySpec ps;
      ps.kind = k;
      ps.m = spec.m;
      ps.verbatim_weibull_gamma = spec.verbatim_weibull_gamma;
      PolicyInputs in;
      if (k == PolicyKind::DP) {
        if (!table) table = backward_thresholds(model, spec.m, {}, spec.quad);
        in.table = &*table;
      } else {
        in.gamma = &lim.gamma;
        in.gamma_c0 = lim.gamma_c0 ? &*lim.gamma_c0 : nullptr;
        in.u00 = lim.u00 ? &*lim.u00 : nullptr;
        in.closed_c0 = lim.closed_c0 ? &*lim.closed_c0 : nullptr;
      }
      prepared.push_back(prepare_policy(model, ps, in));
    }
    const auto rewards = simulate_rewards(model, prepared, spec.reps, spec.seed, spec.threads);
    const Normalization nz = model.normalization();
    const bool gumbel = model.domain()->kind == DomainKind::Gumbel;
    for (std::size_t q = 0; q < prepared.size(); ++q) {
      const EstimateReport rep = summarize(rewards[q], spec.level, spec.seed);
      StudyRow row;
      row.n = n;
      row.m = spec.m;
      row.policy = prepared[q].name();
      row.raw_value = rep.mean;
      row.scaled_value = (rep.mean - nz.b_hat) / nz.a_hat;
      row.limit = lim.limit;
      row.gap = row.scaled_value - lim.limit;
      row.se = rep.se / nz.a_hat;
      row.ci_lo = (rep.ci_lo - nz.b_hat) / nz.a_hat;
      row.ci_hi = (rep.ci_hi - nz.b_hat) / nz.a_hat;
      row.scaling = gumbel ? "(value-b_hat)/a_hat" : "value/a_hat";
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace multistop
