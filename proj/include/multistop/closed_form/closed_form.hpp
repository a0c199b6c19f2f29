#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"
#include "multistop/core/scaling.hpp"
#include "multistop/numerics/gauss_legendre.hpp"
#include "multistop/numerics/pchip.hpp"
#include "multistop/numerics/quadrature.hpp"
#include "multistop/numerics/roots.hpp"

namespace multistop {

struct ClosedFormSpec {
  double step = 0.01;          // spacing of the tabulation variable s
  double edge = 1e-10;         // closest tabulated distance to a singular endpoint, relative
  double tail_tol = 1e-13;     // identity extrapolation starts where Phi is this close to its asymptote
  int root_bits = 52;
};

/**
 * One level j of the closed-form solution: the root r_j and a tabulation of
 * psi = ln|Phi^j| (cases 1, 2) or psi = Phi^j (case 3) on a grid in s, where
 * x = r_j + e^s (cases 1, 3) or x = r_j sigma(-s) (case 2).
 */
struct ClosedFormLevel {
  int j = 0;
  double r = 0.0;
  std::vector<double> s, psi, dpsi;
};

class ClosedFormSolution {
 public:
  ClosedFormTag tag;
  ClosedFormSpec spec;
  std::vector<ClosedFormLevel> levels;  // levels[j-1]

  int m() const { return static_cast<int>(levels.size()); }
  ClosedFormCase kind() const { return tag.kind; }

  /// r_j, with r_0 = 0 (case 1) or -inf (cases 2, 3).
  double root(int j) const {
    if (j == 0) return tag.kind == ClosedFormCase::FiniteLower ? 0.0 : kMinusInf;
    return level(j).r;
  }

  /// Phi^j(x) for x in [r_j, hi); Phi^0 is the identity.
  double Phi(int j, double x) const {
    if (j == 0) return x;
    const auto& L = level(j);
    if (x < L.r) throw DomainError("Phi^" + std::to_string(j) + " queried below its root");
    if (x == L.r) return tag.kind == ClosedFormCase::FiniteLower ? 0.0 : kMinusInf;
    if (tag.kind == ClosedFormCase::UpperBounded && x >= 0.0) {
      if (x > 0.0) throw DomainError("Phi^j queried above 0 in the upper-bounded case");
      return 0.0;
    }
    const double s = to_s(L.r, x);
    if (s > L.s.back()) return x;
    return from_psi(psi_at(L, s));
  }

  /// phi^j = (Phi^j)^{-1}.
  double phi(int j, double y) const {
    if (j == 0) return y;
    const auto& L = level(j);
    double target = 0.0;
    switch (tag.kind) {
      case ClosedFormCase::FiniteLower:
        if (y < 0.0) throw DomainError("phi^j queried below 0 in the finite-lower case");
        if (y == 0.0) return L.r;
        target = std::log(y);
        if (target >= L.psi.back()) return y;
        break;
      case ClosedFormCase::UpperBounded:
        if (y == kMinusInf) return L.r;
        if (y >= 0.0) return y;
        target = std::log(-y);
        if (target <= L.psi.back()) return y;
        break;
      case ClosedFormCase::Translation:
        if (y == kMinusInf) return L.r;
        target = y;
        if (target >= L.psi.back()) return y;
        break;
    }
    return from_s(L.r, s_for_psi(L, target));
  }

  /// R^j(x) assembled directly from its integral definition (diagnostics and tests).
  double R(int j, double x) const {
    auto hphi = [&](double y) { return tag.H(Phi(j - 1, y)); };
    switch (tag.kind) {
      case ClosedFormCase::FiniteLower:
        return x - numerics::integrate_to_infinity(hphi, x, 1e-14).value;
      case ClosedFormCase::UpperBounded:
        return x + numerics::integrate_singular(hphi, x, 0.0, 1e-14).value;
      case ClosedFormCase::Translation:
        return 1.0 - numerics::integrate_to_infinity(hphi, x, 1e-14).value;
    }
    return kNaN;
  }

  const ClosedFormLevel& level(int j) const {
    if (j < 1 || j > m()) throw DomainError("closed-form level out of range: " + std::to_string(j));
    return levels[j - 1];
  }

  double to_s(double r, double x) const {
    if (tag.kind == ClosedFormCase::UpperBounded) return std::log((x - r) / (-x));
    return std::log(x - r);
  }
  double from_s(double r, double s) const {
    if (tag.kind == ClosedFormCase::UpperBounded) return r / (1.0 + std::exp(s));
    return r + std::exp(s);
  }
  double dx_ds(double r, double s) const {
    if (tag.kind == ClosedFormCase::UpperBounded) {
      const double e = std::exp(-std::abs(s));
      return -r * e / ((1.0 + e) * (1.0 + e));
    }
    return std::exp(s);
  }

 private:
  double from_psi(double p) const {
    switch (tag.kind) {
      case ClosedFormCase::FiniteLower: return std::exp(p);
      case ClosedFormCase::UpperBounded: return -std::exp(p);
      case ClosedFormCase::Translation: return p;
    }
    return kNaN;
  }

  static double psi_at(const ClosedFormLevel& L, double s) {
    if (s <= L.s.front()) return L.psi.front() + L.dpsi.front() * (s - L.s.front());
    const std::size_t k = numerics::segment_index(L.s, s);
    return numerics::hermite(L.s[k], L.s[k + 1], L.psi[k], L.psi[k + 1], L.dpsi[k], L.dpsi[k + 1], s);
  }

  static double s_for_psi(const ClosedFormLevel& L, double target) {
    const bool inc = L.psi.back() > L.psi.front();
    const bool below = inc ? target <= L.psi.front() : target >= L.psi.front();
    if (below) return L.s.front() + (target - L.psi.front()) / L.dpsi.front();
    std::size_t lo = 0, hi = L.psi.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if ((L.psi[mid] <= target) == inc) lo = mid; else hi = mid;
    }
    return numerics::hermite_solve(L.s[lo], L.s[hi], L.psi[lo], L.psi[hi], L.dpsi[lo], L.dpsi[hi], target);
  }
};

namespace detail {

inline void build_closed_form_level(ClosedFormSolution& sol, int j) {
  const auto kind = sol.tag.kind;
  const auto& H = sol.tag.H;
  const auto& spec = sol.spec;
  auto hphi = [&](double y) { return H(sol.Phi(j - 1, y)); };
  auto I = [&](double x) {
    if (kind == ClosedFormCase::UpperBounded) return numerics::integrate_singular(hphi, x, 0.0, 1e-14).value;
    return numerics::integrate_to_infinity(hphi, x, 1e-14).value;
  };
  auto Rdirect = [&](double x) {
    switch (kind) {
      case ClosedFormCase::FiniteLower: return x - I(x);
      case ClosedFormCase::UpperBounded: return x + I(x);
      case ClosedFormCase::Translation: return 1.0 - I(x);
    }
    return kNaN;
  };
  auto Rprime = [&](double y) {
    const double h = hphi(y);
    switch (kind) {
      case ClosedFormCase::FiniteLower: return 1.0 + h;
      case ClosedFormCase::UpperBounded: return 1.0 - h;
      case ClosedFormCase::Translation: return h;
    }
    return kNaN;
  };

  // Bracket the root: R changes sign exactly once on (r_{j-1}, hi).
  const double rprev = sol.root(j - 1);
  const bool left_positive = kind == ClosedFormCase::UpperBounded;
  auto left_ok = [&](double x) { const double v = Rdirect(x); return left_positive ? v > 0.0 : v < 0.0; };
  auto right_ok = [&](double x) { const double v = Rdirect(x); return left_positive ? v < 0.0 : v > 0.0; };
  const std::string unmet = "closed-form class conditions unmet at level " + std::to_string(j);
  double a = kNaN;
  if (std::isfinite(rprev)) {
    const double scale = std::max(1.0, std::abs(rprev));
    for (double d = 1e-6; d >= 1e-15; d *= 1e-3) {
      if (left_ok(rprev + d * scale)) {
        a = rprev + d * scale;
        break;
      }
    }
  } else {
    for (double x = -1.0; x > -1e12; x *= 2.0) {
      if (left_ok(x)) {
        a = x;
        break;
      }
    }
  }
  if (std::isnan(a)) throw SolverError(unmet + ": no left bracket");
  double b = kNaN;
  if (kind == ClosedFormCase::UpperBounded) {
    for (double d = 1e-12; d < 1.0; d *= 10.0) {
      const double x = -d * std::max(1.0, std::abs(a));
      if (x > a && right_ok(x)) {
        b = x;
        break;
      }
    }
  } else {
    const double a0 = a;
    double step = 1e-3 * std::max(1.0, std::abs(a0));
    for (int k = 0; k < 200; ++k, step *= 2.0) {
      const double x = a0 + step;
      if (right_ok(x)) {
        b = x;
        break;
      }
      a = x;
    }
  }
  if (std::isnan(b)) throw SolverError(unmet + ": no right bracket");
  ClosedFormLevel L;
  L.j = j;
  L.r = numerics::solve_bracketed(Rdirect, a, b, spec.root_bits);
  const double r = L.r;
  const double scale = std::max(1.0, std::abs(r));

  // Upper end of the table and the anchor value there.
  double s_max = 0.0, anchor = 0.0;
  if (kind == ClosedFormCase::UpperBounded) {
    const double xN = -spec.edge * scale;
    s_max = std::log((xN - r) / (-xN));
    const double tail = numerics::integrate_singular(
        [&](double y) { const double iy = I(y); return iy == 0.0 ? 0.0 : iy / (y * (y + iy)); }, xN, 0.0, 1e-13).value;
    anchor = std::log(-xN) + tail;
  } else {
    bool found = false;
    for (int k = 0; k < 80 && !found; ++k) {
      const double X = std::max(r, 0.0) + scale * std::pow(2.0, k);
      double tail = 0.0;
      if (kind == ClosedFormCase::FiniteLower) {
        tail = numerics::integrate_to_infinity([&](double y) { const double iy = I(y); return iy == 0.0 ? 0.0 : iy / (y * (y - iy)); },
                                               X, 1e-13).value;
        if (tail < spec.tail_tol) anchor = std::log(X) - tail;
      } else {
        tail = numerics::integrate_to_infinity([&](double y) { const double iy = I(y); return iy / (1.0 - iy); },
                                               X, 1e-13).value;
        if (tail < spec.tail_tol * std::max(1.0, X)) anchor = X - tail;
      }
      if ((kind == ClosedFormCase::FiniteLower && tail < spec.tail_tol) ||
          (kind == ClosedFormCase::Translation && tail < spec.tail_tol * std::max(1.0, X))) {
        s_max = std::log(X - r);
        found = true;
      }
    }
    if (!found) throw SolverError(unmet + ": Phi does not approach the identity");
  }
  const double s_min = kind == ClosedFormCase::UpperBounded ? std::log(spec.edge) : std::log(spec.edge * scale);
  const std::size_t N = static_cast<std::size_t>(std::ceil((s_max - s_min) / spec.step)) + 1;
  L.s.resize(N);
  for (std::size_t i = 0; i < N; ++i) L.s[i] = s_min + (s_max - s_min) * static_cast<double>(i) / (N - 1);
  L.s.back() = s_max;

  // R from the root upward, R(x) = integral of R' over [r, x]; avoids cancellation near r.
  const auto& g8 = numerics::gauss8();
  std::vector<double> xs(N), Rn(N);
  for (std::size_t i = 0; i < N; ++i) xs[i] = sol.from_s(r, L.s[i]);
  Rn[0] = g8.integrate(Rprime, r, xs[0]);
  for (std::size_t i = 1; i < N; ++i) Rn[i] = Rn[i - 1] + g8.integrate(Rprime, xs[i - 1], xs[i]);
  if (kind == ClosedFormCase::UpperBounded) {
    // Near 0 R = x + I(x) is tiny; accumulate I from the top instead.
    double Itop = I(xs[N - 1]);
    for (std::size_t i = N; i-- > 0;) {
      if (i + 1 < N) Itop += g8.integrate(hphi, xs[i], xs[i + 1]);
      if (xs[i] < 0.5 * r) break;
      Rn[i] = xs[i] + Itop;
    }
  }

  auto dpsi = [&](double s, double Rval) { return sol.dx_ds(r, s) / Rval; };
  L.dpsi.resize(N);
  for (std::size_t i = 0; i < N; ++i) L.dpsi[i] = dpsi(L.s[i], Rn[i]);
  L.psi.assign(N, 0.0);
  L.psi[N - 1] = anchor;
  for (std::size_t i = N - 1; i-- > 0;) {
    const double s0 = L.s[i], s1 = L.s[i + 1];
    const double inc = g8.integrate(
        [&](double s) {
          const double x = sol.from_s(r, s);
          const double Rx = Rn[i] + g8.integrate(Rprime, xs[i], x);
          return dpsi(s, Rx);
        },
        s0, s1);
    L.psi[i] = L.psi[i + 1] - inc;
  }
  sol.levels.push_back(std::move(L));
}

}  // namespace detail

/**
 * Solves levels 1..m of the explicitly solvable classes.
 *
 * For each level the root r_j of R^j is bracketed and polished, then Phi^j is
 * tabulated from the relation d psi/dx = 1/R^j anchored where Phi^j meets its
 * asymptote.
 */
inline ClosedFormSolution closed_form_solve(const ClosedFormTag& tag, int m, const ClosedFormSpec& spec = {}) {
  if (m < 1) throw ConfigError("number of stops must be positive");
  ClosedFormSolution sol;
  sol.tag = tag;
  sol.spec = spec;
  for (int j = 1; j <= m; ++j) detail::build_closed_form_level(sol, j);
  return sol;
}

inline ClosedFormSolution build_case(ClosedFormCase kind, const HFunction& H, const VFunction& v, int m,
                                     const ClosedFormSpec& spec = {}) {
  return closed_form_solve(ClosedFormTag{kind, H, v}, m, spec);
}

/// u^j(t, x) = phi^j(x/v) v (case 1, and case 2 for x < 0) or phi^j(x - v) + v (case 3).
inline double eval_u(const ClosedFormSolution& sol, int j, TimePoint tp, Guarantee g) {
  if (j < 0 || j > sol.m()) throw DomainError("closed-form level out of range");
  const double x = g.value();
  const double t = tp.value();
  if (sol.kind() == ClosedFormCase::FiniteLower && x < 0.0) throw DomainError("guarantee below c = 0");
  if (j == 0 || t >= 1.0) return x;
  const double v = sol.tag.v(t);
  switch (sol.kind()) {
    case ClosedFormCase::FiniteLower: return sol.phi(j, x / v) * v;
    case ClosedFormCase::UpperBounded:
      if (x >= 0.0) return x;
      if (g.is_minus_infinity()) return sol.root(j) * v;
      return sol.phi(j, x / v) * v;
    case ClosedFormCase::Translation:
      if (g.is_minus_infinity()) return sol.root(j) + v;
      return sol.phi(j, x - v) + v;
  }
  return kNaN;
}

/// Inverse of u^j(t, .) at y: v Phi^j(y/v) or Phi^j(y - v) + v.
inline double eval_xi(const ClosedFormSolution& sol, int j, double t, double y) {
  if (j == 0) return y;
  const double v = sol.tag.v(t);
  switch (sol.kind()) {
    case ClosedFormCase::FiniteLower: return v * sol.Phi(j, y / v);
    case ClosedFormCase::UpperBounded: return y >= 0.0 ? y : v * sol.Phi(j, y / v);
    case ClosedFormCase::Translation: return sol.Phi(j, y - v) + v;
  }
  return kNaN;
}

/// γ^j(t, x) = ξ^{j-1}(t, u^j(t, x)); undefined at t = 1.
inline double eval_gamma(const ClosedFormSolution& sol, int j, TimePoint tp, Guarantee g) {
  if (j < 1 || j > sol.m()) throw DomainError("closed-form level out of range");
  if (tp.value() >= 1.0) throw DomainError("threshold undefined at t = 1");
  const double y = eval_u(sol, j, tp, g);
  return join(eval_xi(sol, j - 1, tp.value(), y), g.value());
}

inline double eval_u(const ClosedFormSolution& sol, int j, double t, double x) {
  return eval_u(sol, j, TimePoint(t), Guarantee(x));
}
inline double eval_gamma(const ClosedFormSolution& sol, int j, double t, double x) {
  return eval_gamma(sol, j, TimePoint(t), Guarantee(x));
}

}  // namespace multistop
