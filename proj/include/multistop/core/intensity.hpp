#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"
#include "multistop/core/scaling.hpp"
#include "multistop/numerics/quadrature.hpp"
#include "multistop/numerics/roots.hpp"

namespace multistop {

/**
 * Tail intensity G(t, y) of a Poisson process on [0,1] x (c, inf).
 *
 * The mean number of points in [0,T] x (L, inf) is the integral of G(t, L)
 * over [0,T]. G is nonincreasing in y and may be +inf at or below a boundary.
 */
class IntensityModel {
 public:
  using Fn2 = std::function<double(double, double)>;

  std::string family;
  nlohmann::json params = nlohmann::json::object();
  double lower = kMinusInf;        // c
  bool time_homogeneous = false;
  bool singular_at_zero = false;   // G(0, y) infinite for some y > c
  Fn2 G;                           // tail intensity
  Fn2 tail;                        // optional: integral of G(t, .) over (y, inf)
  Fn2 level_inverse;               // optional: y with G(t, y) = g
  std::function<double(double)> upper_support;  // optional: G(t, y) = 0 for y >= upper_support(t)
  std::optional<ClosedFormTag> closed_form;

  double intensity(double t, double y) const { return G(t, y); }

  double tail_integral(double t, double y) const {
    if (tail) return tail(t, y);
    auto f = [&](double z) { return G(t, z); };
    if (upper_support) {
      const double top = upper_support(t);
      if (y >= top) return 0.0;
      return numerics::integrate_singular(f, y, top, 1e-13).value;
    }
    return numerics::integrate_to_infinity(f, y, 1e-13).value;
  }

  /// y > y_lo with G(t, y) = g; G(t, y_lo) must exceed g.
  double solve_level(double t, double g, double y_lo) const {
    if (level_inverse) return level_inverse(t, g);
    auto f = [&](double y) { return G(t, y) - g; };
    const double step = 1e-3 * (1.0 + std::abs(y_lo));
    const auto [lo, hi] = numerics::expand_until([&](double y) { return G(t, y) <= g; }, y_lo, step);
    return numerics::solve_bracketed(f, lo, hi, 52);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = params;
    j["family"] = family;
    if (closed_form && family != "closed_form") j["closed_form"] = closed_form->to_json();
    return j;
  }

  /// Gumbel-domain limit: G = t^{-(c+d)} e^{-y}.
  static IntensityModel gumbel(double c = 0.0, double d = 0.0) {
    const double kappa = c + d;
    if (!(kappa < 1.0)) throw ConfigError("gumbel intensity needs c + d < 1");
    IntensityModel m;
    m.family = "gumbel";
    m.params = {{"c", c}, {"d", d}};
    m.lower = kMinusInf;
    m.time_homogeneous = kappa == 0.0;
    m.singular_at_zero = kappa > 0.0;
    m.G = [kappa](double t, double y) { return kappa == 0.0 ? std::exp(-y) : std::pow(t, -kappa) * std::exp(-y); };
    m.tail = m.G;
    m.level_inverse = [kappa](double t, double g) {
      return kappa == 0.0 ? -std::log(g) : -std::log(g * std::pow(t, kappa));
    };
    const double q = 1.0 - kappa;
    m.closed_form = ClosedFormTag{ClosedFormCase::Translation, HFunction::exponential(1.0, 1.0), VFunction::log(1.0, q)};
    return m;
  }

  /// Frechet-domain limit: G = t^{c alpha} (y - d t^{c + 1/alpha})^{-alpha} above the boundary.
  static IntensityModel frechet(double alpha, double c = 0.0, double d = 0.0) {
    if (!(alpha > 1.0)) throw ConfigError("frechet intensity needs alpha > 1 (finite mean)");
    if (!(c * alpha + 1.0 > 0.0)) throw ConfigError("frechet intensity needs c alpha + 1 > 0");
    IntensityModel m;
    m.family = "frechet";
    m.params = {{"alpha", alpha}, {"c", c}, {"d", d}};
    m.lower = d;
    m.time_homogeneous = c == 0.0 && d == 0.0;
    m.singular_at_zero = c < 0.0;
    const double e = c + 1.0 / alpha;
    auto bnd = [d, e](double t) { return d == 0.0 ? 0.0 : d * std::pow(t, e); };
    m.G = [alpha, c, bnd](double t, double y) {
      const double z = y - bnd(t);
      if (!(z > 0.0)) return kPlusInf;
      return (c == 0.0 ? 1.0 : std::pow(t, c * alpha)) * std::pow(z, -alpha);
    };
    m.tail = [alpha, c, bnd](double t, double y) {
      const double z = y - bnd(t);
      if (!(z > 0.0)) return kPlusInf;
      return (c == 0.0 ? 1.0 : std::pow(t, c * alpha)) * std::pow(z, 1.0 - alpha) / (alpha - 1.0);
    };
    m.level_inverse = [alpha, c, bnd](double t, double g) {
      return bnd(t) + std::pow(g / (c == 0.0 ? 1.0 : std::pow(t, c * alpha)), -1.0 / alpha);
    };
    if (d == 0.0)
      m.closed_form = ClosedFormTag{ClosedFormCase::FiniteLower, HFunction::power(alpha, alpha),
                                    VFunction::power(1.0, c * alpha + 1.0, 1.0 / alpha)};
    return m;
  }

  /// Weibull-domain limit: G = (t^{-c} (d t^{c - 1/alpha} - y))^alpha below the boundary, 0 above.
  static IntensityModel weibull(double alpha, double c = 0.0, double d = 0.0) {
    if (!(alpha > 0.0)) throw ConfigError("weibull intensity needs alpha > 0");
    if (!(1.0 - c * alpha > 0.0)) throw ConfigError("weibull intensity needs 1 - c alpha > 0");
    IntensityModel m;
    m.family = "weibull";
    m.params = {{"alpha", alpha}, {"c", c}, {"d", d}};
    m.lower = kMinusInf;
    m.time_homogeneous = c == 0.0 && d == 0.0;
    m.singular_at_zero = (d != 0.0 && c - 1.0 / alpha < 0.0) || c > 0.0;
    const double e = c - 1.0 / alpha;
    auto bnd = [d, e](double t) { return d == 0.0 ? 0.0 : d * std::pow(t, e); };
    m.G = [alpha, c, bnd](double t, double y) {
      const double z = bnd(t) - y;
      if (!(z > 0.0)) return 0.0;
      return std::pow((c == 0.0 ? 1.0 : std::pow(t, -c)) * z, alpha);
    };
    m.tail = [alpha, c, bnd](double t, double y) {
      const double z = bnd(t) - y;
      if (!(z > 0.0)) return 0.0;
      return std::pow(c == 0.0 ? 1.0 : std::pow(t, -c), alpha) * std::pow(z, alpha + 1.0) / (alpha + 1.0);
    };
    m.level_inverse = [alpha, c, bnd](double t, double g) {
      return bnd(t) - std::pow(g, 1.0 / alpha) * (c == 0.0 ? 1.0 : std::pow(t, c));
    };
    m.upper_support = bnd;
    if (d == 0.0)
      m.closed_form = ClosedFormTag{ClosedFormCase::UpperBounded, HFunction::truncated_power(1.0, alpha),
                                    VFunction::power(alpha, 1.0 - c * alpha, -1.0 / alpha)};
    return m;
  }

  /// Intensity defined through a closed-form tag: G from H and v.
  static IntensityModel from_closed_form(const ClosedFormTag& tag) {
    IntensityModel m;
    m.family = "closed_form";
    m.params = tag.to_json();
    m.closed_form = tag;
    const HFunction H = tag.H;
    const VFunction v = tag.v;
    m.singular_at_zero = tag.v.q < 1.0;
    switch (tag.kind) {
      case ClosedFormCase::FiniteLower:
        m.lower = 0.0;
        m.G = [H, v](double t, double y) { return H(y / v(t)) * std::abs(v.derivative(t)) / v(t); };
        break;
      case ClosedFormCase::UpperBounded:
        m.lower = kMinusInf;
        m.G = [H, v](double t, double y) { return y < 0.0 ? H(y / v(t)) * v.derivative(t) / v(t) : 0.0; };
        m.upper_support = [](double) { return 0.0; };
        break;
      case ClosedFormCase::Translation:
        m.lower = kMinusInf;
        m.G = [H, v](double t, double y) { return H(y - v(t)) * std::abs(v.derivative(t)); };
        break;
    }
    return m;
  }

  static IntensityModel from_json(const nlohmann::json& j) {
    const std::string f = j.at("family").get<std::string>();
    IntensityModel m;
    if (f == "gumbel") {
      m = gumbel(j.value("c", 0.0), j.value("d", 0.0));
    } else if (f == "frechet") {
      m = frechet(j.at("alpha").get<double>(), j.value("c", 0.0), j.value("d", 0.0));
    } else if (f == "weibull") {
      m = weibull(j.at("alpha").get<double>(), j.value("c", 0.0), j.value("d", 0.0));
    } else if (f == "closed_form") {
      return from_closed_form(ClosedFormTag::from_json(j));
    } else {
      throw ConfigError("unknown intensity family '" + f + "'");
    }
    if (j.contains("closed_form")) m.closed_form = ClosedFormTag::from_json(j.at("closed_form"));
    return m;
  }
};

}  // namespace multistop
