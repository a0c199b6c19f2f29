#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"

namespace multistop {

enum class DomainKind { Frechet, Weibull, Gumbel };

inline std::string to_string(DomainKind k) {
  switch (k) {
    case DomainKind::Frechet: return "frechet";
    case DomainKind::Weibull: return "weibull";
    case DomainKind::Gumbel: return "gumbel";
  }
  return "?";
}

inline DomainKind domain_kind_from_string(const std::string& s) {
  if (s == "frechet") return DomainKind::Frechet;
  if (s == "weibull") return DomainKind::Weibull;
  if (s == "gumbel") return DomainKind::Gumbel;
  throw ConfigError("unknown domain '" + s + "'");
}

/// Extreme-value normalizing constants of the base distribution: max Z_i ~ a_n Y + b_n.
struct Normalizing {
  double a = 1.0;
  double b = 0.0;
};

/**
 * Base distribution F of the i.i.d. variables Z_i.
 *
 * Continuous families are handled through their quantile function; the finite
 * family keeps its atoms so that expectations can be summed exactly.
 */
class BaseDistribution {
 public:
  enum class Kind { Uniform, Exponential, Pareto, ReversePower, Finite };

  static BaseDistribution uniform(double lo, double hi) {
    if (!(hi > lo)) throw ConfigError("uniform needs lo < hi");
    BaseDistribution d(Kind::Uniform);
    d.p1_ = lo;
    d.p2_ = hi;
    return d;
  }
  static BaseDistribution exponential(double rate) {
    if (!(rate > 0.0)) throw ConfigError("exponential needs rate > 0");
    BaseDistribution d(Kind::Exponential);
    d.p1_ = rate;
    return d;
  }
  /// P(Z > z) = (z / scale)^{-alpha} for z >= scale.
  static BaseDistribution pareto(double alpha, double scale = 1.0) {
    if (!(alpha > 1.0)) throw ConfigError("pareto needs alpha > 1 (finite mean)");
    if (!(scale > 0.0)) throw ConfigError("pareto needs scale > 0");
    BaseDistribution d(Kind::Pareto);
    d.p1_ = alpha;
    d.p2_ = scale;
    return d;
  }
  /// P(Z > z) = 1 - (-z)^alpha on [-1, 0].
  static BaseDistribution reverse_power(double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("reverse_power needs alpha > 0");
    BaseDistribution d(Kind::ReversePower);
    d.p1_ = alpha;
    return d;
  }
  static BaseDistribution finite(std::vector<double> values, std::vector<double> probs) {
    if (values.empty() || values.size() != probs.size()) throw ConfigError("finite distribution needs matching values/probs");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    BaseDistribution d(Kind::Finite);
    double total = 0.0;
    for (auto k : order) {
      if (!(probs[k] > 0.0)) throw ConfigError("finite distribution probabilities must be positive");
      if (!d.atoms_.empty() && values[k] == d.atoms_.back()) {
        d.probs_.back() += probs[k];
      } else {
        d.atoms_.push_back(values[k]);
        d.probs_.push_back(probs[k]);
      }
      total += probs[k];
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("finite distribution probabilities must sum to 1");
    double acc = 0.0;
    for (double p : d.probs_) d.cum_.push_back(acc += p);
    d.cum_.back() = 1.0;
    return d;
  }

  Kind kind() const { return kind_; }
  bool is_finite() const { return kind_ == Kind::Finite; }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& probabilities() const { return probs_; }

  double support_lo() const {
    switch (kind_) {
      case Kind::Uniform: return p1_;
      case Kind::Exponential: return 0.0;
      case Kind::Pareto: return p2_;
      case Kind::ReversePower: return -1.0;
      case Kind::Finite: return atoms_.front();
    }
    return kNaN;
  }
  double support_hi() const {
    switch (kind_) {
      case Kind::Uniform: return p2_;
      case Kind::Exponential:
      case Kind::Pareto: return kPlusInf;
      case Kind::ReversePower: return 0.0;
      case Kind::Finite: return atoms_.back();
    }
    return kNaN;
  }

  double cdf(double z) const {
    switch (kind_) {
      case Kind::Uniform: return std::clamp((z - p1_) / (p2_ - p1_), 0.0, 1.0);
      case Kind::Exponential: return z <= 0.0 ? 0.0 : -std::expm1(-p1_ * z);
      case Kind::Pareto: return z <= p2_ ? 0.0 : 1.0 - std::pow(z / p2_, -p1_);
      case Kind::ReversePower: return z <= -1.0 ? 0.0 : (z >= 0.0 ? 1.0 : 1.0 - std::pow(-z, p1_));
      case Kind::Finite: {
        const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), z);
        return it == atoms_.begin() ? 0.0 : cum_[static_cast<std::size_t>(it - atoms_.begin()) - 1];
      }
    }
    return kNaN;
  }

  /// Left-continuous inverse of the CDF on (0, 1).
  double quantile(double u) const {
    switch (kind_) {
      case Kind::Uniform: return p1_ + u * (p2_ - p1_);
      case Kind::Exponential: return -std::log1p(-u) / p1_;
      case Kind::Pareto: return p2_ * std::pow(1.0 - u, -1.0 / p1_);
      case Kind::ReversePower: return -std::pow(1.0 - u, 1.0 / p1_);
      case Kind::Finite: {
        const auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
        return atoms_[std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), atoms_.size() - 1)];
      }
    }
    return kNaN;
  }

  double mean() const {
    switch (kind_) {
      case Kind::Uniform: return 0.5 * (p1_ + p2_);
      case Kind::Exponential: return 1.0 / p1_;
      case Kind::Pareto: return p1_ * p2_ / (p1_ - 1.0);
      case Kind::ReversePower: return -p1_ / (p1_ + 1.0);
      case Kind::Finite: {
        double s = 0.0;
        for (std::size_t k = 0; k < atoms_.size(); ++k) s += atoms_[k] * probs_[k];
        return s;
      }
    }
    return kNaN;
  }

  /// (a_n, b_n) for the given domain; throws if the family is not in that domain.
  Normalizing normalizing(DomainKind dom, double alpha, long n) const {
    const double nn = static_cast<double>(n);
    auto mismatch = [&] {
      return ConfigError("base distribution is not in the " + to_string(dom) + " domain with the given alpha");
    };
    switch (kind_) {
      case Kind::Uniform:
        if (dom != DomainKind::Weibull || alpha != 1.0) throw mismatch();
        return {(p2_ - p1_) / nn, p2_};
      case Kind::ReversePower:
        if (dom != DomainKind::Weibull || alpha != p1_) throw mismatch();
        return {std::pow(nn, -1.0 / p1_), 0.0};
      case Kind::Exponential:
        if (dom != DomainKind::Gumbel) throw mismatch();
        return {1.0 / p1_, std::log(nn) / p1_};
      case Kind::Pareto:
        if (dom != DomainKind::Frechet || alpha != p1_) throw mismatch();
        return {p2_ * std::pow(nn, 1.0 / p1_), 0.0};
      case Kind::Finite:
        throw mismatch();
    }
    throw mismatch();
  }

  nlohmann::json to_json() const {
    switch (kind_) {
      case Kind::Uniform: return {{"family", "uniform"}, {"lo", p1_}, {"hi", p2_}};
      case Kind::Exponential: return {{"family", "exponential"}, {"rate", p1_}};
      case Kind::Pareto: return {{"family", "pareto"}, {"alpha", p1_}, {"scale", p2_}};
      case Kind::ReversePower: return {{"family", "reverse_power"}, {"alpha", p1_}};
      case Kind::Finite: return {{"family", "finite"}, {"values", atoms_}, {"probs", probs_}};
    }
    return {};
  }

  static BaseDistribution from_json(const nlohmann::json& j) {
    const std::string f = j.at("family").get<std::string>();
    if (f == "uniform") return uniform(j.value("lo", 0.0), j.value("hi", 1.0));
    if (f == "exponential") return exponential(j.value("rate", 1.0));
    if (f == "pareto") return pareto(j.at("alpha").get<double>(), j.value("scale", 1.0));
    if (f == "reverse_power") return reverse_power(j.at("alpha").get<double>());
    if (f == "finite")
      return finite(j.at("values").get<std::vector<double>>(), j.at("probs").get<std::vector<double>>());
    if (f == "degenerate") return finite({j.at("value").get<double>()}, {1.0});
    throw ConfigError("unknown distribution family '" + f + "'");
  }

 private:
  explicit BaseDistribution(Kind k) : kind_(k) {}
  Kind kind_;
  double p1_ = 0.0, p2_ = 0.0;
  std::vector<double> atoms_, probs_, cum_;
};

}  // namespace multistop
