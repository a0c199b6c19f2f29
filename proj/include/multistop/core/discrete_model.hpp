#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multistop/core/distribution.hpp"
#include "multistop/core/errors.hpp"
#include "multistop/core/intensity.hpp"

namespace multistop {

/// constant + coef (i/n)^power + coef_log ln(i/n)
struct SequenceFormula {
  double constant = 0.0;
  double coef = 0.0;
  double power = 1.0;
  double coef_log = 0.0;

  double at(long i, long n) const {
    const double s = static_cast<double>(i) / static_cast<double>(n);
    double v = constant;
    if (coef != 0.0) v += coef * std::pow(s, power);
    if (coef_log != 0.0) v += coef_log * std::log(s);
    return v;
  }

  nlohmann::json to_json() const {
    return {{"const", constant}, {"coef", coef}, {"power", power}, {"coef_log", coef_log}};
  }
  static SequenceFormula from_json(const nlohmann::json& j, double default_const) {
    SequenceFormula f;
    if (j.is_number()) {
      f.constant = j.get<double>();
      return f;
    }
    f.constant = j.value("const", default_const);
    f.coef = j.value("coef", 0.0);
    f.power = j.value("power", 1.0);
    f.coef_log = j.value("coef_log", 0.0);
    return f;
  }
  static SequenceFormula constant_value(double c) {
    SequenceFormula f;
    f.constant = c;
    return f;
  }
};

/// Extreme-value class of the base distribution and the limit parameters (c, d).
struct DomainTag {
  DomainKind kind = DomainKind::Gumbel;
  double alpha = 1.0;
  double c = 0.0;
  double d = 0.0;

  nlohmann::json to_json() const {
    return {{"type", to_string(kind)}, {"alpha", alpha}, {"c", c}, {"d", d}};
  }
  static DomainTag from_json(const nlohmann::json& j) {
    DomainTag t;
    t.kind = domain_kind_from_string(j.at("type").get<std::string>());
    t.alpha = j.value("alpha", 1.0);
    t.c = j.value("c", 0.0);
    t.d = j.value("d", 0.0);
    return t;
  }
};

/// â_n and b̂_n.
struct Normalization {
  double a_hat = 1.0;
  double b_hat = 0.0;
};

/// Finite-n problem X_i = c_i Z_i + d_i with Z_i ~ F i.i.d.
class DiscreteModel {
 public:
  DiscreteModel(long n, BaseDistribution base, SequenceFormula discount = SequenceFormula::constant_value(1.0),
                SequenceFormula cost = {}, std::optional<DomainTag> domain = std::nullopt)
      : n_(n), base_(std::move(base)), discount_(discount), cost_(cost), domain_(domain) {
    if (n_ < 1) throw ConfigError("horizon n must be positive");
    c_.resize(n_ + 1);
    d_.resize(n_ + 1);
    for (long i = 1; i <= n_; ++i) {
      c_[i] = discount_.at(i, n_);
      d_[i] = cost_.at(i, n_);
      if (!(c_[i] > 0.0) || !std::isfinite(c_[i])) throw ConfigError("discount c_i must be positive and finite");
      if (!std::isfinite(d_[i])) throw ConfigError("cost d_i must be finite");
    }
    if (!monotone(c_) || !monotone(d_)) throw ConfigError("discount and cost sequences must each be monotone");
    if (domain_) base_.normalizing(domain_->kind, domain_->alpha, n_);
  }

  long n() const { return n_; }
  const BaseDistribution& base() const { return base_; }
  const SequenceFormula& discount() const { return discount_; }
  const SequenceFormula& cost() const { return cost_; }
  const std::optional<DomainTag>& domain() const { return domain_; }

  double c(long i) const { return c_.at(i); }
  double d(long i) const { return d_.at(i); }

  /// Same sequences and base at a different horizon.
  DiscreteModel with_horizon(long n) const { return DiscreteModel(n, base_, discount_, cost_, domain_); }

  Normalization normalization() const {
    if (!domain_) throw ConfigError("normalization requires a domain tag");
    const Normalizing nz = base_.normalizing(domain_->kind, domain_->alpha, n_);
    Normalization out;
    out.a_hat = c_[n_] * nz.a;
    out.b_hat = domain_->kind == DomainKind::Gumbel ? c_[n_] * nz.b + d_[n_] : 0.0;
    return out;
  }

  /// Normalizing constants of the base at horizon k (used for the w_k sequences).
  Normalizing base_normalizing(long k) const {
    if (!domain_) throw ConfigError("normalizing constants require a domain tag");
    return base_.normalizing(domain_->kind, domain_->alpha, k);
  }

  /// Poisson limit of the normalized point process.
  IntensityModel limit_intensity() const { return limit_intensity(domain_.value().c, domain_.value().d); }

  IntensityModel limit_intensity(double c, double d) const {
    if (!domain_) throw ConfigError("limit model requires a domain tag");
    switch (domain_->kind) {
      case DomainKind::Gumbel: return IntensityModel::gumbel(c, d);
      case DomainKind::Frechet: return IntensityModel::frechet(domain_->alpha, c, d);
      case DomainKind::Weibull: return IntensityModel::weibull(domain_->alpha, c, d);
    }
    throw ConfigError("bad domain");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"kind", "discrete"}, {"n", n_}, {"base", base_.to_json()},
                        {"discount", discount_.to_json()}, {"cost", cost_.to_json()}};
    if (domain_) j["domain"] = domain_->to_json();
    return j;
  }

  static DiscreteModel from_json(const nlohmann::json& j, std::optional<long> n_override = std::nullopt) {
    long n = n_override ? *n_override : j.value("n", 0L);
    if (n <= 0) throw ConfigError("model needs a horizon n (in the file or via --n)");
    const auto base = BaseDistribution::from_json(j.at("base"));
    const auto disc = j.contains("discount") ? SequenceFormula::from_json(j.at("discount"), 1.0)
                                             : SequenceFormula::constant_value(1.0);
    const auto cost = j.contains("cost") ? SequenceFormula::from_json(j.at("cost"), 0.0) : SequenceFormula{};
    std::optional<DomainTag> dom;
    if (j.contains("domain")) dom = DomainTag::from_json(j.at("domain"));
    return DiscreteModel(n, base, disc, cost, dom);
  }

 private:
  static bool monotone(const std::vector<double>& v) {
    bool up = true, down = true;
    for (std::size_t i = 2; i < v.size(); ++i) {
      if (v[i] < v[i - 1]) up = false;
      if (v[i] > v[i - 1]) down = false;
    }
    return up || down;
  }

  long n_;
  BaseDistribution base_;
  SequenceFormula discount_, cost_;
  std::optional<DomainTag> domain_;
  std::vector<double> c_, d_;
};

}  // namespace multistop
