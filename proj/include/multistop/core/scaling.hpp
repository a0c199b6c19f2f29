#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"

namespace multistop {

/// Parses "name:key=value,key=value" into a name and a parameter map.
inline std::pair<std::string, std::map<std::string, double>> parse_named_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  std::pair<std::string, std::map<std::string, double>> out;
  out.first = spec.substr(0, colon);
  if (colon == std::string::npos) return out;
  std::stringstream ss(spec.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value in '" + spec + "'");
    out.second[item.substr(0, eq)] = parse_extended(item.substr(eq + 1));
  }
  return out;
}

inline double param_or(const std::map<std::string, double>& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

/// The profile function H of a self-similar intensity.
struct HFunction {
  enum class Kind { Power, Exponential, TruncatedPower, Table };
  Kind kind = Kind::Exponential;
  double k = 1.0;
  double alpha = 1.0;
  double rate = 1.0;
  double shift = 0.0;
  std::vector<double> tx, ty;  // Table: piecewise linear, constant beyond the ends

  static HFunction power(double k, double alpha, double shift = 0.0) {
    HFunction h;
    h.kind = Kind::Power;
    h.k = k;
    h.alpha = alpha;
    h.shift = shift;
    return h;
  }
  static HFunction exponential(double k, double rate) {
    HFunction h;
    h.kind = Kind::Exponential;
    h.k = k;
    h.rate = rate;
    return h;
  }
  static HFunction truncated_power(double k, double alpha) {
    HFunction h;
    h.kind = Kind::TruncatedPower;
    h.k = k;
    h.alpha = alpha;
    return h;
  }

  double operator()(double x) const {
    switch (kind) {
      case Kind::Power:
        return x > shift ? k * std::pow(x - shift, -alpha) : kPlusInf;
      case Kind::Exponential:
        return k * std::exp(-rate * x);
      case Kind::TruncatedPower:
        return x < 0.0 ? k * std::pow(-x, alpha) : 0.0;
      case Kind::Table: {
        if (x <= tx.front()) return ty.front();
        if (x >= tx.back()) return ty.back();
        const auto it = std::upper_bound(tx.begin(), tx.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - tx.begin()) - 1;
        const double w = (x - tx[i]) / (tx[i + 1] - tx[i]);
        return ty[i] + w * (ty[i + 1] - ty[i]);
      }
    }
    return kNaN;
  }

  nlohmann::json to_json() const {
    switch (kind) {
      case Kind::Power: return {{"family", "power"}, {"k", k}, {"alpha", alpha}, {"shift", shift}};
      case Kind::Exponential: return {{"family", "exponential"}, {"k", k}, {"rate", rate}};
      case Kind::TruncatedPower: return {{"family", "truncated_power"}, {"k", k}, {"alpha", alpha}};
      case Kind::Table: return {{"family", "table"}, {"x", tx}, {"h", ty}};
    }
    return {};
  }

  static HFunction from_json(const nlohmann::json& j) {
    const std::string f = j.at("family").get<std::string>();
    if (f == "power") return power(j.value("k", 1.0), j.at("alpha").get<double>(), j.value("shift", 0.0));
    if (f == "exponential") return exponential(j.value("k", 1.0), j.value("rate", 1.0));
    if (f == "truncated_power" || f == "truncated_linear")
      return truncated_power(j.value("k", 1.0), f == "truncated_linear" ? 1.0 : j.at("alpha").get<double>());
    if (f == "table") {
      HFunction h;
      h.kind = Kind::Table;
      h.tx = j.at("x").get<std::vector<double>>();
      h.ty = j.at("h").get<std::vector<double>>();
      if (h.tx.size() < 2 || h.tx.size() != h.ty.size()) throw ConfigError("H table needs matching x/h arrays");
      for (std::size_t i = 1; i < h.tx.size(); ++i) {
        if (!(h.tx[i] > h.tx[i - 1])) throw ConfigError("H table abscissae must increase");
        if (h.ty[i] > h.ty[i - 1]) throw ConfigError("H must be nonincreasing");
      }
      return h;
    }
    throw ConfigError("unknown H family '" + f + "'");
  }

  /// "power:k=2,alpha=2", "exponential:rate=1", "truncated_power:alpha=1", "truncated_linear".
  static HFunction parse(const std::string& spec) {
    const auto [name, p] = parse_named_spec(spec);
    if (name == "power") return power(param_or(p, "k", 1.0), param_or(p, "alpha", 1.0), param_or(p, "shift", 0.0));
    if (name == "exponential") return exponential(param_or(p, "k", 1.0), param_or(p, "rate", 1.0));
    if (name == "truncated_power") return truncated_power(param_or(p, "k", 1.0), param_or(p, "alpha", 1.0));
    if (name == "truncated_linear") return truncated_power(param_or(p, "k", 1.0), 1.0);
    throw ConfigError("unknown H family '" + name + "'");
  }
};

/**
 * Scale function v(t) of a self-similar intensity.
 *
 * Power: v = (scale (1 - t^q) / q)^p.  Log: v = ln(scale (1 - t^q) / q).
 */
struct VFunction {
  enum class Kind { Power, Log };
  Kind kind = Kind::Log;
  double scale = 1.0;
  double q = 1.0;
  double p = 1.0;

  static VFunction power(double scale, double q, double p) {
    VFunction v;
    v.kind = Kind::Power;
    v.scale = scale;
    v.q = q;
    v.p = p;
    return v;
  }
  static VFunction log(double scale = 1.0, double q = 1.0) {
    VFunction v;
    v.kind = Kind::Log;
    v.scale = scale;
    v.q = q;
    return v;
  }

  double base(double t) const { return scale * (q == 1.0 ? 1.0 - t : -std::expm1(q * std::log(t)) / q); }
  double dbase(double t) const { return -scale * (q == 1.0 ? 1.0 : std::pow(t, q - 1.0)); }

  double operator()(double t) const {
    const double b = base(t);
    return kind == Kind::Power ? std::pow(b, p) : std::log(b);
  }
  double derivative(double t) const {
    const double b = base(t);
    return kind == Kind::Power ? p * std::pow(b, p - 1.0) * dbase(t) : dbase(t) / b;
  }

  nlohmann::json to_json() const {
    if (kind == Kind::Power) return {{"family", "power"}, {"scale", scale}, {"q", q}, {"p", p}};
    return {{"family", "log"}, {"scale", scale}, {"q", q}};
  }
  static VFunction from_json(const nlohmann::json& j) {
    const std::string f = j.at("family").get<std::string>();
    if (f == "power") return power(j.value("scale", 1.0), j.value("q", 1.0), j.at("p").get<double>());
    if (f == "log") return log(j.value("scale", 1.0), j.value("q", 1.0));
    throw ConfigError("unknown v family '" + f + "'");
  }
  /// "power:scale=1,q=1,p=0.5" or "log:q=1".
  static VFunction parse(const std::string& spec) {
    const auto [name, pm] = parse_named_spec(spec);
    if (name == "power") return power(param_or(pm, "scale", 1.0), param_or(pm, "q", 1.0), param_or(pm, "p", 1.0));
    if (name == "log") return log(param_or(pm, "scale", 1.0), param_or(pm, "q", 1.0));
    throw ConfigError("unknown v family '" + name + "'");
  }
};

enum class ClosedFormCase { FiniteLower = 1, UpperBounded = 2, Translation = 3 };

/// Names one of the three explicitly solvable intensity classes together with H and v.
struct ClosedFormTag {
  ClosedFormCase kind = ClosedFormCase::Translation;
  HFunction H;
  VFunction v;

  int case_number() const { return static_cast<int>(kind); }

  nlohmann::json to_json() const { return {{"case", case_number()}, {"H", H.to_json()}, {"v", v.to_json()}}; }
  static ClosedFormTag from_json(const nlohmann::json& j) {
    ClosedFormTag t;
    const int c = j.at("case").get<int>();
    if (c < 1 || c > 3) throw ConfigError("closed-form case must be 1, 2 or 3");
    t.kind = static_cast<ClosedFormCase>(c);
    t.H = HFunction::from_json(j.at("H"));
    t.v = VFunction::from_json(j.at("v"));
    return t;
  }
};

}  // namespace multistop
