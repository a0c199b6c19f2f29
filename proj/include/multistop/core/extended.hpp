#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "multistop/core/errors.hpp"

namespace multistop {

inline constexpr double kMinusInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPlusInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// A point of the time interval [0, 1].
class TimePoint {
 public:
  explicit TimePoint(double t) : t_(t) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time point outside [0,1]: " + std::to_string(t));
  }
  double value() const { return t_; }

 private:
  double t_;
};

/**
 * Guarantee level of a stopping problem, an element of [-inf, inf).
 *
 * The guarantee-free problem is represented by IEEE negative infinity, which
 * behaves correctly under max(); callers that need to branch use
 * is_minus_infinity().
 */
class Guarantee {
 public:
  explicit Guarantee(double x) : x_(x) {
    if (std::isnan(x) || x == kPlusInf) throw DomainError("guarantee must lie in [-inf, inf)");
  }
  static Guarantee minus_infinity() { return Guarantee(kMinusInf); }
  bool is_minus_infinity() const { return x_ == kMinusInf; }
  double value() const { return x_; }

 private:
  double x_;
};

inline double join(double a, double b) { return a < b ? b : a; }

inline std::string format_extended(double x) {
  if (x == kMinusInf) return "-inf";
  if (x == kPlusInf) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_extended(const std::string& s) {
  if (s == "-inf" || s == "-Infinity" || s == "-infinity") return kMinusInf;
  if (s == "inf" || s == "Infinity" || s == "infinity") return kPlusInf;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

}  // namespace multistop
