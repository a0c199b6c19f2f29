#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace multistop::numerics {

/// Index k with xs[k] <= x < xs[k+1], clamped to [0, size-2].
inline std::size_t segment_index(std::span<const double> xs, double x) {
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t k = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
  return std::min(k, xs.size() - 2);
}

/// Fritsch-Butland slopes (the usual PCHIP choice); preserves monotonicity of the data.
inline void pchip_slopes(std::span<const double> x, std::span<const double> y, std::span<double> d) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("pchip needs two nodes");
  if (n == 2) {
    d[0] = d[1] = (y[1] - y[0]) / (x[1] - x[0]);
    return;
  }
  auto delta = [&](std::size_t k) { return (y[k + 1] - y[k]) / (x[k + 1] - x[k]); };
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double h0 = x[k] - x[k - 1], h1 = x[k + 1] - x[k];
    const double d0 = delta(k - 1), d1 = delta(k);
    if (d0 * d1 <= 0.0) {
      d[k] = 0.0;
    } else {
      const double w1 = 2.0 * h1 + h0, w2 = h1 + 2.0 * h0;
      d[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(s) > std::abs(3.0 * d0)) return 3.0 * d0;
    return s;
  };
  d[0] = end_slope(x[1] - x[0], x[2] - x[1], delta(0), delta(1));
  d[n - 1] = end_slope(x[n - 1] - x[n - 2], x[n - 2] - x[n - 3], delta(n - 2), delta(n - 3));
}

inline double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
  const double h = x1 - x0;
  const double s = (x - x0) / h;
  const double s2 = s * s, s3 = s2 * s;
  // Written around y0 so that flat segments reproduce their value exactly.
  return y0 + (y1 - y0) * (3 * s2 - 2 * s3) + h * d0 * (s3 - 2 * s2 + s) + h * d1 * (s3 - s2);
}

inline double hermite_derivative(double x0, double x1, double y0, double y1, double d0, double d1,
                                 double x) {
  const double h = x1 - x0;
  const double s = (x - x0) / h;
  const double s2 = s * s;
  return (y0 * (6 * s2 - 6 * s) + y1 * (-6 * s2 + 6 * s)) / h + d0 * (3 * s2 - 4 * s + 1) +
         d1 * (3 * s2 - 2 * s);
}

/// Solve hermite(...) = target on one segment whose end values bracket target.
inline double hermite_solve(double x0, double x1, double y0, double y1, double d0, double d1,
                            double target) {
  const bool increasing = y1 >= y0;
  double lo = x0, hi = x1;
  double x = y1 != y0 ? x0 + (target - y0) / (y1 - y0) * (x1 - x0) : 0.5 * (x0 + x1);
  x = std::clamp(x, lo, hi);
  for (int it = 0; it < 100; ++it) {
    const double f = hermite(x0, x1, y0, y1, d0, d1, x) - target;
    if (f == 0.0) return x;
    if ((f < 0.0) == increasing) lo = x; else hi = x;
    const double df = hermite_derivative(x0, x1, y0, y1, d0, d1, x);
    double xn = df != 0.0 ? x - f / df : 0.5 * (lo + hi);
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) <= 1e-15 * (1.0 + std::abs(x)) || hi - lo <= 1e-15 * (1.0 + std::abs(x)))
      return xn;
    x = xn;
  }
  return x;
}

/**
 * Shape-preserving piecewise cubic interpolant of nondecreasing-in-x data.
 *
 * Outside [x_front, x_back] it extends linearly with the end slopes unless the
 * caller handles extrapolation itself.
 */
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.size() != y_.size() || x_.size() < 2) throw std::invalid_argument("pchip: bad sizes");
    for (std::size_t k = 1; k < x_.size(); ++k)
      if (!(x_[k] > x_[k - 1])) throw std::invalid_argument("pchip: abscissae not increasing");
    d_.resize(x_.size());
    pchip_slopes(x_, y_, d_);
  }

  double operator()(double x) const {
    const std::size_t k = segment_index(x_, x);
    if (x < x_.front()) return y_.front() + d_.front() * (x - x_.front());
    if (x > x_.back()) return y_.back() + d_.back() * (x - x_.back());
    return hermite(x_[k], x_[k + 1], y_[k], y_[k + 1], d_[k], d_[k + 1], x);
  }

  /// Largest x in [x_front, x_back] with value <= target, for nondecreasing data.
  double upper_preimage(double target) const {
    if (target < y_.front()) return x_.front();
    if (target >= y_.back()) return x_.back();
    const auto it = std::upper_bound(y_.begin(), y_.end(), target);
    const std::size_t k = static_cast<std::size_t>(it - y_.begin()) - 1;
    if (y_[k + 1] == y_[k]) return x_[k + 1];
    return hermite_solve(x_[k], x_[k + 1], y_[k], y_[k + 1], d_[k], d_[k + 1], target);
  }

  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  const std::vector<double>& slopes() const { return d_; }

 private:
  std::vector<double> x_, y_, d_;
};

}  // namespace multistop::numerics
