#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace multistop::numerics {

/// Pairwise summation; the result depends only on the order of the input.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

struct MeanStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  double se = 0.0;
  std::size_t count = 0;
};

inline MeanStats mean_stats(std::span<const double> v) {
  MeanStats s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() > 1) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - s.mean) * (v[i] - s.mean);
    s.variance = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
    s.se = std::sqrt(s.variance / static_cast<double>(v.size()));
  }
  return s;
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace multistop::numerics
