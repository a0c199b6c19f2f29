#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "multistop/core/extended.hpp"

namespace multistop {

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

/// Stopping times and rewards of one realization.
struct MultiStopResult {
  std::vector<double> times;         // T_1..T_m: index (discrete) or time in [0, 1] (limit)
  std::vector<std::size_t> indices;  // observation index, kNoIndex for a default stop at the horizon
  std::vector<double> values;        // stopped values; a default stop at the horizon carries the guarantee
  std::vector<bool> forced;          // default stop taken without an exceedance
  double guarantee = kMinusInf;
  double reward = kMinusInf;         // max(guarantee, values...)

  /// T_1 < ... < T_m while below the horizon; once a stop sits at the horizon all later ones do.
  bool ordering_ok(double horizon) const {
    for (std::size_t l = 1; l < times.size(); ++l) {
      if (times[l - 1] < horizon) {
        if (!(times[l] > times[l - 1])) return false;
      } else if (times[l] != horizon) {
        return false;
      }
    }
    for (double t : times)
      if (t > horizon) return false;
    double r = guarantee;
    for (double v : values) r = join(r, v);
    return r == reward;
  }
};

}  // namespace multistop
