#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multistop/core/errors.hpp"
#include "multistop/numerics/stats.hpp"

namespace multistop {

/// Monte Carlo estimate of an expected reward.
struct EstimateReport {
  std::size_t replications = 0;
  double mean = 0.0;
  double se = 0.0;  // sample standard deviation / sqrt(replications)
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;  // truncation bias and similar caveats

  nlohmann::json to_json() const {
    return {{"replications", replications}, {"mean", mean},   {"se", se},     {"ci_lo", ci_lo},
            {"ci_hi", ci_hi},               {"level", level}, {"seed", seed}, {"notes", notes}};
  }
};

inline EstimateReport summarize(std::span<const double> rewards, double level, std::uint64_t seed) {
  if (rewards.size() < 2) throw ConfigError("an estimate needs at least two replications");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  const auto s = numerics::mean_stats(rewards);
  EstimateReport r;
  r.replications = rewards.size();
  r.mean = s.mean;
  r.se = s.se;
  const double z = numerics::normal_quantile(0.5 + 0.5 * level);
  r.ci_lo = s.mean - z * s.se;
  r.ci_hi = s.mean + z * s.se;
  r.level = level;
  r.seed = seed;
  return r;
}

}  // namespace multistop
