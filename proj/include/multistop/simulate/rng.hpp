#pragma once

#include <cstdint>
#include <random>

namespace multistop {

/**
 * Independent random stream number `index` under a root seed.
 *
 * Streams are keyed by (seed, index) only, so replication r draws the same
 * numbers whether it runs first, last, or on another thread.
 */
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x6d73u};
    engine_.seed(seq);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53; }

  long poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<long> d(mean);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace multistop
