// Two choices among n exponential observations: the optimal rule against the
// limit-derived domain rule, on common random numbers.
#include <cstdio>

#include "multistop/simulate/discrete.hpp"

using namespace multistop;

int main() {
  const DiscreteModel base(100, BaseDistribution::exponential(1.0), SequenceFormula::constant_value(1.0), {},
                           DomainTag{DomainKind::Gumbel, 1.0, 0.0, 0.0});
  const LimitInputs limit = prepare_limit(base, 2);

  StudySpec spec;
  spec.n_list = {20, 100, 500};
  spec.m = 2;
  spec.reps = 20000;
  spec.seed = 7;
  spec.threads = numerics::default_threads();

  std::printf("limit u2(0) = %.6f\n", limit.limit);
  std::printf("%5s %8s %12s %10s %9s\n", "n", "policy", "scaled", "gap", "se");
  for (const StudyRow& row : convergence_study(base, limit, spec))
    std::printf("%5ld %8s %12.6f %10.6f %9.6f\n", row.n, row.policy.c_str(), row.scaled_value, row.gap, row.se);
}
