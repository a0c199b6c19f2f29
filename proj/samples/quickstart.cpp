// Curves and thresholds of the Gumbel limit model, then the same question for
// a finite sequence of uniform observations answered by backward induction.
#include <cstdio>

#include "multistop/dp/dp_oracle.hpp"
#include "multistop/ode/solver.hpp"

using namespace multistop;

int main() {
  const IntensityModel gumbel = IntensityModel::gumbel();
  const StoppingCurveFamily curves = solve_curve_family(gumbel, 2);
  const ThresholdFamily thresholds = thresholds_from_family(curves);

  std::printf("   t      u1(t)      u2(t)   gamma2(t)\n");
  for (double t : {0.0, 0.25, 0.5, 0.75, 0.9}) {
    const auto free = Guarantee::minus_infinity();
    std::printf("%5.2f %10.6f %10.6f %10.6f\n", t, eval_curve(curves, 1, TimePoint(t), free),
                eval_curve(curves, 2, TimePoint(t), free), eval_threshold(thresholds, 2, TimePoint(t), free));
  }

  const DiscreteModel uniform(3, BaseDistribution::uniform(0.0, 1.0));
  const ThresholdTable table = backward_thresholds(uniform, 1);
  std::printf("best expected pick among 3 uniforms: %.7f\n", optimal_value(table, Guarantee::minus_infinity()));

  const double xs[] = {0.4, 0.3, 0.8};
  const MultiStopResult r = run_policy(table, xs, Guarantee::minus_infinity());
  std::printf("on (0.4, 0.3, 0.8) the rule stops at index %.0f with %.1f\n", r.times[0], r.values[0]);
}
