#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "multistop/dp/dp_oracle.hpp"
#include "multistop/io/serialize.hpp"
#include "multistop/ode/solver.hpp"
#include "multistop/simulate/discrete.hpp"
#include "multistop/simulate/poisson.hpp"
#include "support/property.hpp"

using namespace multistop;

namespace {

constexpr int kCases = 1000;

struct Solved {
  IntensityModel model;
  StoppingCurveFamily fam;
  ThresholdFamily th;
};

const std::vector<Solved>& families() {
  static const std::vector<Solved> all = [] {
    SolveSpec spec;
    spec.seed_sensitivity = false;
    std::vector<Solved> v;
    for (const auto& [model, m] : std::vector<std::pair<IntensityModel, int>>{
             {IntensityModel::gumbel(), 3}, {IntensityModel::frechet(2.0), 3}, {IntensityModel::weibull(1.5), 2}}) {
      auto fam = solve_curve_family(model, m, spec);
      auto th = thresholds_from_family(fam);
      v.push_back({model, std::move(fam), std::move(th)});
    }
    return v;
  }();
  return all;
}

struct CurveCase {
  std::size_t family;
  int j;
  double t1, t2, x1, x2;
};

// Guarantees span the tabulated range and a stretch below and above it.
double draw_x(prop::Rng& r, const StoppingCurveFamily& f) {
  const double lo = f.x_grid.front(), hi = f.x_grid.back();
  const double span = hi - lo;
  const double x = prop::uniform(r, lo - (f.c == kMinusInf ? 0.2 * span : 0.0), hi + 0.2 * span);
  return std::max(x, f.c);
}

CurveCase draw_curve_case(prop::Rng& r) {
  CurveCase c;
  c.family = static_cast<std::size_t>(prop::integer(r, 0, static_cast<long>(families().size()) - 1));
  const auto& f = families()[c.family].fam;
  c.j = static_cast<int>(prop::integer(r, 1, f.m()));
  c.t1 = prop::uniform(r, 0.0, 1.0);
  c.t2 = prop::uniform(r, 0.0, 1.0);
  if (c.t1 > c.t2) std::swap(c.t1, c.t2);
  c.x1 = draw_x(r, f);
  c.x2 = draw_x(r, f);
  if (c.x1 > c.x2) std::swap(c.x1, c.x2);
  return c;
}

std::string describe(const CurveCase& c, const std::string& what, double a, double b) {
  std::ostringstream os;
  os.precision(17);
  os << what << ": family " << c.family << " j=" << c.j << " t=(" << c.t1 << ", " << c.t2 << ") x=(" << c.x1 << ", "
     << c.x2 << ") values " << a << " vs " << b;
  return os.str();
}

}  // namespace

TEST(Properties, CurvesAreMonotoneInTimeGuaranteeAndLevel) {
  EXPECT_TRUE(prop::for_all<CurveCase>(kCases, 101, draw_curve_case, [](const CurveCase& c) -> std::string {
    const auto& f = families()[c.family].fam;
    const double a = eval_curve(f, c.j, c.t1, c.x1);
    const double later = eval_curve(f, c.j, c.t2, c.x1);
    const double higher = eval_curve(f, c.j, c.t1, c.x2);
    const double below = eval_curve(f, c.j - 1, c.t1, c.x1);
    const double slack = 1e-12 * (1.0 + std::abs(a));
    if (later > a + slack) return describe(c, "increase in t", a, later);
    if (higher < a - slack) return describe(c, "decrease in x", a, higher);
    if (below > a + slack) return describe(c, "level below exceeds level j", below, a);
    if (a < c.x1) return describe(c, "curve below its guarantee", a, c.x1);
    return "";
  }));
}

TEST(Properties, CurvesMeetTheGuaranteeAtTheHorizon) {
  EXPECT_TRUE(prop::for_all<CurveCase>(kCases, 102, draw_curve_case, [](const CurveCase& c) -> std::string {
    const auto& f = families()[c.family].fam;
    const double u = eval_curve(f, c.j, 1.0, c.x1);
    return u == c.x1 ? "" : describe(c, "u(1, x) != x", u, c.x1);
  }));
}

TEST(Properties, ThresholdEquivalence) {
  // At grid nodes: u^{j-1}(t, y) > u^j(t, x) exactly when y > gamma^j(t, x), away from a thin band.
  struct Case {
    CurveCase c;
    std::size_t k;
    double offset;
  };
  const auto gen = [](prop::Rng& r) {
    Case s{draw_curve_case(r), 0, 0.0};
    const auto& th = families()[s.c.family].th;
    s.k = static_cast<std::size_t>(prop::integer(r, 0, static_cast<long>(th.nt()) - 1));
    const double mag = std::pow(10.0, prop::uniform(r, -2.0, 0.5));
    s.offset = prop::integer(r, 0, 1) ? mag : -mag;
    return s;
  };
  int decided = 0;
  EXPECT_TRUE(prop::for_all<Case>(kCases, 103, gen, [&](const Case& s) -> std::string {
    const auto& [model, fam, th] = families()[s.c.family];
    const double t = th.t_grid[s.k];
    const double x = s.c.x1;
    const double g = eval_threshold(th, s.c.j, t, x);
    const double y = g + s.offset * (1.0 + std::abs(g));
    if (y < fam.c) return "";
    ++decided;
    const bool stop_by_curves = eval_curve(fam, s.c.j - 1, t, y) > eval_curve(fam, s.c.j, t, x);
    const bool stop_by_gamma = y > g;
    if (stop_by_curves == stop_by_gamma) return "";
    // gamma = x where the two curves coincide: any y <= x neither stops.
    if (g == x && !stop_by_gamma) return "";
    return describe(s.c, "equivalence fails at y = " + std::to_string(y) + ", t = " + std::to_string(t), g, y);
  }));
  EXPECT_GT(decided, kCases / 2);
}

TEST(Properties, ThresholdsExceedTheirGuarantee) {
  EXPECT_TRUE(prop::for_all<CurveCase>(kCases, 104, draw_curve_case, [](const CurveCase& c) -> std::string {
    const auto& th = families()[c.family].th;
    const double t = std::min(c.t1, 0.999);
    const double a = eval_threshold(th, c.j, t, c.x1);
    const double b = eval_threshold(th, c.j, t, c.x2);
    if (a < c.x1) return describe(c, "gamma below x", a, c.x1);
    if (b < a - 1e-12 * (1.0 + std::abs(a))) return describe(c, "gamma decreasing in x", a, b);
    return "";
  }));
}

TEST(Properties, PoissonStopsAreOrdered) {
  struct Case {
    std::size_t family;
    int m;
    std::uint64_t seed;
    double x;
  };
  const auto gen = [](prop::Rng& r) {
    Case c;
    c.family = static_cast<std::size_t>(prop::integer(r, 0, static_cast<long>(families().size()) - 1));
    const auto& f = families()[c.family].fam;
    c.m = static_cast<int>(prop::integer(r, 1, f.m()));
    c.seed = r();
    c.x = prop::integer(r, 0, 1) ? f.c : draw_x(r, f);
    return c;
  };
  std::map<std::size_t, SamplingRegion> regions;
  for (std::size_t q = 0; q < families().size(); ++q)
    regions.emplace(q, staircase_region(families()[q].model, families()[q].th, 0.999));
  EXPECT_TRUE(prop::for_all<Case>(kCases, 105, gen, [&](const Case& c) -> std::string {
    const auto& s = families()[c.family];
    Stream rng(c.seed, 0);
    const auto pts = sample_poisson(s.model, regions.at(c.family), rng);
    const Guarantee g = c.x == kMinusInf ? Guarantee::minus_infinity() : Guarantee(c.x);
    const auto r = stop_poisson(pts, s.th, c.m, g);
    if (r.times.size() != static_cast<std::size_t>(c.m)) return "wrong number of stops";
    if (!r.ordering_ok(1.0)) return "stops out of order for seed " + std::to_string(c.seed);
    if (r.reward < c.x) return "reward below the guarantee";
    return "";
  }));
}

TEST(Properties, DiscreteStopsAreOrderedAndValuesMonotone) {
  struct Case {
    long n;
    int m;
    std::vector<double> z, p;
    double x;
    std::uint64_t seed;
  };
  const auto gen = [](prop::Rng& r) {
    Case c;
    c.n = prop::integer(r, 1, 8);
    c.m = static_cast<int>(prop::integer(r, 1, std::min<long>(3, c.n)));
    const long k = prop::integer(r, 1, 5);
    double tot = 0.0;
    for (long i = 0; i < k; ++i) {
      c.z.push_back(std::round(prop::uniform(r, -4.0, 4.0) * 100.0) / 100.0 + 1e-3 * i);
      c.p.push_back(prop::uniform(r, 0.05, 1.0));
      tot += c.p.back();
    }
    for (auto& q : c.p) q /= tot;
    c.x = prop::integer(r, 0, 2) == 0 ? kMinusInf : prop::uniform(r, 0.0, 1.0);  // position in the x grid
    c.seed = r();
    return c;
  };
  EXPECT_TRUE(prop::for_all<Case>(kCases, 106, gen, [](const Case& c) -> std::string {
    const DiscreteModel model(c.n, BaseDistribution::finite(c.z, c.p));
    const auto T = backward_thresholds(model, c.m);
    // Finite supports are tabulated exactly at their grid; elsewhere W is interpolated.
    const auto pick = static_cast<std::size_t>(c.x * static_cast<double>(T.x_grid.size()));
    const Guarantee g = c.x == kMinusInf ? Guarantee::minus_infinity() : Guarantee(T.x_grid[pick]);
    const auto xs = sample_discrete(model, c.seed, 0);
    const auto r = run_policy(T, xs, g);
    if (!r.ordering_ok(static_cast<double>(c.n))) return "stops out of order, n = " + std::to_string(c.n);
    for (std::size_t l = 0; l < r.indices.size(); ++l)
      if (r.indices[l] > static_cast<std::size_t>(c.n - c.m + 1 + static_cast<long>(l))) return "stop after its deadline";
    const double v = optimal_value(T, g);
    if (c.m < c.n) {
      const double v_more = optimal_value(backward_thresholds(model, c.m + 1), g);
      if (v_more < v - 1e-12) {
        std::ostringstream os;
        os.precision(17);
        os << "value decreases in m: n=" << c.n << " m=" << c.m << " x=" << g.value() << " " << v << " > " << v_more
           << " atoms";
        for (std::size_t i = 0; i < c.z.size(); ++i) os << " " << c.z[i] << "@" << c.p[i];
        return os.str();
      }
    }
    for (long i = 0; i + 1 <= c.n - c.m; ++i)
      for (std::size_t k = 0; k < T.x_grid.size(); ++k)
        if (T.W(c.m, i, T.x_grid[k]) < T.W(c.m, i + 1, T.x_grid[k]) - 1e-12) return "W increases in i";
    return "";
  }));
}

TEST(Properties, PoissonCountsMatchRegionalMass) {
  // One shared set of realizations on [0, 1] x [-1, inf) for G = t^{-0.3} e^{-y};
  // every sub-rectangle's mean count must sit within 3 sigma of its mass.
  const double kappa = 0.3, L = -1.0;
  const auto model = IntensityModel::gumbel(kappa);
  const auto R = rectangle_region(model, 1.0, L);
  const std::size_t reps = 4000;
  std::vector<MarkedPointSet> sets;
  for (std::size_t r = 0; r < reps; ++r) {
    Stream rng(77, r);
    sets.push_back(sample_poisson(model, R, rng));
  }
  const auto time_mass = [&](double a, double b) {
    return (std::pow(b, 1.0 - kappa) - std::pow(a, 1.0 - kappa)) / (1.0 - kappa);
  };
  struct Rect {
    double a, b, y1, y2;
  };
  const auto gen = [&](prop::Rng& r) {
    Rect q;
    q.a = prop::uniform(r, 0.0, 1.0);
    q.b = prop::uniform(r, 0.0, 1.0);
    if (q.a > q.b) std::swap(q.a, q.b);
    q.y1 = prop::uniform(r, L, 3.0);
    q.y2 = prop::integer(r, 0, 3) == 0 ? kPlusInf : prop::uniform(r, q.y1, 5.0);
    return q;
  };
  int exceed = 0;
  const int cases = kCases;
  EXPECT_TRUE(prop::for_all<Rect>(cases, 107, gen, [&](const Rect& q) -> std::string {
    const double mass = time_mass(q.a, q.b) * (std::exp(-q.y1) - std::exp(-q.y2));
    if (!(mass > 1e-6)) return "";
    double total = 0.0;
    for (const auto& s : sets)
      for (std::size_t k = 0; k < s.size(); ++k)
        total += (s.tau[k] >= q.a && s.tau[k] < q.b && s.y[k] >= q.y1 && s.y[k] < q.y2) ? 1.0 : 0.0;
    const double mean = total / static_cast<double>(reps);
    if (std::abs(mean - mass) > 3.0 * std::sqrt(mass / static_cast<double>(reps))) ++exceed;
    return "";
  }));
  // Per-case 3 sigma checks fail with probability about 0.0027 each.
  const boost::math::binomial_distribution<double> allowance(cases, 0.0027);
  const double limit = boost::math::quantile(allowance, 0.999);
  EXPECT_LE(exceed, limit) << exceed << " of " << cases << " rectangles outside 3 sigma";
}

TEST(Properties, RerunsAreBitIdentical) {
  struct Case {
    std::uint64_t seed;
    int threads;
    long n;
  };
  const auto gen = [](prop::Rng& r) {
    return Case{r(), static_cast<int>(prop::integer(r, 1, 4)), prop::integer(r, 2, 30)};
  };
  EXPECT_TRUE(prop::for_all<Case>(kCases, 108, gen, [](const Case& c) -> std::string {
    const DiscreteModel model(c.n, BaseDistribution::exponential(1.0));
    const auto T = backward_thresholds(model, 1, std::vector<double>{0.0, 0.5, 1.0, 2.0, 4.0, 8.0});
    PolicyInputs in;
    in.table = &T;
    const std::vector<PreparedPolicy> ps{prepare_policy(model, PolicySpec{}, in)};
    const auto a = simulate_rewards(model, ps, 40, c.seed, 1);
    const auto b = simulate_rewards(model, ps, 40, c.seed, c.threads);
    return a == b ? "" : "thread count changed the rewards";
  }));
  SolveSpec spec;
  spec.seed_sensitivity = false;
  const auto once = io::to_json(solve_curve_family(IntensityModel::frechet(2.0), 2, spec)).dump();
  spec.threads = 3;
  const auto again = io::to_json(solve_curve_family(IntensityModel::frechet(2.0), 2, spec)).dump();
  EXPECT_EQ(once, again);
}
