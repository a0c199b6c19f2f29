#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "multistop/closed_form/closed_form.hpp"
#include "multistop/core/discrete_model.hpp"
#include "multistop/core/errors.hpp"
#include "multistop/core/hash.hpp"
#include "multistop/core/intensity.hpp"
#include "multistop/dp/dp_oracle.hpp"
#include "multistop/io/serialize.hpp"
#include "multistop/numerics/parallel.hpp"
#include "multistop/ode/solver.hpp"
#include "multistop/simulate/discrete.hpp"
#include "multistop/simulate/poisson.hpp"

namespace multistop::cli {

using nlohmann::json;

/// Everything a subcommand reads from the command line.
struct RunConfig {
  std::string subcommand;
  std::string model_path;
  std::string spec_path;
  std::string out_path;
  std::string format = "csv";
  std::optional<std::uint64_t> seed_flag;
  std::uint64_t seed = 0;
  int threads = 1;
  int verbosity = 0;

  long n = 0;
  int m = 1;
  std::string guarantee = "-inf";

  // dp
  bool value_only = false;
  std::string realization_path;
  int nodes = 64;
  double tolerance = 1e-5;

  // curves
  std::size_t t_stride = 1;
  std::size_t x_stride = 1;
  std::vector<double> at;
  bool thresholds = false;

  // closed-form
  int cf_case = 3;
  std::string H = "exponential";
  std::string v = "log";
  bool roots_only = false;
  int t_points = 100;
  std::vector<double> xs;

  // simulate, converge
  std::string policy = "dp";
  std::vector<std::string> policies{"dp", "domain"};
  std::vector<long> n_list;
  std::size_t reps = 10000;
  double level = 0.95;
  double delta = 1e-3;
  bool no_bias_check = false;
  bool verbatim_weibull = false;
};

namespace detail {

inline std::uint64_t resolve_seed(const RunConfig& rc) {
  if (rc.seed_flag) return *rc.seed_flag;
  const char* env = std::getenv("MULTISTOP_SEED");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  errno = 0;
  const unsigned long long s = std::strtoull(env, &end, 0);
  if (errno != 0 || end == env || *end != '\0') throw ConfigError("MULTISTOP_SEED is not an unsigned integer");
  return s;
}

inline bool is_discrete(const json& j) { return j.value("kind", "") == "discrete"; }

inline DiscreteModel load_discrete(const json& j, long n) {
  if (!is_discrete(j)) throw ConfigError("this subcommand needs a discrete model file (\"kind\": \"discrete\")");
  return DiscreteModel::from_json(j, n > 0 ? std::optional<long>(n) : std::nullopt);
}

// Intensity file, or the limit intensity of a tagged discrete model.
inline IntensityModel load_intensity(const json& j) {
  if (is_discrete(j)) {
    const auto model = DiscreteModel::from_json(j, j.value("n", 0L) > 0 ? std::nullopt : std::optional<long>(1));
    if (!model.domain()) throw ConfigError("a discrete model needs a domain tag to define a limit intensity");
    return model.limit_intensity();
  }
  return IntensityModel::from_json(j);
}

inline SolveSpec solve_spec_from_json(const json& j, int threads) {
  SolveSpec s;
  s.threads = threads;
  if (j.is_null()) return s;
  if (!j.is_object()) throw ConfigError("solver spec must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "seed_mode") {
      const auto mode = val.get<std::string>();
      if (mode == "asymptotic") s.seed_mode = SeedMode::Asymptotic;
      else if (mode == "closed_form") s.seed_mode = SeedMode::ClosedForm;
      else throw ConfigError("seed_mode must be \"asymptotic\" or \"closed_form\"");
    } else if (key == "eps") s.eps = val.get<double>();
    else if (key == "dtau") s.dtau = val.get<double>();
    else if (key == "dtau_x") s.dtau_x = val.get<double>();
    else if (key == "ext_tau") s.ext_tau = val.get<double>();
    else if (key == "top_tol") s.top_tol = val.get<double>();
    else if (key == "top_mass_ratio") s.top_mass_ratio = val.get<double>();
    else if (key == "top_growth") s.top_growth = val.get<double>();
    else if (key == "max_top_nodes") s.max_top_nodes = val.get<int>();
    else if (key == "x_grid") s.x_grid = val.get<std::vector<double>>();
    else if (key == "tol") s.tol = val.get<double>();
    else if (key == "max_refinements") s.max_refinements = val.get<int>();
    else if (key == "seed_sensitivity") s.seed_sensitivity = val.get<bool>();
    else if (key == "t_floor") s.t_floor = val.get<double>();
    else if (key == "monotone_tol") s.monotone_tol = val.get<double>();
    else throw ConfigError("unknown solver spec key '" + key + "'");
  }
  if (!(s.eps > 0.0 && s.eps < 1.0)) throw ConfigError("eps must lie in (0, 1)");
  if (!(s.dtau > 0.0) || !(s.dtau_x > 0.0) || !(s.tol > 0.0)) throw ConfigError("dtau, dtau_x and tol must be positive");
  return s;
}

inline Guarantee parse_guarantee(const std::string& s) {
  const double x = parse_extended(s);
  if (std::isnan(x) || x == kPlusInf) throw ConfigError("guarantee must be finite or -inf");
  return x == kMinusInf ? Guarantee::minus_infinity() : Guarantee(x);
}

// Numbers separated by commas or whitespace; a non-numeric first line is a header.
inline std::vector<double> read_realization(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<double> xs;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    for (char& ch : line)
      if (ch == ',' || ch == ';' || ch == '\t' || ch == '\r') ch = ' ';
    std::istringstream ss(line);
    std::string tok;
    std::vector<double> row;
    bool numeric = true;
    while (ss >> tok) {
      try {
        row.push_back(parse_extended(tok));
      } catch (const Error&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (!first) throw ConfigError("non-numeric entry in realization file '" + path + "'");
    } else {
      xs.insert(xs.end(), row.begin(), row.end());
    }
    first = false;
  }
  return xs;
}

inline std::string csv_header(const json& meta) {
  std::string s = "# multistop " + meta.at("subcommand").get<std::string>() +
                  " config_hash=" + meta.at("config_hash").get<std::string>() +
                  " seed=" + std::to_string(meta.at("seed").get<std::uint64_t>());
  if (meta.contains("model_hash")) s += " model_hash=" + meta.at("model_hash").get<std::string>();
  return s + "\n";
}

struct Context {
  RunConfig rc;
  json model_json;  // null when the subcommand takes no model
  json meta;
  std::ostream& out;
  std::ostream& err;

  void emit(const std::string& text) const {
    if (rc.out_path.empty()) {
      out << text;
    } else {
      io::write_text_file(rc.out_path, text);
      if (rc.verbosity > 0) err << "wrote " << rc.out_path << "\n";
    }
  }
  void emit_json(json j) const {
    j["metadata"] = meta;
    emit(j.dump(2) + "\n");
  }
  void emit_csv(const std::string& body, const std::vector<std::string>& notes = {}) const {
    std::string text = csv_header(meta);
    for (const auto& n : notes) text += "# " + n + "\n";
    emit(text + body);
  }
  bool json_out() const { return rc.format == "json"; }
};

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Inputs that determine the output; paths, threads and format are left out.
inline json hashed_config(const RunConfig& rc, const json& model, const json& spec) {
  json j = {{"subcommand", rc.subcommand}, {"model", model}, {"spec", spec},  {"n", rc.n},
            {"m", rc.m},                   {"guarantee", rc.guarantee},       {"seed", rc.seed}};
  if (rc.subcommand == "dp")
    j.update({{"value", rc.value_only}, {"nodes", rc.nodes}, {"tolerance", rc.tolerance},
              {"realization", rc.realization_path.empty() ? json() : json(fnv1a_hex(read_text(rc.realization_path)))}});
  if (rc.subcommand == "curves") j.update({{"at", rc.at}, {"thresholds", rc.thresholds}});
  if (rc.subcommand == "closed-form")
    j.update({{"case", rc.cf_case}, {"H", rc.H}, {"v", rc.v}, {"t_points", rc.t_points}, {"x", rc.xs}});
  if (rc.subcommand == "simulate")
    j.update({{"policy", rc.policy}, {"reps", rc.reps}, {"level", rc.level}, {"delta", rc.delta},
              {"bias_check", !rc.no_bias_check}, {"verbatim", rc.verbatim_weibull}});
  if (rc.subcommand == "converge")
    j.update({{"policies", rc.policies}, {"n_list", rc.n_list}, {"reps", rc.reps}, {"level", rc.level},
              {"verbatim", rc.verbatim_weibull}});
  j.update({{"t_stride", rc.t_stride}, {"x_stride", rc.x_stride}});
  return j;
}

inline int run_dp(const Context& cx) {
  const auto& rc = cx.rc;
  const DiscreteModel model = load_discrete(cx.model_json, rc.n);
  QuadSpec q;
  q.nodes = rc.nodes;
  q.tolerance = rc.tolerance;
  q.threads = rc.threads;
  const ThresholdTable T = backward_thresholds(model, rc.m, {}, q);
  const Guarantee g = parse_guarantee(rc.guarantee);
  if (rc.verbosity > 0) cx.err << "quadrature error estimate " << T.error_estimate << "\n";

  if (!rc.realization_path.empty()) {
    const auto xs = read_realization(rc.realization_path);
    if (static_cast<long>(xs.size()) != model.n())
      throw ConfigError("realization has " + std::to_string(xs.size()) + " values, model horizon is " +
                        std::to_string(model.n()));
    const MultiStopResult r = run_policy(T, xs, g);
    if (cx.json_out()) {
      json stops = json::array();
      for (std::size_t l = 0; l < r.times.size(); ++l)
        stops.push_back({{"stop", l + 1}, {"index", io::ext(r.times[l])}, {"value", io::ext(r.values[l])},
                         {"forced", static_cast<bool>(r.forced[l])}});
      cx.emit_json({{"stops", stops}, {"reward", io::ext(r.reward)}, {"guarantee", io::ext(r.guarantee)}});
    } else {
      std::ostringstream os;
      os << "stop,index,value,forced\n";
      for (std::size_t l = 0; l < r.times.size(); ++l)
        os << l + 1 << ',' << io::num(r.times[l]) << ',' << io::num(r.values[l]) << ',' << (r.forced[l] ? 1 : 0)
           << '\n';
      cx.emit_csv(os.str(), {"reward=" + io::num(r.reward)});
    }
    return 0;
  }

  if (rc.value_only) {
    const double v = optimal_value(T, g);
    if (cx.json_out())
      cx.emit_json({{"value", io::ext(v)}, {"exact", T.exact}, {"error_estimate", T.error_estimate}});
    else
      cx.emit(io::num(v) + "\n");
    return 0;
  }
  if (cx.json_out()) cx.emit_json(io::to_json(T));
  else cx.emit_csv(io::table_csv(T, rc.x_stride));
  return 0;
}

inline std::string curve_rows_at(const StoppingCurveFamily& fam, const std::vector<double>& ts, std::size_t x_stride) {
  std::ostringstream os;
  os << "level,t,x,u\n";
  const auto is = io::strided(fam.nx(), x_stride);
  const Guarantee free = fam.c == kMinusInf ? Guarantee::minus_infinity() : Guarantee(fam.c);
  for (int j = 1; j <= fam.m(); ++j)
    for (double t : ts) {
      if (fam.c == kMinusInf) os << j << ',' << io::num(t) << ",-inf," << io::num(eval_curve(fam, j, TimePoint(t), free)) << '\n';
      for (std::size_t i : is) {
        const double x = fam.x_grid[i];
        os << j << ',' << io::num(t) << ',' << io::num(x) << ',' << io::num(eval_curve(fam, j, t, x)) << '\n';
      }
    }
  return os.str();
}

inline int run_curves(const Context& cx, const SolveSpec& spec) {
  const auto& rc = cx.rc;
  const IntensityModel model = load_intensity(cx.model_json);
  const StoppingCurveFamily fam = solve_curve_family(model, rc.m, spec);
  if (rc.verbosity > 0) cx.err << fam.diagnostics.dump(2) << "\n";
  if (rc.thresholds) {
    const ThresholdFamily th = thresholds_from_family(fam);
    if (cx.json_out()) cx.emit_json(io::to_json(th));
    else cx.emit_csv(io::thresholds_csv(th, rc.t_stride, rc.x_stride));
    return 0;
  }
  if (!rc.at.empty()) {
    for (double t : rc.at)
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("--at times must lie in [0, 1]");
    if (cx.json_out()) {
      json rows = json::array();
      const Guarantee free = fam.c == kMinusInf ? Guarantee::minus_infinity() : Guarantee(fam.c);
      for (int j = 1; j <= fam.m(); ++j)
        for (double t : rc.at) {
          json xs = json::array();
          for (std::size_t i : io::strided(fam.nx(), rc.x_stride))
            xs.push_back({{"x", fam.x_grid[i]}, {"u", io::ext(eval_curve(fam, j, t, fam.x_grid[i]))}});
          rows.push_back({{"level", j}, {"t", t}, {"u_free", io::ext(eval_curve(fam, j, TimePoint(t), free))}, {"values", xs}});
        }
      cx.emit_json({{"model_hash", fam.model_hash}, {"c", io::ext(fam.c)}, {"rows", rows}});
    } else {
      cx.emit_csv(curve_rows_at(fam, rc.at, rc.x_stride));
    }
    return 0;
  }
  if (cx.json_out()) cx.emit_json(io::to_json(fam));
  else cx.emit_csv(io::curves_csv(fam, rc.t_stride, rc.x_stride));
  return 0;
}

inline int run_closed_form(const Context& cx) {
  const auto& rc = cx.rc;
  if (rc.cf_case < 1 || rc.cf_case > 3) throw ConfigError("--case must be 1, 2 or 3");
  const ClosedFormTag tag{static_cast<ClosedFormCase>(rc.cf_case), HFunction::parse(rc.H), VFunction::parse(rc.v)};
  const ClosedFormSolution sol = closed_form_solve(tag, rc.m);
  std::vector<double> roots;
  for (int j = 1; j <= rc.m; ++j) roots.push_back(sol.root(j));
  const double c = tag.kind == ClosedFormCase::FiniteLower ? 0.0 : kMinusInf;
  const Guarantee free = c == kMinusInf ? Guarantee::minus_infinity() : Guarantee(c);

  if (rc.roots_only) {
    if (cx.json_out()) {
      cx.emit_json({{"case", rc.cf_case}, {"roots", io::ext_array(roots)}});
    } else {
      std::ostringstream os;
      os << "j,r\n";
      for (int j = 1; j <= rc.m; ++j) os << j << ',' << io::num(roots[j - 1]) << '\n';
      cx.emit_csv(os.str());
    }
    return 0;
  }

  std::vector<double> ts;
  for (int k = 0; k <= rc.t_points; ++k) ts.push_back(static_cast<double>(k) / rc.t_points);
  std::ostringstream os;
  json rows = json::array();
  os << "level,t,x,u\n";
  for (int j = 1; j <= rc.m; ++j)
    for (double t : ts) {
      const double uf = eval_u(sol, j, TimePoint(t), free);
      os << j << ',' << io::num(t) << ',' << io::num(c) << ',' << io::num(uf) << '\n';
      rows.push_back({{"level", j}, {"t", t}, {"x", io::ext(c)}, {"u", io::ext(uf)}});
      for (double x : rc.xs) {
        const double u = eval_u(sol, j, t, x);
        os << j << ',' << io::num(t) << ',' << io::num(x) << ',' << io::num(u) << '\n';
        rows.push_back({{"level", j}, {"t", t}, {"x", x}, {"u", io::ext(u)}});
      }
    }
  if (cx.json_out()) {
    cx.emit_json({{"case", rc.cf_case}, {"tag", tag.to_json()}, {"roots", io::ext_array(roots)}, {"curves", rows}});
  } else {
    std::vector<std::string> notes;
    for (int j = 1; j <= rc.m; ++j) notes.push_back("r_" + std::to_string(j) + "=" + io::num(roots[j - 1]));
    cx.emit_csv(os.str(), notes);
  }
  return 0;
}

inline void emit_estimate(const Context& cx, const std::string& policy, const EstimateReport& rep, double limit) {
  if (cx.json_out()) {
    json j = rep.to_json();
    j["policy"] = policy;
    j["m"] = cx.rc.m;
    j["guarantee"] = cx.rc.guarantee;
    if (std::isfinite(limit)) j["limit"] = limit;
    cx.emit_json(j);
    return;
  }
  std::ostringstream os;
  os << "policy,m,replications,mean,se,ci_lo,ci_hi,level,limit\n"
     << policy << ',' << cx.rc.m << ',' << rep.replications << ',' << io::num(rep.mean) << ',' << io::num(rep.se)
     << ',' << io::num(rep.ci_lo) << ',' << io::num(rep.ci_hi) << ',' << io::num(rep.level) << ','
     << (std::isfinite(limit) ? io::num(limit) : std::string()) << '\n';
  cx.emit_csv(os.str(), rep.notes);
}

inline int run_simulate(const Context& cx, const SolveSpec& spec) {
  const auto& rc = cx.rc;
  const Guarantee g = parse_guarantee(rc.guarantee);
  if (!detail::is_discrete(cx.model_json)) {
    const IntensityModel model = IntensityModel::from_json(cx.model_json);
    const StoppingCurveFamily fam = solve_curve_family(model, rc.m, spec);
    const ThresholdFamily th = thresholds_from_family(fam);
    PoissonEstimateSpec ps;
    ps.delta = rc.delta;
    ps.bias_check = !rc.no_bias_check;
    ps.level = rc.level;
    ps.threads = rc.threads;
    const Guarantee start = g.is_minus_infinity() && std::isfinite(model.lower) ? Guarantee(model.lower) : g;
    const EstimateReport rep = estimate_poisson_value(model, fam, th, rc.m, start, rc.reps, rc.seed, ps);
    emit_estimate(cx, "limit_threshold", rep, eval_curve(fam, rc.m, TimePoint(0.0), start));
    return 0;
  }

  const DiscreteModel model = load_discrete(cx.model_json, rc.n);
  PolicySpec ps;
  ps.kind = policy_kind_from_string(rc.policy);
  ps.m = rc.m;
  ps.verbatim_weibull_gamma = rc.verbatim_weibull;
  PolicyInputs in;
  std::optional<ThresholdTable> table;
  std::optional<LimitInputs> lim;
  QuadSpec q;
  q.threads = rc.threads;
  if (ps.kind == PolicyKind::DP) {
    table = backward_thresholds(model, rc.m, {}, q);
    in.table = &*table;
  } else {
    lim = prepare_limit(model, rc.m, spec, rc.verbatim_weibull);
    in.gamma = &lim->gamma;
    in.gamma_c0 = lim->gamma_c0 ? &*lim->gamma_c0 : nullptr;
    in.u00 = lim->u00 ? &*lim->u00 : nullptr;
    in.closed_c0 = lim->closed_c0 ? &*lim->closed_c0 : nullptr;
  }
  const PreparedPolicy p = prepare_policy(model, ps, in, g);
  const EstimateReport rep = estimate_value(model, p, rc.reps, rc.seed, rc.level, rc.threads);
  const double reference = table ? optimal_value(*table, g) : kNaN;
  emit_estimate(cx, p.name(), rep, reference);
  return 0;
}

inline int run_converge(const Context& cx, const SolveSpec& spec) {
  const auto& rc = cx.rc;
  if (rc.n_list.empty()) throw ConfigError("--n needs a list of horizons, e.g. --n 50,200,1000");
  const DiscreteModel model = load_discrete(cx.model_json, rc.n_list.front());
  StudySpec st;
  st.n_list = rc.n_list;
  st.m = rc.m;
  st.policies.clear();
  for (const auto& p : rc.policies) st.policies.push_back(policy_kind_from_string(p));
  st.reps = rc.reps;
  st.seed = rc.seed;
  st.level = rc.level;
  st.threads = rc.threads;
  st.quad.threads = rc.threads;
  st.verbatim_weibull_gamma = rc.verbatim_weibull;
  const LimitInputs lim = prepare_limit(model, rc.m, spec, rc.verbatim_weibull);
  const auto rows = convergence_study(model, lim, st);
  if (cx.json_out()) {
    json a = json::array();
    for (const auto& r : rows)
      a.push_back({{"n", r.n}, {"m", r.m}, {"policy", r.policy}, {"raw_value", r.raw_value},
                   {"scaled_value", r.scaled_value}, {"limit", r.limit}, {"gap", r.gap}, {"se", r.se},
                   {"ci_lo", r.ci_lo}, {"ci_hi", r.ci_hi}, {"scaling", r.scaling}});
    cx.emit_json({{"rows", a}, {"replications", rc.reps}});
    return 0;
  }
  std::ostringstream os;
  os << "n,m,policy,raw_value,scaled_value,limit,gap,se,ci_lo,ci_hi,scaling\n";
  for (const auto& r : rows)
    os << r.n << ',' << r.m << ',' << r.policy << ',' << io::num(r.raw_value) << ',' << io::num(r.scaled_value) << ','
       << io::num(r.limit) << ',' << io::num(r.gap) << ',' << io::num(r.se) << ',' << io::num(r.ci_lo) << ','
       << io::num(r.ci_hi) << ',' << r.scaling << '\n';
  cx.emit_csv(os.str(), {"replications=" + std::to_string(rc.reps)});
  return 0;
}

}  // namespace detail

/// One row of the analytic regression suite.
struct CheckRow {
  std::string name;
  double value = 0.0;
  double reference = 0.0;
  double delta = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

namespace detail {

inline CheckRow check_row(std::string name, double value, double reference, double tolerance) {
  CheckRow r{std::move(name), value, reference, std::abs(value - reference), tolerance, false};
  r.pass = std::isfinite(r.delta) && r.delta <= tolerance;
  return r;
}

// Largest |f(t) - ref(t)| over the family's t nodes in [0, t_max].
template <class F, class R>
double sup_gap(const std::vector<double>& tg, double t_max, F&& f, R&& ref) {
  double worst = 0.0;
  for (std::size_t k = 0; k < tg.size() && tg[k] <= t_max; ++k) worst = std::max(worst, std::abs(f(k) - ref(tg[k])));
  return worst;
}

template <class Doc>
CheckRow round_trip_row(const std::string& name, const Doc& doc, Doc (*load)(const json&)) {
  const std::string a = io::to_json(doc).dump();
  const std::string b = io::to_json(load(json::parse(a))).dump();
  CheckRow r{name, a == b ? 0.0 : 1.0, 0.0, a == b ? 0.0 : 1.0, 0.0, a == b};
  return r;
}

}  // namespace detail

/**
 * Analytic regression suite: separable curve solutions, closed-form roots,
 * the uniform DP value, and JSON round trips of every written schema.
 */
inline std::vector<CheckRow> regression_suite(int threads = 1) {
  std::vector<CheckRow> rows;
  SolveSpec spec;
  spec.threads = threads;
  spec.seed_sensitivity = false;

  const auto gum = solve_curve_family(IntensityModel::gumbel(), 2, spec);
  rows.push_back(detail::check_row(
      "gumbel u1 vs ln(1-t)",
      detail::sup_gap(gum.t_grid, 0.99, [&](std::size_t k) { return gum.u_free(1, k); },
                      [](double t) { return std::log1p(-t); }),
      0.0, 1e-5));
  const double shift2 = -std::log1p(-std::exp(-1.0));
  rows.push_back(detail::check_row(
      "gumbel u2 vs ln(1-t) - ln(1-1/e)",
      detail::sup_gap(gum.t_grid, 0.99, [&](std::size_t k) { return gum.u_free(2, k); },
                      [&](double t) { return std::log1p(-t) + shift2; }),
      0.0, 1e-4));

  const auto fre = solve_curve_family(IntensityModel::frechet(2.0), 1, spec);
  rows.push_back(detail::check_row(
      "frechet(2) u1 vs sqrt(2(1-t))",
      detail::sup_gap(fre.t_grid, 0.99, [&](std::size_t k) { return fre.u_free(1, k); },
                      [](double t) { return std::sqrt(2.0 * (1.0 - t)); }),
      0.0, 1e-5));

  const auto wei = solve_curve_family(IntensityModel::weibull(1.0), 1, spec);
  rows.push_back(detail::check_row(
      "weibull(1) (1-t) u1 vs -2",
      detail::sup_gap(wei.t_grid, 0.95, [&](std::size_t k) { return wei.u_free(1, k) * (1.0 - wei.t_grid[k]); },
                      [](double) { return -2.0; }),
      0.0, 1e-5));

  const auto c1 = build_case(ClosedFormCase::FiniteLower, HFunction::power(2.0, 2.0), VFunction::power(1.0, 1.0, 0.5), 1);
  rows.push_back(detail::check_row("case 1 root r1", c1.root(1), std::sqrt(2.0), 1e-9));
  const auto c2 = build_case(ClosedFormCase::UpperBounded, HFunction::truncated_power(1.0, 1.0),
                             VFunction::power(1.0, 1.0, -1.0), 1);
  rows.push_back(detail::check_row("case 2 root r1", c2.root(1), -2.0, 1e-9));
  const auto c3 = build_case(ClosedFormCase::Translation, HFunction::exponential(1.0, 1.0), VFunction::log(), 2);
  rows.push_back(detail::check_row("case 3 root r1", c3.root(1), 0.0, 1e-9));
  rows.push_back(detail::check_row("case 3 root r2", c3.root(2), shift2, 1e-9));

  const DiscreteModel uni(3, BaseDistribution::uniform(0.0, 1.0));
  const ThresholdTable T = backward_thresholds(uni, 1);
  rows.push_back(detail::check_row("dp uniform(0,1) n=3 m=1", optimal_value(T, Guarantee::minus_infinity()),
                                   0.6953125, 1e-9));

  rows.push_back(detail::round_trip_row<StoppingCurveFamily>("round trip multistop.curves/1", gum, io::family_from_json));
  rows.push_back(detail::round_trip_row<ThresholdFamily>("round trip multistop.thresholds/1",
                                                         thresholds_from_family(gum), io::thresholds_from_json));
  const DiscreteModel small(5, BaseDistribution::uniform(-1.0, 0.0));
  rows.push_back(detail::round_trip_row<ThresholdTable>("round trip multistop.dp/1", backward_thresholds(small, 2),
                                                        io::table_from_json));
  return rows;
}

namespace detail {

inline int run_check(const Context& cx) {
  const auto rows = regression_suite(cx.rc.threads);
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.pass;
  if (cx.json_out()) {
    json a = json::array();
    for (const auto& r : rows)
      a.push_back({{"check", r.name}, {"value", r.value}, {"reference", r.reference}, {"delta", r.delta},
                   {"tolerance", r.tolerance}, {"pass", r.pass}});
    cx.emit_json({{"checks", a}, {"pass", ok}});
  } else {
    std::ostringstream os;
    os << "check,value,reference,delta,tolerance,status\n";
    for (const auto& r : rows)
      os << r.name << ',' << io::num(r.value) << ',' << io::num(r.reference) << ',' << io::num(r.delta) << ','
         << io::num(r.tolerance) << ',' << (r.pass ? "PASS" : "FAIL") << '\n';
    cx.emit_csv(os.str());
  }
  return ok ? 0 : 1;
}

}  // namespace detail

/**
 * Parses argv and runs one subcommand. Returns 0 on success, 2 for invalid
 * configuration and 1 when an engine fails (or `check` finds a regression).
 */
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig rc;
  rc.threads = numerics::default_threads();
  CLI::App app{"Multiple-stopping curves, thresholds and simulation studies", "multistop"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* s, bool model, bool seed) {
    if (model) s->add_option("--model", rc.model_path, "model JSON file")->required()->check(CLI::ExistingFile);
    s->add_option("--out", rc.out_path, "output file (default: stdout)");
    s->add_option("--format", rc.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    s->add_option("--threads", rc.threads, "worker threads")->check(CLI::PositiveNumber);
    s->add_flag("--verbose", rc.verbosity, "diagnostics on stderr");
    if (seed)
      s->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { rc.seed_flag = v; },
                                            "root seed (fallback: MULTISTOP_SEED, then 0)");
  };
  auto m_opt = [&](CLI::App* s) { s->add_option("--m", rc.m, "number of stops")->check(CLI::PositiveNumber); };
  auto strides = [&](CLI::App* s) {
    s->add_option("--t-stride", rc.t_stride, "write every k-th time node")->check(CLI::PositiveNumber);
    s->add_option("--x-stride", rc.x_stride, "write every k-th x node")->check(CLI::PositiveNumber);
  };
  auto solver_spec = [&](CLI::App* s) {
    s->add_option("--spec", rc.spec_path, "solver settings JSON file")->check(CLI::ExistingFile);
  };

  auto* dp = app.add_subcommand("dp", "backward induction thresholds of a finite-horizon model");
  common(dp, true, false);
  m_opt(dp);
  strides(dp);
  dp->add_option("--n", rc.n, "horizon (overrides the model file)")->check(CLI::PositiveNumber);
  dp->add_flag("--value", rc.value_only, "print the optimal value only");
  dp->add_option("--policy", rc.realization_path, "apply the optimal rule to a realization CSV")
      ->check(CLI::ExistingFile);
  dp->add_option("--guarantee", rc.guarantee, "guaranteed reward x, or -inf");
  dp->add_option("--nodes", rc.nodes, "Gauss-Legendre nodes")->check(CLI::PositiveNumber);
  dp->add_option("--tolerance", rc.tolerance, "quadrature tolerance")->check(CLI::PositiveNumber);

  auto* curves = app.add_subcommand("curves", "stopping curves u^j(t, x) of a limit model");
  common(curves, true, false);
  m_opt(curves);
  strides(curves);
  solver_spec(curves);
  curves->add_option("--at", rc.at, "evaluate at these times instead of the grid")->delimiter(',');
  curves->add_flag("--thresholds", rc.thresholds, "write thresholds gamma^j instead of curves");

  auto* cf = app.add_subcommand("closed-form", "roots and curves of the explicitly solvable classes");
  common(cf, false, false);
  m_opt(cf);
  cf->add_option("--case", rc.cf_case, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
  cf->add_option("--H", rc.H, "profile H, e.g. power:k=2,alpha=2 or exponential:rate=1");
  cf->add_option("--v", rc.v, "scale v, e.g. power:p=0.5 or log");
  cf->add_flag("--roots", rc.roots_only, "write the roots r_j only");
  cf->add_option("--t-points", rc.t_points, "time points in [0, 1]")->check(CLI::PositiveNumber);
  cf->add_option("--x", rc.xs, "guarantees to tabulate besides the boundary")->delimiter(',');

  auto* sim = app.add_subcommand("simulate", "Monte Carlo value of a policy");
  common(sim, true, true);
  m_opt(sim);
  solver_spec(sim);
  sim->add_option("--n", rc.n, "horizon (overrides the model file)")->check(CLI::PositiveNumber);
  sim->add_option("--policy", rc.policy, "dp, limit or domain")->check(CLI::IsMember({"dp", "limit", "domain"}));
  sim->add_option("--reps", rc.reps, "replications")->check(CLI::Range(2ul, 1ul << 40));
  sim->add_option("--guarantee", rc.guarantee, "guaranteed reward x, or -inf");
  sim->add_option("--level", rc.level, "confidence level")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--delta", rc.delta, "limit model: simulate on [0, 1 - delta]")->check(CLI::Range(0.0, 1.0));
  sim->add_flag("--no-bias-check", rc.no_bias_check, "limit model: skip the delta/2 rerun");
  sim->add_flag("--verbatim-weibull", rc.verbatim_weibull, "Weibull rule: closed-form gamma_{c,0}");

  auto* conv = app.add_subcommand("converge", "scaled values against the limit over several horizons");
  common(conv, true, true);
  m_opt(conv);
  solver_spec(conv);
  conv->add_option("--n", rc.n_list, "horizons, comma separated")->required()->delimiter(',')->check(CLI::PositiveNumber);
  conv->add_option("--policy", rc.policies, "policies, comma separated")
      ->delimiter(',')
      ->check(CLI::IsMember({"dp", "limit", "domain"}));
  conv->add_option("--reps", rc.reps, "replications per horizon")->check(CLI::Range(2ul, 1ul << 40));
  conv->add_option("--level", rc.level, "confidence level")->check(CLI::Range(0.0, 1.0));
  conv->add_flag("--verbatim-weibull", rc.verbatim_weibull, "Weibull rule: closed-form gamma_{c,0}");

  auto* chk = app.add_subcommand("check", "analytic regression suite");
  common(chk, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    rc.subcommand = app.get_subcommands().front()->get_name();
    rc.seed = detail::resolve_seed(rc);
    json model_json, spec_json;
    if (!rc.model_path.empty()) model_json = io::read_json_file(rc.model_path);
    if (!rc.spec_path.empty()) spec_json = io::read_json_file(rc.spec_path);
    const SolveSpec spec = detail::solve_spec_from_json(spec_json, rc.threads);
    json meta = {{"tool", "multistop"},
                 {"subcommand", rc.subcommand},
                 {"config_hash", config_hash(detail::hashed_config(rc, model_json, spec_json))},
                 {"seed", rc.seed}};
    if (!model_json.is_null()) meta["model_hash"] = config_hash(model_json);
    const detail::Context cx{rc, model_json, meta, out, err};
    if (rc.subcommand == "dp") return detail::run_dp(cx);
    if (rc.subcommand == "curves") return detail::run_curves(cx, spec);
    if (rc.subcommand == "closed-form") return detail::run_closed_form(cx);
    if (rc.subcommand == "simulate") return detail::run_simulate(cx, spec);
    if (rc.subcommand == "converge") return detail::run_converge(cx, spec);
    return detail::run_check(cx);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace multistop::cli
