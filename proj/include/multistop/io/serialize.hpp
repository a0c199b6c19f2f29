#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multistop/core/curve_family.hpp"
#include "multistop/core/errors.hpp"
#include "multistop/core/extended.hpp"
#include "multistop/core/hash.hpp"
#include "multistop/dp/dp_oracle.hpp"

namespace multistop::io {

using nlohmann::json;

/// Finite values as numbers, infinities as "-inf" / "inf".
inline json ext(double x) {
  if (std::isfinite(x)) return x;
  return format_extended(x);
}

inline double ext_value(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return parse_extended(j.get<std::string>());
  throw ConfigError("expected a number or \"-inf\"");
}

inline json ext_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(ext(x));
  return a;
}

inline std::vector<double> ext_vector(const json& j) {
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(ext_value(e));
  return v;
}

/// Shortest text that reads back to the same double.
inline std::string num(double x) {
  if (!std::isfinite(x)) return format_extended(x);
  char buf[40];
  for (int p = 15; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline json surfaces_json(const std::vector<GridSurface>& levels) {
  json a = json::array();
  for (std::size_t j = 0; j < levels.size(); ++j)
    a.push_back({{"j", j + 1}, {"free", ext_array(levels[j].free)}, {"values", ext_array(levels[j].values)}});
  return a;
}

inline std::vector<GridSurface> surfaces_from(const json& a, std::size_t nt, std::size_t nx) {
  std::vector<GridSurface> out;
  for (const auto& e : a) {
    GridSurface s;
    s.free = ext_vector(e.at("free"));
    s.values = ext_vector(e.at("values"));
    if (s.free.size() != nt || s.values.size() != nt * nx) throw ConfigError("level table size mismatch");
    out.push_back(std::move(s));
  }
  return out;
}

/**
 * Curve family schema:
 * {"schema": "multistop.curves/1", "model_hash", "model", "c", "t_grid", "x_grid",
 *  "levels": [{"j", "free": [nt], "values": [nt * nx, node-major]}], "diagnostics"}
 */
inline json to_json(const StoppingCurveFamily& f) {
  return {{"schema", "multistop.curves/1"},
          {"model_hash", f.model_hash},
          {"model", f.model},
          {"c", ext(f.c)},
          {"t_grid", f.t_grid},
          {"x_grid", f.x_grid},
          {"levels", surfaces_json(f.levels)},
          {"diagnostics", f.diagnostics}};
}

inline StoppingCurveFamily family_from_json(const json& j) {
  if (j.value("schema", "") != "multistop.curves/1") throw ConfigError("not a curve family document");
  StoppingCurveFamily f;
  f.model_hash = j.at("model_hash").get<std::string>();
  f.model = j.at("model");
  f.c = ext_value(j.at("c"));
  f.t_grid = j.at("t_grid").get<std::vector<double>>();
  f.x_grid = j.at("x_grid").get<std::vector<double>>();
  f.levels = surfaces_from(j.at("levels"), f.nt(), f.nx());
  f.diagnostics = j.value("diagnostics", json::object());
  return f;
}

/// Threshold schema: as the curve schema with "schema": "multistop.thresholds/1" and t_grid excluding 1.
inline json to_json(const ThresholdFamily& f) {
  return {{"schema", "multistop.thresholds/1"},
          {"model_hash", f.model_hash},
          {"c", ext(f.c)},
          {"t_grid", f.t_grid},
          {"x_grid", f.x_grid},
          {"levels", surfaces_json(f.levels)},
          {"diagnostics", f.diagnostics}};
}

inline ThresholdFamily thresholds_from_json(const json& j) {
  if (j.value("schema", "") != "multistop.thresholds/1") throw ConfigError("not a threshold family document");
  ThresholdFamily f;
  f.model_hash = j.at("model_hash").get<std::string>();
  f.c = ext_value(j.at("c"));
  f.t_grid = j.at("t_grid").get<std::vector<double>>();
  f.x_grid = j.at("x_grid").get<std::vector<double>>();
  f.levels = surfaces_from(j.at("levels"), f.nt(), f.nx());
  f.diagnostics = j.value("diagnostics", json::object());
  return f;
}

/// DP table schema: columns[j-1][i] = {"free", "w": [nx], "slope": [nx]}.
inline json to_json(const ThresholdTable& T) {
  json cols = json::array();
  for (const auto& level : T.columns) {
    json a = json::array();
    for (const auto& c : level) a.push_back({{"free", ext(c.free)}, {"w", c.w}, {"slope", c.slope}});
    cols.push_back(std::move(a));
  }
  return {{"schema", "multistop.dp/1"}, {"model_hash", T.model_hash}, {"n", T.n},      {"m", T.m},
          {"exact", T.exact},           {"error_estimate", T.error_estimate}, {"x_grid", T.x_grid},
          {"columns", cols}};
}

inline ThresholdTable table_from_json(const json& j) {
  if (j.value("schema", "") != "multistop.dp/1") throw ConfigError("not a threshold table document");
  ThresholdTable T;
  T.model_hash = j.at("model_hash").get<std::string>();
  T.n = j.at("n").get<long>();
  T.m = j.at("m").get<int>();
  T.exact = j.at("exact").get<bool>();
  T.error_estimate = j.at("error_estimate").get<double>();
  T.x_grid = j.at("x_grid").get<std::vector<double>>();
  for (const auto& level : j.at("columns")) {
    std::vector<ThresholdTable::Column> cols;
    for (const auto& c : level) {
      ThresholdTable::Column col;
      col.free = ext_value(c.at("free"));
      col.w = c.at("w").get<std::vector<double>>();
      col.slope = c.at("slope").get<std::vector<double>>();
      cols.push_back(std::move(col));
    }
    T.columns.push_back(std::move(cols));
  }
  if (static_cast<int>(T.columns.size()) != T.m) throw ConfigError("threshold table level count mismatch");
  return T;
}

/// Rows every `t_stride` time nodes and `x_stride` x nodes; the last node of each grid is always kept.
inline std::vector<std::size_t> strided(std::size_t n, std::size_t stride) {
  std::vector<std::size_t> idx;
  if (stride == 0) stride = 1;
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  if (n > 0 && idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

// level, t, x, value; the guarantee-free column is written with x = c.
template <class Fam, class Get, class GetFree>
std::string surface_csv(const Fam& f, const char* value_name, std::size_t t_stride, std::size_t x_stride, Get get,
                        GetFree get_free) {
  std::ostringstream os;
  os << "level,t,x," << value_name << "\n";
  const auto ks = strided(f.nt(), t_stride);
  const auto is = strided(f.nx(), x_stride);
  for (int j = 1; j <= f.m(); ++j)
    for (std::size_t k : ks) {
      if (f.c == kMinusInf) os << j << ',' << num(f.t_grid[k]) << ",-inf," << num(get_free(j, k)) << '\n';
      for (std::size_t i : is)
        os << j << ',' << num(f.t_grid[k]) << ',' << num(f.x_grid[i]) << ',' << num(get(j, k, i)) << '\n';
    }
  return os.str();
}

inline std::string curves_csv(const StoppingCurveFamily& f, std::size_t t_stride = 1, std::size_t x_stride = 1) {
  return surface_csv(
      f, "u", t_stride, x_stride, [&](int j, std::size_t k, std::size_t i) { return f.u(j, k, i); },
      [&](int j, std::size_t k) { return f.u_free(j, k); });
}

inline std::string thresholds_csv(const ThresholdFamily& f, std::size_t t_stride = 1, std::size_t x_stride = 1) {
  return surface_csv(
      f, "gamma", t_stride, x_stride, [&](int j, std::size_t k, std::size_t i) { return f.gamma(j, k, i); },
      [&](int j, std::size_t k) { return f.gamma_free(j, k); });
}

/// j, i, x, W with a "-inf" row for the guarantee-free column.
inline std::string table_csv(const ThresholdTable& T, std::size_t x_stride = 1) {
  std::ostringstream os;
  os << "j,i,x,W\n";
  const auto is = strided(T.x_grid.size(), x_stride);
  for (int j = 1; j <= T.m; ++j)
    for (long i = 0; i <= T.n - j; ++i) {
      const auto& col = T.columns[j - 1][static_cast<std::size_t>(i)];
      os << j << ',' << i << ",-inf," << num(col.free) << '\n';
      for (std::size_t k : is) os << j << ',' << i << ',' << num(T.x_grid[k]) << ',' << num(col.w[k]) << '\n';
    }
  return os.str();
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace multistop::io
