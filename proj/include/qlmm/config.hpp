/**
 * @file config.hpp
 * @brief INI scenario configs and scheme files.
 *
 * Unknown sections and keys are rejected with a ConfigError naming the key, so a typo
 * never silently falls back to a default.
 */
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qlmm/optimizer.hpp"
#include "qlmm/oracle.hpp"
#include "qlmm/scenario.hpp"
#include "qlmm/stepper.hpp"

namespace qlmm {

struct SweepConfig {
  std::vector<double> explicit_values;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 1;

  /// `count` evenly spaced values on [min, max], or the explicit list.
  [[nodiscard]] std::vector<double> values() const {
    if (!explicit_values.empty()) {
      return explicit_values;
    }
    if (count == 1) {
      return {min};
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = min + (max - min) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return out;
  }
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::spring_mass;
  double t0 = 0.0;
  double tf = 1.0;
  double mass = 1.0;
  double stiffness = 40.0;
  double speed = 40.0;
  double gravity = 9.8;
  Eigen::MatrixXd j0, j1;
  Eigen::VectorXd b0, b1, x00, x01;
  std::size_t samples = 4001;
  double pad = 0.01;
  SweepConfig sweep;

  double epsilon = 0.0;
  Objective objective;
  std::vector<std::size_t> k_range{2, 3};
  std::optional<double> h_cap;
  double stability_floor = 0.05;
  std::uint64_t node_limit = 1'000'000;
  VariableBox box;
  CostModel cost_model;

  OraclePredicate predicate;
  std::uint64_t seed = 1;

  std::vector<std::uint64_t> tradeoff_caps;
};

namespace detail {

using Ptree = boost::property_tree::ptree;

inline double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size() || !std::isfinite(v)) {
      throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(text, &pos);
    if (pos != text.size()) {
      throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
}

inline std::uint64_t parse_count(const std::string& key, const std::string& text) {
  const long long v = parse_int(key, text);
  if (v < 0) {
    throw ConfigError(key, "must not be negative");
  }
  return static_cast<std::uint64_t>(v);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") {
    return true;
  }
  if (text == "false" || text == "0" || text == "no") {
    return false;
  }
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

/// Comma- or whitespace-separated numbers.
inline std::vector<double> parse_list(const std::string& key, std::string text) {
  for (char& c : text) {
    if (c == ',') {
      c = ' ';
    }
  }
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    out.push_back(parse_double(key, tok));
  }
  if (out.empty()) {
    throw ConfigError(key, "expected at least one number");
  }
  return out;
}

/// Rows separated by ';', entries by spaces or commas.
inline Eigen::MatrixXd parse_matrix(const std::string& key, const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string row;
  while (std::getline(in, row, ';')) {
    if (row.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    rows.push_back(parse_list(key, row));
  }
  if (rows.empty()) {
    throw ConfigError(key, "empty matrix");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw ConfigError(key, "ragged matrix rows");
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

inline Eigen::VectorXd parse_vector(const std::string& key, const std::string& text) {
  const auto v = parse_list(key, text);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// "lo:hi" or a single value.
inline IntRange parse_range(const std::string& key, const std::string& text) {
  const auto colon = text.find(':');
  IntRange r;
  if (colon == std::string::npos) {
    r.lo = r.hi = static_cast<int>(parse_int(key, text));
  } else {
    r.lo = static_cast<int>(parse_int(key, text.substr(0, colon)));
    r.hi = static_cast<int>(parse_int(key, text.substr(colon + 1)));
  }
  return r;
}

inline Ptree read_ini(const std::string& path) {
  Ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(path, e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return tree;
}

inline void check_keys(const Ptree& tree, const std::map<std::string, std::set<std::string>>& allowed) {
  for (const auto& [section, body] : tree) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) {
      throw ConfigError(section, "unknown section");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) {
        throw ConfigError(section + "." + key, "unknown key");
      }
      (void)value;
    }
  }
}

}  // namespace detail

/// Parse a scenario config; see configs/ for annotated examples.
[[nodiscard]] inline ScenarioConfig parse_config(const detail::Ptree& tree) {
  using namespace detail;
  check_keys(tree, {
                       {"scenario",
                        {"kind", "t0", "tf", "mass", "stiffness", "speed", "gravity", "j0", "j1", "b0", "b1", "x0",
                         "x0_slope", "samples", "pad"}},
                       {"sweep", {"parameter", "min", "max", "count", "values"}},
                       {"optimizer",
                        {"epsilon", "objective", "qubit_cap", "k_range", "h_cap", "stability_floor", "node_limit"}},
                       {"box", {"mantissa", "exponent", "margin", "a0", "steps", "h_min", "h_max"}},
                       {"cost_model",
                        {"rc_mantissa", "rc_exponent", "rc_const", "ru_mantissa", "ru_exponent", "ru_const",
                         "depth_mantissa", "depth_exponent", "depth_rc", "depth_const"}},
                       {"search", {"mode", "seed", "value_dim", "sign_dim", "maximize"}},
                       {"tradeoff", {"caps"}},
                   });
  ScenarioConfig c;
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(path)) {
      return *v;
    }
    return std::nullopt;
  };

  const std::string kind = get("scenario.kind").value_or("");
  if (kind == "spring_mass") {
    c.kind = ScenarioKind::spring_mass;
    c.predicate = {OracleMode::final_time, 0, 0, false};
  } else if (kind == "ballistic") {
    c.kind = ScenarioKind::ballistic;
    c.predicate = {OracleMode::all_steps, 0, 1, true};
  } else if (kind == "linear") {
    c.kind = ScenarioKind::linear;
  } else {
    throw ConfigError("scenario.kind", "expected spring_mass, ballistic or linear, got '" + kind + "'");
  }

  if (auto v = get("scenario.t0")) c.t0 = parse_double("scenario.t0", *v);
  if (auto v = get("scenario.tf")) {
    c.tf = parse_double("scenario.tf", *v);
  } else {
    throw ConfigError("scenario.tf", "required");
  }
  if (!(c.tf > c.t0)) {
    throw ConfigError("scenario.tf", "must exceed scenario.t0");
  }
  if (auto v = get("scenario.mass")) c.mass = parse_double("scenario.mass", *v);
  if (auto v = get("scenario.stiffness")) c.stiffness = parse_double("scenario.stiffness", *v);
  if (auto v = get("scenario.speed")) c.speed = parse_double("scenario.speed", *v);
  if (auto v = get("scenario.gravity")) c.gravity = parse_double("scenario.gravity", *v);
  if (auto v = get("scenario.samples")) c.samples = parse_count("scenario.samples", *v);
  if (auto v = get("scenario.pad")) c.pad = parse_double("scenario.pad", *v);
  if (c.kind == ScenarioKind::spring_mass && !(c.mass > 0.0)) {
    throw ConfigError("scenario.mass", "must be positive");
  }
  if (c.kind == ScenarioKind::linear) {
    const auto j0 = get("scenario.j0");
    const auto x0 = get("scenario.x0");
    if (!j0) throw ConfigError("scenario.j0", "required for a linear scenario");
    if (!x0) throw ConfigError("scenario.x0", "required for a linear scenario");
    c.j0 = parse_matrix("scenario.j0", *j0);
    const auto n = c.j0.rows();
    if (c.j0.cols() != n) throw ConfigError("scenario.j0", "must be square");
    c.x00 = parse_vector("scenario.x0", *x0);
    c.j1 = get("scenario.j1") ? parse_matrix("scenario.j1", *get("scenario.j1")) : Eigen::MatrixXd::Zero(n, n);
    c.b0 = get("scenario.b0") ? parse_vector("scenario.b0", *get("scenario.b0")) : Eigen::VectorXd::Zero(n);
    c.b1 = get("scenario.b1") ? parse_vector("scenario.b1", *get("scenario.b1")) : Eigen::VectorXd::Zero(n);
    c.x01 = get("scenario.x0_slope") ? parse_vector("scenario.x0_slope", *get("scenario.x0_slope"))
                                      : Eigen::VectorXd::Zero(n);
    if (c.j1.rows() != n || c.j1.cols() != n) throw ConfigError("scenario.j1", "shape differs from j0");
    for (const auto& [key, vec] : std::vector<std::pair<std::string, const Eigen::VectorXd*>>{
             {"scenario.b0", &c.b0}, {"scenario.b1", &c.b1}, {"scenario.x0", &c.x00}, {"scenario.x0_slope", &c.x01}}) {
      if (vec->size() != n) throw ConfigError(key, "length differs from the dimension of j0");
    }
    c.predicate = {OracleMode::final_time, 0, 0, false};
  }

  if (auto v = get("sweep.values")) {
    c.sweep.explicit_values = parse_list("sweep.values", *v);
  } else {
    const auto mn = get("sweep.min");
    if (!mn) throw ConfigError("sweep.min", "required unless sweep.values is given");
    c.sweep.min = parse_double("sweep.min", *mn);
    c.sweep.max = get("sweep.max") ? parse_double("sweep.max", *get("sweep.max")) : c.sweep.min;
    c.sweep.count = get("sweep.count") ? parse_count("sweep.count", *get("sweep.count")) : 1;
    if (c.sweep.count < 1) throw ConfigError("sweep.count", "must be at least 1");
    if (c.sweep.max < c.sweep.min) throw ConfigError("sweep.max", "must not be below sweep.min");
  }
  if (auto v = get("sweep.parameter")) {
    const std::string expected = c.kind == ScenarioKind::spring_mass ? "damping"
                                 : c.kind == ScenarioKind::ballistic ? "angle"
                                                                     : "p";
    if (*v != expected) throw ConfigError("sweep.parameter", "this scenario sweeps '" + expected + "'");
  }

  if (auto v = get("optimizer.epsilon")) c.epsilon = parse_double("optimizer.epsilon", *v);
  if (auto v = get("optimizer.objective")) {
    if (*v == "min_qubits") {
      c.objective.kind = ObjectiveKind::min_qubits;
    } else if (*v == "min_depth") {
      c.objective.kind = ObjectiveKind::min_depth;
    } else if (*v == "min_depth_under_cap") {
      c.objective.kind = ObjectiveKind::min_depth_under_qubit_cap;
    } else {
      throw ConfigError("optimizer.objective", "expected min_qubits, min_depth or min_depth_under_cap");
    }
  }
  if (auto v = get("optimizer.qubit_cap")) c.objective.qubit_cap = parse_count("optimizer.qubit_cap", *v);
  if (c.objective.kind == ObjectiveKind::min_depth_under_qubit_cap && c.objective.qubit_cap == 0) {
    throw ConfigError("optimizer.qubit_cap", "required by min_depth_under_cap");
  }
  if (auto v = get("optimizer.k_range")) {
    c.k_range.clear();
    for (double k : parse_list("optimizer.k_range", *v)) {
      if (k < 2 || k != std::floor(k)) throw ConfigError("optimizer.k_range", "entries must be integers >= 2");
      c.k_range.push_back(static_cast<std::size_t>(k));
    }
  }
  if (auto v = get("optimizer.h_cap")) c.h_cap = parse_double("optimizer.h_cap", *v);
  if (auto v = get("optimizer.stability_floor")) c.stability_floor = parse_double("optimizer.stability_floor", *v);
  if (auto v = get("optimizer.node_limit")) c.node_limit = parse_count("optimizer.node_limit", *v);

  if (auto v = get("box.mantissa")) c.box.mantissa = parse_range("box.mantissa", *v);
  if (auto v = get("box.exponent")) c.box.exponent = parse_range("box.exponent", *v);
  if (auto v = get("box.margin")) c.box.margin = parse_range("box.margin", *v);
  if (auto v = get("box.a0")) c.box.a0 = parse_range("box.a0", *v);
  if (auto v = get("box.steps")) c.box.steps = parse_range("box.steps", *v);
  if (auto v = get("box.h_min")) c.box.h_min = parse_double("box.h_min", *v);
  if (auto v = get("box.h_max")) c.box.h_max = parse_double("box.h_max", *v);
  if (c.box.mantissa.lo < 2) throw ConfigError("box.mantissa", "lower end must be at least 2");
  if (c.box.exponent.lo < 1) throw ConfigError("box.exponent", "lower end must be at least 1");
  if (c.box.margin.lo < 1) throw ConfigError("box.margin", "lower end must be at least 1");
  if (c.box.a0.lo < 1) throw ConfigError("box.a0", "lower end must be at least 1");
  if (c.box.steps.lo < 1) throw ConfigError("box.steps", "lower end must be at least 1");

  const std::vector<std::pair<const char*, std::int64_t*>> cost{
      {"cost_model.rc_mantissa", &c.cost_model.rc_mantissa},
      {"cost_model.rc_exponent", &c.cost_model.rc_exponent},
      {"cost_model.rc_const", &c.cost_model.rc_const},
      {"cost_model.ru_mantissa", &c.cost_model.ru_mantissa},
      {"cost_model.ru_exponent", &c.cost_model.ru_exponent},
      {"cost_model.ru_const", &c.cost_model.ru_const},
      {"cost_model.depth_mantissa", &c.cost_model.depth_mantissa},
      {"cost_model.depth_exponent", &c.cost_model.depth_exponent},
      {"cost_model.depth_rc", &c.cost_model.depth_rc},
      {"cost_model.depth_const", &c.cost_model.depth_const},
  };
  for (const auto& [key, field] : cost) {
    if (auto v = get(key)) *field = static_cast<std::int64_t>(parse_count(key, *v));
  }

  if (auto v = get("search.mode")) {
    if (*v == "final") {
      c.predicate.mode = OracleMode::final_time;
    } else if (*v == "all-steps") {
      c.predicate.mode = OracleMode::all_steps;
    } else {
      throw ConfigError("search.mode", "expected final or all-steps");
    }
  }
  if (auto v = get("search.seed")) c.seed = parse_count("search.seed", *v);
  if (auto v = get("search.value_dim")) c.predicate.value_dim = parse_count("search.value_dim", *v);
  if (auto v = get("search.sign_dim")) c.predicate.sign_dim = parse_count("search.sign_dim", *v);
  if (auto v = get("search.maximize")) c.predicate.maximize = parse_bool("search.maximize", *v);

  if (auto v = get("tradeoff.caps")) {
    for (double cap : parse_list("tradeoff.caps", *v)) {
      if (cap < 1 || cap != std::floor(cap)) throw ConfigError("tradeoff.caps", "entries must be positive integers");
      c.tradeoff_caps.push_back(static_cast<std::uint64_t>(cap));
    }
  }
  return c;
}

[[nodiscard]] inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) {
    throw ConfigError(path, "cannot open config file");
  }
  return parse_config(detail::read_ini(path));
}

[[nodiscard]] inline Scenario build_scenario(const ScenarioConfig& c) {
  ScenarioOptions opt{c.t0, c.tf, c.samples, c.pad, 8};
  Scenario sc;
  switch (c.kind) {
    case ScenarioKind::spring_mass:
      sc = make_spring_mass(c.mass, c.stiffness, c.sweep.values(), opt);
      break;
    case ScenarioKind::ballistic:
      sc = make_ballistic(c.speed, c.gravity, c.sweep.values(), opt);
      break;
    case ScenarioKind::linear:
      sc = make_linear(c.j0, c.j1, c.b0, c.b1, c.x00, c.x01, c.sweep.values(), opt);
      break;
  }
  const std::size_t dim = sc.ivp.dimension;
  if (c.predicate.value_dim >= dim) throw ConfigError("search.value_dim", "exceeds the system dimension");
  if (c.predicate.sign_dim >= dim) throw ConfigError("search.sign_dim", "exceeds the system dimension");
  return sc;
}

[[nodiscard]] inline OptimizationProblem build_problem(const ScenarioConfig& c, const Scenario& sc) {
  if (!(c.epsilon > 0.0)) {
    throw ConfigError("optimizer.epsilon", "required and must be positive");
  }
  OptimizationProblem p;
  p.ivp = sc.ivp;
  p.epsilon = c.epsilon;
  p.objective = c.objective;
  p.k_range = c.k_range;
  p.box = c.box;
  p.deriv_bound = sc.deriv_bound;
  p.cost_model = c.cost_model;
  p.h_cap = c.h_cap;
  p.spectrum = sc.spectrum;
  p.stability_floor = c.stability_floor;
  p.node_limit = c.node_limit;
  return p;
}

/// Read a scheme file: [scheme] plus one [dimN] section per dimension.
[[nodiscard]] inline Scheme load_scheme(const std::string& path) {
  using namespace detail;
  std::ifstream probe(path);
  if (!probe) {
    throw ConfigError(path, "cannot open scheme file");
  }
  const Ptree tree = read_ini(path);
  std::map<std::string, std::set<std::string>> allowed{{"scheme", {"k", "a0", "alpha", "beta", "h", "steps", "t0"}}};
  std::size_t dims = 0;
  while (tree.find("dim" + std::to_string(dims)) != tree.not_found()) {
    allowed["dim" + std::to_string(dims)] = {"mantissa", "exponent", "margin", "offset", "bias"};
    ++dims;
  }
  check_keys(tree, allowed);
  auto req = [&](const std::string& key) {
    if (auto v = tree.get_optional<std::string>(key)) {
      return *v;
    }
    throw ConfigError(key, "required");
  };
  const auto k = static_cast<std::size_t>(parse_count("scheme.k", req("scheme.k")));
  const std::vector<double> alpha = parse_list("scheme.alpha", req("scheme.alpha"));
  const std::vector<double> beta = parse_list("scheme.beta", req("scheme.beta"));
  if (alpha.size() != k) throw ConfigError("scheme.alpha", "needs k entries");
  if (beta.size() != k) throw ConfigError("scheme.beta", "needs k entries");
  if (dims == 0) throw ConfigError("dim0", "at least one dimension section is required");
  std::vector<FloatFormat> formats;
  Vector bias;
  for (std::size_t d = 0; d < dims; ++d) {
    const std::string s = "dim" + std::to_string(d) + ".";
    const int m = static_cast<int>(parse_int(s + "mantissa", req(s + "mantissa")));
    const int e = static_cast<int>(parse_int(s + "exponent", req(s + "exponent")));
    const int a = static_cast<int>(parse_int(s + "margin", req(s + "margin")));
    const int off = static_cast<int>(parse_int(s + "offset", req(s + "offset")));
    try {
      formats.emplace_back(m, e, off, a);
    } catch (const FormatError& err) {
      throw ConfigError(s + "mantissa", err.what());
    }
    bias.push_back(parse_double(s + "bias", req(s + "bias")));
  }
  Scheme scheme{LmmCoefficients(alpha, beta),
                static_cast<int>(parse_int("scheme.a0", req("scheme.a0"))),
                parse_double("scheme.h", req("scheme.h")),
                static_cast<std::size_t>(parse_count("scheme.steps", req("scheme.steps"))),
                tree.get_optional<std::string>("scheme.t0") ? parse_double("scheme.t0", req("scheme.t0")) : 0.0,
                std::move(formats),
                std::move(bias)};
  try {
    scheme.validate_structure();
  } catch (const SchemeError& e) {
    throw ConfigError("scheme", e.what());
  }
  return scheme;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_scheme(std::ostream& os, const Scheme& s) {
  auto join = [](std::span<const double> xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out += (i ? ", " : "") + detail::fmt_double(xs[i]);
    }
    return out;
  };
  os << "[scheme]\n"
     << "k = " << s.k() << '\n'
     << "a0 = " << s.a0 << '\n'
     << "alpha = " << join(s.coeffs.alpha()) << '\n'
     << "beta = " << join(s.coeffs.beta()) << '\n'
     << "h = " << detail::fmt_double(s.h) << '\n'
     << "steps = " << s.steps << '\n'
     << "t0 = " << detail::fmt_double(s.t0) << '\n';
  for (std::size_t d = 0; d < s.dimension(); ++d) {
    const FloatFormat& f = s.formats[d];
    os << "\n[dim" << d << "]\n"
       << "mantissa = " << f.mantissa_bits() << '\n'
       << "exponent = " << f.exponent_bits() << '\n'
       << "margin = " << f.margin_bits() << '\n'
       << "offset = " << f.exponent_offset() << '\n'
       << "bias = " << detail::fmt_double(s.bias[d]) << '\n';
  }
}

}  // namespace qlmm
