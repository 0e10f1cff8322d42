// Command-line front end: optimize, check, run, search, tradeoff.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qlmm/config.hpp"
#include "qlmm/optimizer.hpp"
#include "qlmm/oracle.hpp"
#include "qlmm/report.hpp"

namespace fs = std::filesystem;
using namespace qlmm;

namespace {

constexpr int kExitInfeasible = 2;
constexpr int kExitConfig = 3;
constexpr int kExitMargin = 4;
constexpr int kExitNoCandidate = 5;

constexpr const char* kConfigHelp = R"(Config file (INI), with defaults:
  [scenario]   kind = spring_mass | ballistic | linear (required); t0 = 0; tf (required)
               mass = 1; stiffness = 40           (spring_mass)
               speed = 40; gravity = 9.8          (ballistic)
               j0, j1, b0, b1, x0, x0_slope       (linear: J = j0 + p j1, b = b0 + p b1,
                                                   x(0) = x0 + p x0_slope; rows split by ';')
               samples = 4001; pad = 0.01         (bound sampling and relative widening)
  [sweep]      parameter = damping | angle | p; min; max = min; count = 1; or values = a, b, ...
  [optimizer]  epsilon (required by optimize/check); objective = min_qubits
               (min_qubits | min_depth | min_depth_under_cap); qubit_cap = 0; k_range = 2, 3
               h_cap = none; stability_floor = 0.05; node_limit = 1000000
  [box]        mantissa = 2:40; exponent = 1:8; margin = 1:4; a0 = 1:4; steps = 1:5000
               h_min = 0; h_max = inf
  [cost_model] rc_mantissa = 0; rc_exponent = 0; rc_const = 0; ru_mantissa = 2
               ru_exponent = 2; ru_const = 0; depth_mantissa = 1; depth_exponent = 1
               depth_rc = 1; depth_const = 10
  [search]     mode = final | all-steps; seed = 1; value_dim; sign_dim; maximize
               (spring_mass: final, 0, 0, false; ballistic: all-steps, 0, 1, true)
  [tradeoff]   caps = q1, q2, ...   (qubit caps for the min_depth_under_cap sweep)

Exit codes: 0 ok, 1 other error, 2 infeasible, 3 config error, 4 margin overflow,
5 no feasible candidate.)";

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error("cannot create output directory " + dir + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) {
    throw Error("cannot write " + path.string());
  }
  os << text;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Options {
  std::string config;
  std::string scheme;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool force = false;
};

struct Loaded {
  ScenarioConfig config;
  Scenario scenario;
};

Loaded load(const Options& o) {
  Loaded l{load_config(o.config), {}};
  if (!o.mode.empty()) {
    l.config.predicate.mode = o.mode == "final" ? OracleMode::final_time : OracleMode::all_steps;
  }
  if (o.seed) {
    l.config.seed = *o.seed;
  }
  l.scenario = build_scenario(l.config);
  return l;
}

Scheme load_checked_scheme(const Options& o, const Loaded& l) {
  Scheme s = load_scheme(o.scheme);
  if (s.dimension() != l.scenario.ivp.dimension) {
    throw ConfigError(o.scheme, "scheme has " + std::to_string(s.dimension()) + " dimensions, scenario has " +
                                    std::to_string(l.scenario.ivp.dimension));
  }
  if (std::abs(s.t0 - l.scenario.ivp.t0) > 1e-12) {
    throw ConfigError("scheme.t0", "differs from scenario.t0");
  }
  return s;
}

int cmd_optimize(const Options& o) {
  const Loaded l = load(o);
  const OptimizationProblem p = build_problem(l.config, l.scenario);
  ensure_dir(o.out);
  std::optional<Selection> found;
  std::string table = "k,status,objective,qubits,depth,a0,steps,h,nodes\n";
  try {
    found = select_best(p);
  } catch (const InfeasibleError&) {
    for (std::size_t k : p.k_range) {
      table += std::to_string(k) + ",infeasible,,,,,,,\n";
    }
    write_text(fs::path(o.out) / "objectives.csv", table);
    throw;
  }
  const Selection& sel = *found;
  for (const KResult& r : sel.per_k) {
    if (r.solution) {
      const Solution& s = *r.solution;
      table += std::to_string(r.k) + ",ok," + std::to_string(s.objective) + "," + std::to_string(s.cost.qubits) +
               "," + std::to_string(s.cost.depth) + "," + std::to_string(s.scheme.a0) + "," +
               std::to_string(s.scheme.steps) + "," + fmt(s.scheme.h) + "," + std::to_string(s.nodes) + "\n";
    } else {
      table += std::to_string(r.k) + ",infeasible,,,,,,,\n";
    }
  }
  write_text(fs::path(o.out) / "objectives.csv", table);
  std::ofstream scheme(fs::path(o.out) / "scheme.ini");
  write_scheme(scheme, sel.best.scheme);
  write_text(fs::path(o.out) / "feasibility.json", sel.best.report.to_json().dump(2) + "\n");
  std::cout << "selected k = " << sel.best.k << ", objective " << to_string(p.objective.kind) << " = "
            << sel.best.objective << " (qubits " << sel.best.cost.qubits << ", depth " << sel.best.cost.depth
            << ")\n"
            << "wrote " << (fs::path(o.out) / "scheme.ini").string() << '\n';
  return 0;
}

int cmd_check(const Options& o) {
  const Loaded l = load(o);
  const OptimizationProblem p = build_problem(l.config, l.scenario);
  const Scheme s = load_checked_scheme(o, l);
  const FeasibilityReport r = check_feasible(s, p);
  std::cout << r.to_json().dump(2) << '\n';
  std::cout << "qubits " << resource_estimate(s, p.cost_model) << ", depth " << depth_estimate(s, p.cost_model)
            << '\n';
  return r.feasible() ? 0 : kExitInfeasible;
}

/// Refuse to run a scheme that fails its own checks unless forced or no epsilon is configured.
void precheck(const Options& o, const Loaded& l, const Scheme& s) {
  if (o.force || !(l.config.epsilon > 0.0)) {
    return;
  }
  const FeasibilityReport r = check_feasible(s, build_problem(l.config, l.scenario));
  if (!r.feasible()) {
    for (const auto& c : r.checks) {
      if (!c.passed) {
        std::cerr << "constraint " << c.name << " fails (residual " << c.residual << ")\n";
      }
    }
    throw InfeasibleError("scheme fails its feasibility checks; pass --force to run anyway");
  }
}

int cmd_run(const Options& o) {
  const Loaded l = load(o);
  const Scheme s = load_checked_scheme(o, l);
  precheck(o, l, s);
  const auto records = run_all(s, l.scenario.ivp, l.config.cost_model, o.jobs);
  ensure_dir(o.out);
  for (const RunRecord& r : records) {
    std::ofstream os(fs::path(o.out) / ("trajectory_" + std::to_string(r.candidate) + ".csv"));
    write_trajectory_csv(os, r);
  }
  nlohmann::json j = error_stats_json(error_samples(l.scenario, s, records));
  j["candidates"] = records.size();
  j["steps"] = s.steps;
  j["ancillas_consumed"] = records.empty() ? 0 : records.front().ledger.consumed();
  write_text(fs::path(o.out) / "error_stats.json", j.dump(2) + "\n");
  std::cout << "wrote " << records.size() << " trajectories and error_stats.json to " << o.out << '\n';
  return 0;
}

int cmd_search(const Options& o) {
  const Loaded l = load(o);
  const Scheme s = load_checked_scheme(o, l);
  precheck(o, l, s);
  const auto records = run_all(s, l.scenario.ivp, l.config.cost_model, o.jobs);
  const OraclePredicate& pred = l.config.predicate;
  if (pred.mode == OracleMode::all_steps && !l.scenario.ivp.time_independent) {
    throw ConfigError("search.mode", "all-steps needs a time-independent system");
  }
  const SearchResult res = durr_hoyer(records, pred, l.config.seed);
  const double winner_param = l.scenario.parameter_values[res.winner];
  nlohmann::json j = res.to_json();
  j["parameter"] = l.scenario.parameter_name;
  j["winner_parameter"] = winner_param;
  j["mode"] = pred.mode == OracleMode::final_time ? "final" : "all-steps";
  if (!std::isnan(l.scenario.analytic_optimum)) {
    j["analytic_optimum"] = l.scenario.analytic_optimum;
  }
  ensure_dir(o.out);
  write_text(fs::path(o.out) / "search.json", j.dump(2) + "\n");
  std::cout << "winner: " << l.scenario.parameter_name << " = " << winner_param << " (candidate " << res.winner
            << ", value " << res.winner_value << ")\n";
  if (!std::isnan(l.scenario.analytic_optimum)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", l.scenario.analytic_optimum);
    std::cout << "analytic optimum: " << l.scenario.parameter_name << " = " << buf << '\n';
  }
  std::cout << "estimated oracle calls: " << res.oracle_calls_estimate << '\n';
  return 0;
}

int cmd_tradeoff(const Options& o) {
  const Loaded l = load(o);
  const OptimizationProblem base = build_problem(l.config, l.scenario);
  struct Variant {
    ObjectiveKind kind;
    std::uint64_t cap;
  };
  std::vector<Variant> variants{{ObjectiveKind::min_qubits, 0}, {ObjectiveKind::min_depth, 0}};
  for (std::uint64_t cap : l.config.tradeoff_caps) {
    variants.push_back({ObjectiveKind::min_depth_under_qubit_cap, cap});
  }
  std::vector<std::string> rows(variants.size());
  parallel_for(variants.size(), o.jobs, [&](std::size_t i) {
    OptimizationProblem p = base;
    p.objective = {variants[i].kind, variants[i].cap};
    std::string row = to_string(variants[i].kind) + "," + (variants[i].cap ? std::to_string(variants[i].cap) : "");
    try {
      const Selection sel = select_best(p);
      row += ",ok," + std::to_string(sel.best.k) + "," + std::to_string(sel.best.cost.qubits) + "," +
             std::to_string(sel.best.cost.depth);
    } catch (const InfeasibleError&) {
      row += ",infeasible,,,";
    } catch (const BudgetExceededError&) {
      row += ",budget_exceeded,,,";
    }
    rows[i] = row + "\n";
  });
  ensure_dir(o.out);
  std::string csv = "objective,qubit_cap,status,k,qubits,depth\n";
  for (const auto& r : rows) {
    csv += r;
  }
  write_text(fs::path(o.out) / "tradeoff.csv", csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthesize, simulate and search with fixed-format quantum multistep schemes"};
  app.footer(kConfigHelp);
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Scenario config file")->required();
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--jobs", o.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };
  auto add_scheme = [&](CLI::App* sub) {
    sub->add_option("--scheme", o.scheme, "Scheme file")->required();
    sub->add_flag("--force", o.force, "Run even if the scheme fails its feasibility checks");
  };

  CLI::App* optimize = app.add_subcommand("optimize", "Select k, coefficients and formats; write scheme.ini");
  add_config(optimize);
  CLI::App* check = app.add_subcommand("check", "Print the feasibility report of a scheme");
  add_config(check);
  check->add_option("--scheme", o.scheme, "Scheme file")->required();
  CLI::App* run_cmd = app.add_subcommand("run", "Simulate every candidate; write trajectories and error stats");
  add_config(run_cmd);
  add_scheme(run_cmd);
  CLI::App* search = app.add_subcommand("search", "Emulated minimum finding over the candidate runs");
  add_config(search);
  add_scheme(search);
  search->add_option("--mode", o.mode, "Oracle mode (default from config)")->check(CLI::IsMember({"final", "all-steps"}));
  search->add_option("--seed", o.seed, "Search seed (default from config)");
  CLI::App* tradeoff = app.add_subcommand("tradeoff", "Qubits-vs-depth table over objective variants");
  add_config(tradeoff);

  CLI11_PARSE(app, argc, argv);

  try {
    if (optimize->parsed()) return cmd_optimize(o);
    if (check->parsed()) return cmd_check(o);
    if (run_cmd->parsed()) return cmd_run(o);
    if (search->parsed()) return cmd_search(o);
    if (tradeoff->parsed()) return cmd_tradeoff(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const MarginError& e) {
    std::cerr << "margin overflow";
    if (e.has_step()) {
      std::cerr << " at step " << e.step();
    }
    std::cerr << ": " << e.what() << '\n';
    return kExitMargin;
  } catch (const NoFeasibleCandidateError& e) {
    std::cerr << "no feasible candidate: " << e.what() << '\n';
    return kExitNoCandidate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
