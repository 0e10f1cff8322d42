/**
 * @file optimizer.hpp
 * @brief Scheme synthesis: the feasibility report of a candidate scheme and a
 *        deterministic branch-and-bound over (a0, N, A_d, M_d, E_d) with the continuous
 *        coefficients solved at each (a0, N) node.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qlmm/bitfloat.hpp"
#include "qlmm/lmm.hpp"
#include "qlmm/stepper.hpp"

namespace qlmm {

enum class ObjectiveKind { min_qubits, min_depth, min_depth_under_qubit_cap };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::min_qubits;
  /// Only read by min_depth_under_qubit_cap.
  std::uint64_t qubit_cap = 0;

  [[nodiscard]] std::uint64_t value(const CostTerms& c) const noexcept {
    return kind == ObjectiveKind::min_qubits ? c.qubits : c.depth;
  }
};

[[nodiscard]] inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::min_qubits:
      return "min_qubits";
    case ObjectiveKind::min_depth:
      return "min_depth";
    case ObjectiveKind::min_depth_under_qubit_cap:
      return "min_depth_under_cap";
  }
  return "unknown";
}

struct IntRange {
  int lo = 1;
  int hi = 0;

  [[nodiscard]] bool empty() const noexcept { return lo > hi; }
};

struct VariableBox {
  IntRange mantissa{2, 40};
  IntRange exponent{1, 8};
  IntRange margin{1, 4};
  IntRange a0{1, 4};
  IntRange steps{1, 5000};
  double h_min = 0.0;
  double h_max = std::numeric_limits<double>::infinity();

  [[nodiscard]] bool empty() const noexcept {
    return mantissa.empty() || exponent.empty() || margin.empty() || a0.empty() || steps.empty() || h_min > h_max;
  }
};

struct OptimizationProblem {
  IvpSpec ivp;
  double epsilon = 0.0;
  Objective objective;
  std::vector<std::size_t> k_range{2, 3};
  VariableBox box;
  /// deriv_bound[m][d] bounds |x_d^(m)|; order p + 1 is read for a p-th order scheme.
  std::vector<Vector> deriv_bound;
  CostModel cost_model;
  std::optional<double> h_cap;
  /// Jacobian eigenvalues per candidate; absolute stability is checked at h times each.
  std::vector<std::vector<Complex>> spectrum;
  /// Smallest accepted gap between the spurious roots and the unit circle.
  double stability_floor = 0.05;
  std::uint64_t node_limit = 1'000'000;

  [[nodiscard]] double duration() const noexcept { return ivp.tf - ivp.t0; }

  void validate() const {
    ivp.validate();
    if (!(epsilon > 0.0)) {
      throw Error("epsilon must be positive");
    }
    if (k_range.empty()) {
      throw Error("k_range is empty");
    }
    for (std::size_t k : k_range) {
      if (k < 2) {
        throw Error("every k in k_range must be at least 2");
      }
    }
    if (deriv_bound.empty()) {
      throw Error("derivative bounds are required");
    }
    for (const auto& b : deriv_bound) {
      if (b.size() != ivp.dimension) {
        throw Error("derivative bounds need one entry per dimension");
      }
    }
    if (h_cap && !(*h_cap > 0.0)) {
      throw Error("h cap must be positive");
    }
    cost_model.validate();
  }
};

/// Largest reachable biased value in dimension d: x0_max + v + T max(u, 0).
[[nodiscard]] inline double upper_envelope(const OptimizationProblem& p, std::size_t d, double v) {
  return p.ivp.x0_max[d] + v + p.duration() * std::max(p.ivp.u[d], 0.0);
}

/// Smallest reachable biased value in dimension d: x0_min + v + T min(l, 0).
[[nodiscard]] inline double lower_envelope(const OptimizationProblem& p, std::size_t d, double v) {
  return p.ivp.x0_min[d] + v + p.duration() * std::min(p.ivp.l[d], 0.0);
}

/// Left factor 2^-a0 (2^A + 1) - 1 of the margin inequality.
[[nodiscard]] inline double margin_factor(int a0, int margin_bits) {
  return std::ldexp(std::ldexp(1.0, margin_bits) + 1.0, -a0) - 1.0;
}

struct TruncationError {
  int order = 0;
  double constant = 0.0;
  /// Accumulated method error per dimension.
  Vector tau;
};

/**
 * tau_d = |C_{p+1}| / (p+1)! * h^p * (t_f - t_0) * max|x_d^(p+1)|.
 *
 * An inconsistent method (p = 0) gets an infinite error.
 */
[[nodiscard]] inline TruncationError truncation_error(const LmmCoefficients& coeffs, double h,
                                                      const OptimizationProblem& p) {
  TruncationError out;
  out.order = consistency_order(coeffs);
  const std::size_t dim = p.ivp.dimension;
  if (out.order == 0) {
    out.tau.assign(dim, std::numeric_limits<double>::infinity());
    return out;
  }
  const auto m = static_cast<std::size_t>(out.order) + 1;
  if (m >= p.deriv_bound.size()) {
    throw Error("no derivative bound of order " + std::to_string(m));
  }
  out.constant = std::abs(error_constant(coeffs, out.order));
  out.tau.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    out.tau[d] = out.constant * std::pow(h, out.order) * p.duration() * p.deriv_bound[m][d];
  }
  return out;
}

struct ConstraintCheck {
  std::string name;
  bool passed = false;
  /// Positive slack when satisfied; the smallest over dimensions for per-dimension entries.
  double residual = 0.0;
  Vector per_dimension;
};

struct FeasibilityReport {
  std::vector<ConstraintCheck> checks;
  int order = 0;
  /// Smallest epsilon that the error-budget entry would accept.
  double epsilon_needed = 0.0;

  [[nodiscard]] bool feasible() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const ConstraintCheck& c) { return c.passed; });
  }

  [[nodiscard]] const ConstraintCheck& at(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) {
        return c;
      }
    }
    throw Error("no constraint named " + name);
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["feasible"] = feasible();
    j["order"] = order;
    j["epsilon_needed"] = epsilon_needed;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
      nlohmann::json e{{"name", c.name}, {"passed", c.passed}, {"residual", c.residual}};
      if (!c.per_dimension.empty()) {
        e["per_dimension"] = c.per_dimension;
      }
      arr.push_back(std::move(e));
    }
    j["constraints"] = std::move(arr);
    return j;
  }
};

struct DimensionResiduals {
  double overflow = 0.0;
  double underflow = 0.0;
  double error = 0.0;
  double margin = 0.0;

  [[nodiscard]] bool passed() const noexcept { return overflow > 0 && underflow > 0 && error > 0 && margin > 0; }
};

/// The per-dimension inequalities; positive means satisfied.
[[nodiscard]] inline DimensionResiduals dimension_residuals(const OptimizationProblem& p, std::size_t d,
                                                            const FloatFormat& fmt, double v, int a0, std::size_t k,
                                                            double h, double tau) {
  const double upper = upper_envelope(p, d, v);
  const double lower = lower_envelope(p, d, v);
  DimensionResiduals r;
  r.overflow = fmt.w_upper() - upper;
  r.underflow = lower - fmt.w_lower();
  r.error = p.epsilon - (upper * std::ldexp(1.0, -fmt.mantissa_bits()) + tau);
  r.margin = margin_factor(a0, fmt.margin_bits()) * lower - h * static_cast<double>(k) * p.ivp.u[d];
  return r;
}

namespace detail {

inline std::vector<Complex> unique_eigenvalues(const OptimizationProblem& p) {
  std::vector<Complex> out;
  for (const auto& cand : p.spectrum) {
    for (const Complex& z : cand) {
      if (z.real() > 0.0) {
        continue;
      }
      const bool seen =
          std::any_of(out.begin(), out.end(), [&](const Complex& w) { return std::abs(w - z) <= 1e-12 * (1 + std::abs(z)); });
      if (!seen) {
        out.push_back(z);
      }
    }
  }
  return out;
}

/// Smallest spurious-root margin over hλ = 0 and the test spectrum; -1 when any point fails.
inline double stability_score(const LmmCoefficients& coeffs, double h, const std::vector<Complex>& eigenvalues) {
  if (!zero_stable(coeffs)) {
    return -1.0;
  }
  double worst = spurious_root_margin(coeffs, 0.0);
  for (const Complex& z : eigenvalues) {
    const Complex hl = h * z;
    if (!absolutely_stable(coeffs, hl)) {
      return -1.0;
    }
    worst = std::min(worst, spurious_root_margin(coeffs, hl));
  }
  return worst;
}

}  // namespace detail

/**
 * Feasibility of `scheme` for `p`. Infeasibility is reported as data; only a scheme
 * whose shape does not match the problem throws.
 */
[[nodiscard]] inline FeasibilityReport check_feasible(const Scheme& scheme, const OptimizationProblem& p) {
  if (scheme.dimension() != p.ivp.dimension || scheme.bias.size() != p.ivp.dimension) {
    throw SchemeError("scheme dimension does not match the problem");
  }
  FeasibilityReport rep;
  const LmmCoefficients& c = scheme.coeffs;
  const std::size_t k = c.k();
  const std::size_t dim = p.ivp.dimension;

  {
    const double dev = scheme.a0 >= 1 ? std::abs(c.alpha()[0] + std::ldexp(1.0, -scheme.a0)) : 1.0;
    rep.checks.push_back({"dyadic_alpha0", dev == 0.0, -dev, {}});
    const double b0 = std::abs(c.beta()[0]);
    rep.checks.push_back({"beta0_zero", b0 == 0.0, -b0, {}});
  }

  rep.order = consistency_order(c);
  {
    const double worst = std::max(std::abs(consistency_residual(c, 0)), std::abs(consistency_residual(c, 1)));
    rep.checks.push_back({"consistency", rep.order >= 1, 1e-3 - worst, {}});
  }

  const std::vector<Complex> eigenvalues = detail::unique_eigenvalues(p);
  try {
    const bool zs = zero_stable(c);
    rep.checks.push_back({"zero_stability", zs, spurious_root_margin(c, 0.0), {}});
    bool abs_ok = true;
    double abs_margin = spurious_root_margin(c, 0.0);
    for (const Complex& z : eigenvalues) {
      const Complex hl = scheme.h * z;
      abs_ok = abs_ok && absolutely_stable(c, hl);
      abs_margin = std::min(abs_margin, spurious_root_margin(c, hl));
    }
    rep.checks.push_back({"absolute_stability", abs_ok && zs, abs_margin, {}});
  } catch (const RootFindingError&) {
    rep.checks.push_back({"zero_stability", false, -1.0, {}});
    rep.checks.push_back({"absolute_stability", false, -1.0, {}});
  }

  const TruncationError te = truncation_error(c, scheme.h, p);
  ConstraintCheck over{"overflow", true, std::numeric_limits<double>::infinity(), Vector(dim)};
  ConstraintCheck under{"underflow", true, std::numeric_limits<double>::infinity(), Vector(dim)};
  ConstraintCheck err{"error_budget", true, std::numeric_limits<double>::infinity(), Vector(dim)};
  ConstraintCheck marg{"margin", true, std::numeric_limits<double>::infinity(), Vector(dim)};
  for (std::size_t d = 0; d < dim; ++d) {
    const auto r = dimension_residuals(p, d, scheme.formats[d], scheme.bias[d], scheme.a0, k, scheme.h, te.tau[d]);
    over.per_dimension[d] = r.overflow;
    under.per_dimension[d] = r.underflow;
    err.per_dimension[d] = r.error;
    marg.per_dimension[d] = r.margin;
    rep.epsilon_needed = std::max(rep.epsilon_needed, p.epsilon - r.error);
  }
  for (ConstraintCheck* cc : {&over, &under, &err, &marg}) {
    cc->residual = *std::min_element(cc->per_dimension.begin(), cc->per_dimension.end());
    cc->passed = cc->residual > 0.0;
    rep.checks.push_back(std::move(*cc));
  }

  {
    double slack = std::min(p.box.h_max - scheme.h, scheme.h - p.box.h_min);
    if (p.h_cap) {
      slack = std::min(slack, *p.h_cap - scheme.h);
    }
    rep.checks.push_back({"step_size", slack >= 0.0, slack, {}});
    const double expected = std::floor(p.duration() / scheme.h + 1e-9);
    const double dev = std::abs(static_cast<double>(scheme.steps) - expected);
    rep.checks.push_back({"step_count", dev == 0.0, -dev, {}});
  }
  return rep;
}

/**
 * Coefficients with alpha_0 = -2^-a0, beta_0 = 0 and free alpha_2..alpha_{k-1}.
 *
 * alpha_1 follows from C_0 = 0 and beta_1..beta_{k-1} from C_1..C_{k-1} = 0, so the
 * result has order at least k - 1 and k - 2 degrees of freedom.
 */
[[nodiscard]] inline LmmCoefficients family_coefficients(std::size_t k, int a0, std::span<const double> free) {
  if (k < 2 || free.size() != k - 2) {
    throw SchemeError("a k-step family takes k - 2 free parameters");
  }
  std::vector<double> alpha(k, 0.0), beta(k, 0.0);
  alpha[0] = -std::ldexp(1.0, -a0);
  double s = 0.0;
  for (std::size_t i = 2; i < k; ++i) {
    alpha[i] = free[i - 2];
    s += free[i - 2];
  }
  alpha[1] = -1.0 - alpha[0] - s;

  const auto n = static_cast<Eigen::Index>(k - 1);
  Eigen::MatrixXd a(n, n);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index m = 1; m <= n; ++m) {
    double r = std::pow(static_cast<double>(k), static_cast<double>(m));
    for (std::size_t i = 1; i < k; ++i) {
      r += std::pow(static_cast<double>(i), static_cast<double>(m)) * alpha[i];
    }
    rhs(m - 1) = r;
    for (Eigen::Index j = 1; j <= n; ++j) {
      a(m - 1, j - 1) = static_cast<double>(m) * std::pow(static_cast<double>(j), static_cast<double>(m - 1));
    }
  }
  const Eigen::VectorXd b = a.fullPivLu().solve(rhs);
  for (Eigen::Index j = 1; j <= n; ++j) {
    beta[static_cast<std::size_t>(j)] = b(j - 1);
  }
  return {std::move(alpha), std::move(beta)};
}

/**
 * Free parameters at one (a0, h) node: minimize the largest tau_d subject to the
 * stability margin staying above the floor; ties go to the larger margin.
 *
 * k = 3 uses a grid scan on [-5, 5] refined by golden-section search; k >= 4 uses a
 * multi-start coordinate search and is best effort.
 */
[[nodiscard]] inline std::optional<LmmCoefficients> choose_coefficients(const OptimizationProblem& p, std::size_t k,
                                                                        int a0, double h) {
  const std::vector<Complex> eigenvalues = detail::unique_eigenvalues(p);
  struct Score {
    double tau = std::numeric_limits<double>::infinity();
    double margin = -1.0;
    [[nodiscard]] bool better_than(const Score& o) const noexcept {
      return tau < o.tau || (tau == o.tau && margin > o.margin);
    }
  };
  auto score = [&](std::span<const double> free) -> Score {
    const LmmCoefficients c = family_coefficients(k, a0, free);
    double margin = -1.0;
    try {
      margin = detail::stability_score(c, h, eigenvalues);
    } catch (const RootFindingError&) {
      return {};
    }
    if (margin < p.stability_floor) {
      return {};
    }
    const TruncationError te = truncation_error(c, h, p);
    if (te.order < 1) {
      return {};
    }
    return {*std::max_element(te.tau.begin(), te.tau.end()), margin};
  };

  if (k == 2) {
    const LmmCoefficients c = family_coefficients(2, a0, {});
    if (!std::isfinite(score({}).tau)) {
      return std::nullopt;
    }
    return c;
  }

  std::vector<double> best(k - 2, 0.0);
  Score best_score;
  auto consider = [&](const std::vector<double>& x) {
    const Score s = score(x);
    if (s.better_than(best_score)) {
      best_score = s;
      best = x;
    }
    return s.tau;
  };
  auto golden = [&](std::vector<double> x, std::size_t coord, double lo, double hi, int iters) {
    constexpr double g = 0.6180339887498949;
    auto at = [&](double t) {
      x[coord] = t;
      return consider(x);
    };
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = at(c), fd = at(d);
    for (int i = 0; i < iters; ++i) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = at(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = at(d);
      }
    }
  };

  if (k == 3) {
    constexpr int kGrid = 81;
    constexpr double lo = -5.0, hi = 5.0;
    const double step = (hi - lo) / (kGrid - 1);
    for (int i = 0; i < kGrid; ++i) {
      consider({lo + step * i});
    }
    if (std::isfinite(best_score.tau) && best_score.tau > 0.0) {
      const double centre = best[0];
      golden(best, 0, centre - step, centre + step, 40);
    }
  } else {
    std::vector<std::vector<double>> starts;
    const std::vector<double> seeds{-1.0, -0.25, 0.25};
    const std::size_t dims = k - 2;
    std::size_t total = 1;
    for (std::size_t i = 0; i < dims && total < 81; ++i) {
      total *= seeds.size();
    }
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::vector<double> x(dims, 0.0);
      std::size_t r = idx;
      for (std::size_t i = 0; i < dims; ++i) {
        x[i] = seeds[r % seeds.size()];
        r /= seeds.size();
      }
      starts.push_back(std::move(x));
    }
    for (auto x : starts) {
      consider(x);
      for (int sweep = 0; sweep < 6; ++sweep) {
        for (std::size_t i = 0; i < dims; ++i) {
          const std::vector<double> base = std::isfinite(best_score.tau) ? best : x;
          golden(base, i, base[i] - 1.0, base[i] + 1.0, 20);
        }
      }
    }
  }
  if (!std::isfinite(best_score.tau)) {
    return std::nullopt;
  }
  return family_coefficients(k, a0, best);
}

/// Round up to a dyadic number with `bits` significant bits.
[[nodiscard]] inline double round_up_dyadic(double v, int bits = 8) {
  if (v <= 0.0) {
    return 0.0;
  }
  const int e = std::ilogb(v);
  const double q = std::ldexp(1.0, e - bits + 1);
  return std::ceil(v / q) * q;
}

/**
 * Bias for dimension d: clear the lowest reachable value by 10% of the reachable range,
 * then raise it until the margin inequality holds with 5% slack.
 */
[[nodiscard]] inline double choose_bias(const OptimizationProblem& p, std::size_t d, int a0, int margin_bits,
                                        std::size_t k, double h) {
  const double low = lower_envelope(p, d, 0.0);
  const double high = upper_envelope(p, d, 0.0);
  double range = high - low;
  if (!(range > 0.0)) {
    range = 1.0;
  }
  double v = std::max(0.0, -low) + 0.1 * range;
  const double factor = margin_factor(a0, margin_bits);
  const double need = h * static_cast<double>(k) * p.ivp.u[d];
  if (factor > 0.0 && need > 0.0 && factor * (low + v) <= need * 1.05) {
    v = need * 1.05 / factor - low;
  }
  return round_up_dyadic(v);
}

/**
 * Smallest exponent offset whose w_upper clears `upper`, accepted only when w_lower also
 * leaves room for the scaled operand 2^-(a0+1) * lower.
 */
[[nodiscard]] inline std::optional<FloatFormat> choose_format(int mantissa, int exponent, int margin, double upper,
                                                              double lower, int a0) {
  if (!(lower > 0.0) || !(upper >= lower)) {
    return std::nullopt;
  }
  const double top = std::ldexp(1.0, mantissa) - 1.0;
  const long long span = (1LL << exponent) - 1;
  long long off =
      static_cast<long long>(std::floor(std::log2(upper / top))) - span + (mantissa - 1) - 1;
  auto w_upper = [&](long long o) {
    return std::ldexp(top, static_cast<int>(span + o - (mantissa - 1)));
  };
  while (w_upper(off) <= upper) {
    ++off;
  }
  while (w_upper(off - 1) > upper) {
    --off;
  }
  if (std::ldexp(1.0, static_cast<int>(off)) > std::ldexp(lower, -(a0 + 1))) {
    return std::nullopt;
  }
  try {
    return FloatFormat(mantissa, exponent, static_cast<int>(off), margin);
  } catch (const FormatError&) {
    return std::nullopt;
  }
}

struct Solution {
  std::size_t k = 0;
  Scheme scheme;
  CostTerms cost;
  std::uint64_t objective = 0;
  FeasibilityReport report;
  std::uint64_t nodes = 0;
};

struct DimensionChoice {
  int margin = 1;
  int mantissa = 2;
  int exponent = 1;
};

namespace detail {

struct NodeContext {
  const OptimizationProblem& problem;
  std::size_t k;
  int a0;
  std::size_t steps;
  double h;
  LmmCoefficients coeffs;
  Vector tau;
};

inline std::size_t steps_for(const OptimizationProblem& p, std::size_t n, double& h) {
  const double t = p.duration();
  h = t / static_cast<double>(n);
  if (p.h_cap) {
    h = std::min(h, *p.h_cap);
  }
  h = std::min(h, p.box.h_max);
  if (h < p.box.h_min || !(h > 0.0)) {
    return 0;
  }
  return static_cast<std::size_t>(std::floor(t / h + 1e-9));
}

/// Leaf evaluator shared by the branch-and-bound and the brute-force enumerator.
inline std::optional<Solution> evaluate_leaf(const NodeContext& ctx, const std::vector<DimensionChoice>& dims) {
  const OptimizationProblem& p = ctx.problem;
  std::vector<FloatFormat> formats;
  Vector bias;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const DimensionChoice& c = dims[d];
    const double v = choose_bias(p, d, ctx.a0, c.margin, ctx.k, ctx.h);
    const auto fmt = choose_format(c.mantissa, c.exponent, c.margin, upper_envelope(p, d, v), lower_envelope(p, d, v),
                                   ctx.a0);
    if (!fmt) {
      return std::nullopt;
    }
    formats.push_back(*fmt);
    bias.push_back(v);
  }
  Solution sol{ctx.k, Scheme{ctx.coeffs, ctx.a0, ctx.h, ctx.steps, p.ivp.t0, std::move(formats), std::move(bias)},
               {}, 0, {}, 0};
  sol.report = check_feasible(sol.scheme, p);
  if (!sol.report.feasible()) {
    return std::nullopt;
  }
  sol.cost = fixed_cost(p.cost_model, ctx.steps);
  for (const auto& c : dims) {
    sol.cost += dimension_cost(p.cost_model, c.mantissa, c.exponent, c.margin, ctx.k, ctx.steps);
  }
  if (p.objective.kind == ObjectiveKind::min_depth_under_qubit_cap && sol.cost.qubits > p.objective.qubit_cap) {
    return std::nullopt;
  }
  sol.objective = p.objective.value(sol.cost);
  return sol;
}

struct Option {
  DimensionChoice choice;
  CostTerms cost;
};

/// For every (A, M) the smallest E passing the per-dimension constraints.
inline std::vector<Option> dimension_options(const NodeContext& ctx, std::size_t d) {
  const OptimizationProblem& p = ctx.problem;
  std::vector<Option> out;
  for (int a = p.box.margin.lo; a <= p.box.margin.hi; ++a) {
    if (margin_factor(ctx.a0, a) <= 0.0) {
      continue;
    }
    const double v = choose_bias(p, d, ctx.a0, a, ctx.k, ctx.h);
    const double upper = upper_envelope(p, d, v);
    const double lower = lower_envelope(p, d, v);
    for (int m = p.box.mantissa.lo; m <= p.box.mantissa.hi; ++m) {
      if (!(upper * std::ldexp(1.0, -m) + ctx.tau[d] < p.epsilon)) {
        continue;
      }
      for (int e = p.box.exponent.lo; e <= p.box.exponent.hi; ++e) {
        const auto fmt = choose_format(m, e, a, upper, lower, ctx.a0);
        if (!fmt) {
          continue;
        }
        if (dimension_residuals(p, d, *fmt, v, ctx.a0, ctx.k, ctx.h, ctx.tau[d]).passed()) {
          out.push_back({{a, m, e}, dimension_cost(p.cost_model, m, e, a, ctx.k, ctx.steps)});
          break;
        }
      }
    }
  }
  const Objective& obj = p.objective;
  std::stable_sort(out.begin(), out.end(),
                   [&](const Option& x, const Option& y) { return obj.value(x.cost) < obj.value(y.cost); });
  return out;
}

/// Cheapest conceivable share of one dimension at N steps, ignoring every constraint but the margin sign.
inline CostTerms dimension_floor(const OptimizationProblem& p, int a0, std::size_t k, std::size_t steps) {
  int a = p.box.margin.lo;
  while (a <= p.box.margin.hi && margin_factor(a0, a) <= 0.0) {
    ++a;
  }
  a = std::min(a, p.box.margin.hi);
  return dimension_cost(p.cost_model, p.box.mantissa.lo, p.box.exponent.lo, a, k, steps);
}

class BudgetCounter {
 public:
  explicit BudgetCounter(std::uint64_t limit) : limit_(limit) {}
  void tick() {
    if (++nodes_ > limit_) {
      throw BudgetExceededError("node limit of " + std::to_string(limit_) + " reached");
    }
  }
  [[nodiscard]] std::uint64_t nodes() const noexcept { return nodes_; }

 private:
  std::uint64_t limit_;
  std::uint64_t nodes_ = 0;
};

}  // namespace detail

/**
 * Best scheme with k steps. Traversal is a0 ascending, then N ascending, then the
 * dimensions in order with their options cheapest first; the incumbent only changes on
 * strict improvement, so the result is deterministic.
 */
[[nodiscard]] inline Solution solve_for_k(const OptimizationProblem& p, std::size_t k) {
  p.validate();
  if (k < 2) {
    throw Error("k must be at least 2");
  }
  if (p.box.empty()) {
    throw InfeasibleError("the variable box is empty");
  }
  const std::size_t dim = p.ivp.dimension;
  const Objective& obj = p.objective;
  detail::BudgetCounter budget(p.node_limit);
  std::optional<Solution> best;
  auto incumbent = [&]() { return best ? best->objective : std::numeric_limits<std::uint64_t>::max(); };

  for (int a0 = p.box.a0.lo; a0 <= p.box.a0.hi; ++a0) {
    for (int n = p.box.steps.lo; n <= p.box.steps.hi; ++n) {
      const auto steps = static_cast<std::size_t>(n);
      CostTerms floor = fixed_cost(p.cost_model, steps);
      for (std::size_t d = 0; d < dim; ++d) {
        floor += detail::dimension_floor(p, a0, k, steps);
      }
      if (obj.value(floor) >= incumbent()) {
        break;
      }
      budget.tick();
      double h = 0.0;
      if (detail::steps_for(p, steps, h) != steps) {
        continue;
      }
      const auto coeffs = choose_coefficients(p, k, a0, h);
      if (!coeffs) {
        continue;
      }
      detail::NodeContext ctx{p, k, a0, steps, h, *coeffs, truncation_error(*coeffs, h, p).tau};

      std::vector<std::vector<detail::Option>> options(dim);
      std::vector<CostTerms> cheapest(dim + 1);
      bool empty = false;
      for (std::size_t d = 0; d < dim && !empty; ++d) {
        options[d] = detail::dimension_options(ctx, d);
        empty = options[d].empty();
      }
      if (empty) {
        continue;
      }
      // cheapest[d]: cheapest share of dimensions d..dim-1
      for (std::size_t d = dim; d-- > 0;) {
        CostTerms c = cheapest[d + 1];
        const auto it = std::min_element(options[d].begin(), options[d].end(), [&](const auto& x, const auto& y) {
          return obj.value(x.cost) < obj.value(y.cost);
        });
        c += it->cost;
        cheapest[d] = c;
      }
      std::vector<std::uint64_t> min_q(dim + 1, 0);
      for (std::size_t d = dim; d-- > 0;) {
        std::uint64_t q = std::numeric_limits<std::uint64_t>::max();
        for (const auto& o : options[d]) {
          q = std::min(q, o.cost.qubits);
        }
        min_q[d] = min_q[d + 1] + q;
      }

      std::vector<DimensionChoice> chosen(dim);
      auto dfs = [&](auto&& self, std::size_t d, CostTerms acc) -> void {
        budget.tick();
        if (d == dim) {
          if (auto sol = detail::evaluate_leaf(ctx, chosen); sol && sol->objective < incumbent()) {
            best = std::move(sol);
          }
          return;
        }
        for (const auto& o : options[d]) {
          CostTerms next = acc;
          next += o.cost;
          CostTerms bound = next;
          bound.qubits += cheapest[d + 1].qubits;
          bound.depth += cheapest[d + 1].depth;
          if (obj.value(bound) >= incumbent()) {
            continue;
          }
          if (obj.kind == ObjectiveKind::min_depth_under_qubit_cap &&
              next.qubits + min_q[d + 1] > obj.qubit_cap) {
            continue;
          }
          chosen[d] = o.choice;
          self(self, d + 1, next);
        }
      };
      dfs(dfs, 0, fixed_cost(p.cost_model, steps));
    }
  }
  if (!best) {
    throw InfeasibleError("no feasible " + std::to_string(k) + "-step scheme in the variable box");
  }
  best->nodes = budget.nodes();
  return *best;
}

/**
 * Exhaustive reference: every (a0, N, A_d, M_d, E_d) in the box through the same leaf
 * evaluator. Only practical on tiny boxes.
 */
[[nodiscard]] inline std::optional<Solution> enumerate_for_k(const OptimizationProblem& p, std::size_t k) {
  p.validate();
  if (p.box.empty()) {
    return std::nullopt;
  }
  const std::size_t dim = p.ivp.dimension;
  std::vector<DimensionChoice> all;
  for (int a = p.box.margin.lo; a <= p.box.margin.hi; ++a) {
    for (int m = p.box.mantissa.lo; m <= p.box.mantissa.hi; ++m) {
      for (int e = p.box.exponent.lo; e <= p.box.exponent.hi; ++e) {
        all.push_back({a, m, e});
      }
    }
  }
  std::optional<Solution> best;
  for (int a0 = p.box.a0.lo; a0 <= p.box.a0.hi; ++a0) {
    for (int n = p.box.steps.lo; n <= p.box.steps.hi; ++n) {
      const auto steps = static_cast<std::size_t>(n);
      double h = 0.0;
      if (detail::steps_for(p, steps, h) != steps) {
        continue;
      }
      const auto coeffs = choose_coefficients(p, k, a0, h);
      if (!coeffs) {
        continue;
      }
      const detail::NodeContext ctx{p, k, a0, steps, h, *coeffs, truncation_error(*coeffs, h, p).tau};
      std::vector<std::size_t> idx(dim, 0);
      while (true) {
        std::vector<DimensionChoice> pick(dim);
        for (std::size_t d = 0; d < dim; ++d) {
          pick[d] = all[idx[d]];
        }
        if (auto sol = detail::evaluate_leaf(ctx, pick); sol && (!best || sol->objective < best->objective)) {
          best = std::move(sol);
        }
        std::size_t d = 0;
        while (d < dim && ++idx[d] == all.size()) {
          idx[d++] = 0;
        }
        if (d == dim) {
          break;
        }
      }
    }
  }
  return best;
}

struct KResult {
  std::size_t k = 0;
  std::optional<Solution> solution;
  std::string status;
};

struct Selection {
  Solution best;
  std::vector<KResult> per_k;
};

/// Solve every k in the range and keep the smallest objective; ties go to the smaller k.
[[nodiscard]] inline Selection select_best(const OptimizationProblem& p) {
  std::vector<std::size_t> ks = p.k_range;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  std::vector<KResult> per_k;
  std::optional<std::size_t> winner;
  for (std::size_t k : ks) {
    KResult r{k, std::nullopt, "ok"};
    try {
      r.solution = solve_for_k(p, k);
    } catch (const InfeasibleError& e) {
      r.status = std::string("infeasible: ") + e.what();
    }
    if (r.solution && (!winner || r.solution->objective < per_k[*winner].solution->objective)) {
      winner = per_k.size();
    }
    per_k.push_back(std::move(r));
  }
  if (!winner) {
    throw InfeasibleError("no k in the range admits a feasible scheme");
  }
  Selection sel{*per_k[*winner].solution, std::move(per_k)};
  return sel;
}

}  // namespace qlmm
