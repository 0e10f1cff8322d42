/**
 * @file stepper.hpp
 * @brief The k-step scheme evaluated in register arithmetic: biased states, a truncated
 *        RK4 start-up, per-step ancilla accounting and resource/depth models.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "qlmm/bitfloat.hpp"
#include "qlmm/lmm.hpp"

namespace qlmm {

/**
 * Integer linear cost coefficients.
 *
 *     R_c = sum_d [adder_ancilla_cost(A_d) + rc_mantissa*M_d + rc_exponent*E_d] + rc_const
 *     R_u = sum_d [ru_mantissa*M_d + ru_exponent*E_d] + ru_const
 *     q_k = sum_d [depth_mantissa*M_d + depth_exponent*E_d] + depth_rc*R_c + depth_const
 */
struct CostModel {
  std::int64_t rc_mantissa = 0;
  std::int64_t rc_exponent = 0;
  std::int64_t rc_const = 0;
  std::int64_t ru_mantissa = 2;
  std::int64_t ru_exponent = 2;
  std::int64_t ru_const = 0;
  std::int64_t depth_mantissa = 1;
  std::int64_t depth_exponent = 1;
  std::int64_t depth_rc = 1;
  std::int64_t depth_const = 10;

  void validate() const {
    for (std::int64_t c : {rc_mantissa, rc_exponent, rc_const, ru_mantissa, ru_exponent, ru_const, depth_mantissa,
                           depth_exponent, depth_rc, depth_const}) {
      if (c < 0) {
        throw Error("cost model coefficients must be non-negative");
      }
    }
  }
};

/// Qubit and depth contributions that an objective can split per dimension.
struct CostTerms {
  std::uint64_t qubits = 0;
  std::uint64_t depth = 0;

  CostTerms& operator+=(const CostTerms& o) noexcept {
    qubits += o.qubits;
    depth += o.depth;
    return *this;
  }
};

/// Share of one dimension with format (M, E, A) in a k-step, N-step scheme.
[[nodiscard]] inline CostTerms dimension_cost(const CostModel& model, int mantissa, int exponent, int margin,
                                              std::size_t k, std::size_t steps) {
  const auto m = static_cast<std::uint64_t>(mantissa);
  const auto e = static_cast<std::uint64_t>(exponent);
  const auto n = static_cast<std::uint64_t>(steps);
  const std::uint64_t rc = adder_ancilla_cost(margin) + static_cast<std::uint64_t>(model.rc_mantissa) * m +
                           static_cast<std::uint64_t>(model.rc_exponent) * e;
  const std::uint64_t ru = static_cast<std::uint64_t>(model.ru_mantissa) * m +
                           static_cast<std::uint64_t>(model.ru_exponent) * e;
  const std::uint64_t qk = static_cast<std::uint64_t>(model.depth_mantissa) * m +
                           static_cast<std::uint64_t>(model.depth_exponent) * e +
                           static_cast<std::uint64_t>(model.depth_rc) * rc;
  return {static_cast<std::uint64_t>(k) * (m + e) + n * rc + ru, n * qk};
}

/// Dimension-independent share.
[[nodiscard]] inline CostTerms fixed_cost(const CostModel& model, std::size_t steps) {
  const auto n = static_cast<std::uint64_t>(steps);
  const auto rc = static_cast<std::uint64_t>(model.rc_const);
  return {n * rc + static_cast<std::uint64_t>(model.ru_const),
          n * (static_cast<std::uint64_t>(model.depth_rc) * rc + static_cast<std::uint64_t>(model.depth_const))};
}

/**
 * A k-step scheme y_{n+k} = 2^-a0 y_n - sum_{i>=1} alpha_i y_{n+i} + h sum_{j>=1} beta_j f_{n+j}
 * on biased states y = x + v.
 */
struct Scheme {
  LmmCoefficients coeffs;
  int a0 = 1;
  double h = 0.0;
  std::size_t steps = 0;
  double t0 = 0.0;
  std::vector<FloatFormat> formats;
  Vector bias;

  [[nodiscard]] std::size_t k() const noexcept { return coeffs.k(); }
  [[nodiscard]] std::size_t dimension() const noexcept { return formats.size(); }
  [[nodiscard]] double time(std::size_t n) const noexcept { return t0 + static_cast<double>(n) * h; }

  /// The bias as actually held in the register: v truncated into the dimension's format.
  [[nodiscard]] double effective_bias(std::size_t d) const {
    return bias[d] == 0.0 ? 0.0 : encode(bias[d], formats[d]).decode();
  }

  /// Shape checks only; numerical validity is the optimizer's feasibility report.
  void validate_structure() const {
    if (k() < 2) {
      throw SchemeError("a scheme needs k >= 2");
    }
    if (a0 < 1 || a0 > 60) {
      throw SchemeError("a0 must be a positive integer");
    }
    if (coeffs.alpha()[0] != -std::ldexp(1.0, -a0)) {
      throw SchemeError("alpha_0 must equal -2^-a0 exactly");
    }
    if (coeffs.beta()[0] != 0.0) {
      throw SchemeError("beta_0 must be zero");
    }
    if (!(h > 0.0) || !std::isfinite(h)) {
      throw SchemeError("step size must be positive");
    }
    if (formats.empty() || bias.size() != formats.size()) {
      throw SchemeError("one format and one bias per dimension are required");
    }
    for (double v : bias) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw SchemeError("biases must be finite and non-negative");
      }
    }
  }
};

struct RunRecord {
  std::size_t candidate = 0;
  double t0 = 0.0;
  double h = 0.0;
  std::vector<std::vector<SoftValue>> trajectory;
  /// decode(y) - effective bias, per step.
  std::vector<Vector> decoded;
  Vector effective_bias;
  AncillaLedger ledger;
  std::uint64_t modeled_depth = 0;

  [[nodiscard]] double time(std::size_t n) const noexcept { return t0 + static_cast<double>(n) * h; }
};

namespace detail {

inline std::vector<WorkValue> evaluate_f(const Scheme& scheme, const IvpSpec& ivp, std::size_t candidate, double t,
                                         const std::vector<WorkValue>& y, const Vector& v_eff) {
  Vector x(y.size());
  for (std::size_t d = 0; d < y.size(); ++d) {
    x[d] = y[d].to_real() - v_eff[d];
  }
  const Vector f = ivp.deriv(t, x, candidate);
  std::vector<WorkValue> out;
  out.reserve(f.size());
  for (std::size_t d = 0; d < f.size(); ++d) {
    out.push_back(WorkValue::from_real(f[d], scheme.formats[d].mantissa_bits()));
  }
  return out;
}

inline std::vector<WorkValue> to_work(const std::vector<SoftValue>& y) {
  std::vector<WorkValue> out;
  out.reserve(y.size());
  for (const auto& v : y) {
    out.push_back(WorkValue::from_soft(v));
  }
  return out;
}

inline Vector effective_biases(const Scheme& scheme) {
  Vector v(scheme.dimension());
  for (std::size_t d = 0; d < v.size(); ++d) {
    v[d] = scheme.effective_bias(d);
  }
  return v;
}

inline void check_dimensions(const Scheme& scheme, const IvpSpec& ivp) {
  scheme.validate_structure();
  if (ivp.dimension != scheme.dimension()) {
    throw SchemeError("scheme has " + std::to_string(scheme.dimension()) + " formats but the IVP has dimension " +
                      std::to_string(ivp.dimension));
  }
}

}  // namespace detail

/**
 * y_0 = trunc(x_0 + v), then k-1 RK4 steps on the biased state. Every stage product and
 * partial sum is truncated to the dimension's mantissa width.
 */
[[nodiscard]] inline std::vector<std::vector<SoftValue>> init_prefix(const Scheme& scheme, const IvpSpec& ivp,
                                                                     std::size_t candidate) {
  detail::check_dimensions(scheme, ivp);
  const std::size_t dim = scheme.dimension();
  const Vector v_eff = detail::effective_biases(scheme);
  const Vector x0 = ivp.initial(candidate);

  std::vector<std::vector<SoftValue>> prefix;
  std::vector<SoftValue> y0;
  for (std::size_t d = 0; d < dim; ++d) {
    const int bits = scheme.formats[d].mantissa_bits();
    const WorkValue sum0 = sum(WorkValue::from_real(x0[d], 53), WorkValue::from_real(v_eff[d], 53), bits);
    if (sum0.sign() < 0) {
      throw NegativeResultError("biased initial state is negative in dimension " + std::to_string(d));
    }
    y0.push_back(sum0.to_soft(scheme.formats[d]));
  }
  prefix.push_back(std::move(y0));

  const double h = scheme.h;
  for (std::size_t i = 1; i < scheme.k(); ++i) {
    const double t = scheme.time(i - 1);
    const std::vector<WorkValue> y = detail::to_work(prefix.back());
    auto stage_state = [&](const std::vector<WorkValue>& slope, double c) {
      std::vector<WorkValue> s;
      for (std::size_t d = 0; d < dim; ++d) {
        const int bits = scheme.formats[d].mantissa_bits();
        s.push_back(sum(y[d], slope[d].scaled(c, bits), bits));
      }
      return s;
    };
    const auto k1 = detail::evaluate_f(scheme, ivp, candidate, t, y, v_eff);
    const auto k2 = detail::evaluate_f(scheme, ivp, candidate, t + h / 2, stage_state(k1, h / 2), v_eff);
    const auto k3 = detail::evaluate_f(scheme, ivp, candidate, t + h / 2, stage_state(k2, h / 2), v_eff);
    const auto k4 = detail::evaluate_f(scheme, ivp, candidate, t + h, stage_state(k3, h), v_eff);
    std::vector<SoftValue> next;
    for (std::size_t d = 0; d < dim; ++d) {
      const int bits = scheme.formats[d].mantissa_bits();
      WorkValue acc = y[d];
      acc = sum(acc, k1[d].scaled(h / 6, bits), bits);
      acc = sum(acc, k2[d].scaled(h / 3, bits), bits);
      acc = sum(acc, k3[d].scaled(h / 3, bits), bits);
      acc = sum(acc, k4[d].scaled(h / 6, bits), bits);
      if (acc.sign() < 0) {
        throw NegativeResultError("start-up state went negative in dimension " + std::to_string(d));
      }
      next.push_back(acc.to_soft(scheme.formats[d]));
    }
    prefix.push_back(std::move(next));
  }
  return prefix;
}

/**
 * One step: r_a = 2^-a0 y_n through the exponent register, r_b = weighted sum of the
 * remaining history and derivative terms, then y_{n+k} = r_a + r_b in the margined adder.
 *
 * `n` is the index of the oldest window entry; a MarginError carries the index n + k of
 * the value that could not be formed.
 */
[[nodiscard]] inline std::vector<SoftValue> qlmm_step(const std::vector<std::vector<SoftValue>>& window,
                                                      std::size_t n, const Scheme& scheme, const IvpSpec& ivp,
                                                      std::size_t candidate, AncillaLedger& ledger,
                                                      std::uint64_t workspace_qubits = 0) {
  const std::size_t k = scheme.k();
  const std::size_t dim = scheme.dimension();
  if (window.size() != k) {
    throw Error("qlmm_step needs a window of k states");
  }
  const Vector v_eff = detail::effective_biases(scheme);

  std::vector<std::vector<WorkValue>> f(k);
  for (std::size_t j = 1; j < k; ++j) {
    f[j] = detail::evaluate_f(scheme, ivp, candidate, scheme.time(n + j), detail::to_work(window[j]), v_eff);
  }

  std::vector<double> coeffs;
  for (std::size_t i = 1; i < k; ++i) {
    coeffs.push_back(-scheme.coeffs.alpha()[i]);
  }
  for (std::size_t j = 1; j < k; ++j) {
    coeffs.push_back(scheme.h * scheme.coeffs.beta()[j]);
  }

  std::vector<SoftValue> out;
  out.reserve(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    std::vector<WorkValue> terms;
    for (std::size_t i = 1; i < k; ++i) {
      terms.push_back(WorkValue::from_soft(window[i][d]));
    }
    for (std::size_t j = 1; j < k; ++j) {
      terms.push_back(f[j][d]);
    }
    const SoftValue r_a = scale_pow2(window[0][d], -scheme.a0);
    const SoftValue r_b = weighted_sum(coeffs, terms, scheme.formats[d], ledger, workspace_qubits);
    try {
      out.push_back(add_margined(r_a, r_b, ledger));
    } catch (const MarginError& e) {
      throw MarginError(std::string(e.what()) + " at step " + std::to_string(n + k) + ", dimension " +
                            std::to_string(d),
                        n + k);
    }
  }
  return out;
}

/// Qubit count k*sum(M+E) + N*R_c + R_u.
[[nodiscard]] inline std::uint64_t resource_estimate(const Scheme& scheme, const CostModel& model) {
  CostTerms total = fixed_cost(model, scheme.steps);
  for (const auto& f : scheme.formats) {
    total += dimension_cost(model, f.mantissa_bits(), f.exponent_bits(), f.margin_bits(), scheme.k(), scheme.steps);
  }
  return total.qubits;
}

/// Circuit depth N * q_k.
[[nodiscard]] inline std::uint64_t depth_estimate(const Scheme& scheme, const CostModel& model) {
  CostTerms total = fixed_cost(model, scheme.steps);
  for (const auto& f : scheme.formats) {
    total += dimension_cost(model, f.mantissa_bits(), f.exponent_bits(), f.margin_bits(), scheme.k(), scheme.steps);
  }
  return total.depth;
}

/// Workspace that is uncomputed after every step (the R_u term).
[[nodiscard]] inline std::uint64_t uncomputed_workspace(const Scheme& scheme, const CostModel& model) {
  std::uint64_t ru = static_cast<std::uint64_t>(model.ru_const);
  for (const auto& f : scheme.formats) {
    ru += static_cast<std::uint64_t>(model.ru_mantissa * f.mantissa_bits() + model.ru_exponent * f.exponent_bits());
  }
  return ru;
}

/// Full trajectory of N + k states for one candidate.
[[nodiscard]] inline RunRecord run(const Scheme& scheme, const IvpSpec& ivp, std::size_t candidate,
                                   const CostModel& model = {}) {
  RunRecord rec;
  rec.candidate = candidate;
  rec.t0 = scheme.t0;
  rec.h = scheme.h;
  rec.effective_bias = detail::effective_biases(scheme);
  rec.trajectory = init_prefix(scheme, ivp, candidate);
  rec.trajectory.reserve(scheme.steps + scheme.k());
  const std::uint64_t workspace = uncomputed_workspace(scheme, model);
  for (std::size_t n = 0; n < scheme.steps; ++n) {
    std::vector<std::vector<SoftValue>> window(rec.trajectory.begin() + static_cast<std::ptrdiff_t>(n),
                                               rec.trajectory.begin() + static_cast<std::ptrdiff_t>(n + scheme.k()));
    rec.trajectory.push_back(qlmm_step(window, n, scheme, ivp, candidate, rec.ledger, workspace));
  }
  rec.decoded.reserve(rec.trajectory.size());
  for (const auto& y : rec.trajectory) {
    Vector x(y.size());
    for (std::size_t d = 0; d < y.size(); ++d) {
      x[d] = y[d].decode() - rec.effective_bias[d];
    }
    rec.decoded.push_back(std::move(x));
  }
  rec.modeled_depth = depth_estimate(scheme, model);
  return rec;
}

inline constexpr const char* kTrajectoryCsvHeader = "candidate,n,t,dim,mantissa,exponent_field,decoded_x";

inline void write_trajectory_csv(std::ostream& os, const RunRecord& rec, bool header = true) {
  if (header) {
    os << kTrajectoryCsvHeader << '\n';
  }
  char buf[64];
  for (std::size_t n = 0; n < rec.trajectory.size(); ++n) {
    for (std::size_t d = 0; d < rec.trajectory[n].size(); ++d) {
      const SoftValue& y = rec.trajectory[n][d];
      os << rec.candidate << ',' << n << ',';
      std::snprintf(buf, sizeof buf, "%.17g", rec.time(n));
      os << buf << ',' << d << ',' << y.mantissa() << ',' << y.exponent_field() << ',';
      std::snprintf(buf, sizeof buf, "%.17g", rec.decoded[n][d]);
      os << buf << '\n';
    }
  }
}

}  // namespace qlmm
