/**
 * @file lmm.hpp
 * @brief Reference numerics in double precision: Euler, RK4, explicit k-step linear
 *        multistep stepping, consistency order and root-condition stability tests.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "qlmm/errors.hpp"

namespace qlmm {

using Vector = std::vector<double>;
using Complex = std::complex<double>;

/// Coefficients of x_{n+k} + sum_i alpha_i x_{n+i} = h sum_j beta_j f_{n+j}, i, j < k.
class LmmCoefficients {
 public:
  LmmCoefficients(std::vector<double> alpha, std::vector<double> beta)
      : alpha_(std::move(alpha)), beta_(std::move(beta)) {
    if (alpha_.empty() || alpha_.size() != beta_.size()) {
      throw SchemeError("alpha and beta need the same length k >= 1");
    }
  }

  [[nodiscard]] std::size_t k() const noexcept { return alpha_.size(); }
  [[nodiscard]] std::span<const double> alpha() const noexcept { return alpha_; }
  [[nodiscard]] std::span<const double> beta() const noexcept { return beta_; }

  friend bool operator==(const LmmCoefficients&, const LmmCoefficients&) = default;

 private:
  std::vector<double> alpha_;
  std::vector<double> beta_;
};

/**
 * An initial value problem family indexed by candidate.
 *
 * `u`/`l` bound every derivative component over all candidates and the whole window,
 * `x0_max`/`x0_min` bound the initial states.
 */
struct IvpSpec {
  using Deriv = std::function<Vector(double t, std::span<const double> x, std::size_t candidate)>;
  using Initial = std::function<Vector(std::size_t candidate)>;

  std::size_t dimension = 0;
  Deriv deriv;
  Initial initial;
  std::size_t candidates = 1;
  double t0 = 0.0;
  double tf = 0.0;
  Vector u;
  Vector l;
  Vector x0_max;
  Vector x0_min;
  bool time_independent = false;

  void validate() const {
    if (dimension == 0) {
      throw Error("IVP dimension must be positive");
    }
    if (!deriv || !initial) {
      throw Error("IVP needs a derivative and an initial-state evaluator");
    }
    if (!(t0 < tf)) {
      throw Error("IVP needs t0 < tf");
    }
    if (candidates == 0) {
      throw Error("IVP needs at least one candidate");
    }
    for (const Vector* v : {&u, &l, &x0_max, &x0_min}) {
      if (v->size() != dimension) {
        throw Error("IVP bound vectors must have one entry per dimension");
      }
    }
    for (std::size_t d = 0; d < dimension; ++d) {
      if (l[d] > u[d] || x0_min[d] > x0_max[d]) {
        throw Error("IVP bounds are not ordered in dimension " + std::to_string(d));
      }
    }
  }
};

namespace detail {

inline Vector axpy(const Vector& x, double a, const Vector& y) {
  Vector out(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += a * y[i];
  }
  return out;
}

}  // namespace detail

[[nodiscard]] inline Vector euler_step(const Vector& x, double t, double h, const IvpSpec& ivp,
                                       std::size_t candidate) {
  return detail::axpy(x, h, ivp.deriv(t, x, candidate));
}

[[nodiscard]] inline Vector rk4_step(const Vector& x, double t, double h, const IvpSpec& ivp,
                                     std::size_t candidate) {
  const Vector k1 = ivp.deriv(t, x, candidate);
  const Vector k2 = ivp.deriv(t + h / 2, detail::axpy(x, h / 2, k1), candidate);
  const Vector k3 = ivp.deriv(t + h / 2, detail::axpy(x, h / 2, k2), candidate);
  const Vector k4 = ivp.deriv(t + h, detail::axpy(x, h, k3), candidate);
  Vector out(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return out;
}

/// x_{n+k} = -sum alpha_i x_{n+i} + h sum beta_j f_{n+j}
[[nodiscard]] inline Vector lmm_step(std::span<const Vector> history, std::span<const Vector> f_history,
                                     const LmmCoefficients& coeffs, double h) {
  const std::size_t k = coeffs.k();
  if (history.size() != k || f_history.size() != k) {
    throw Error("lmm_step needs exactly k history entries");
  }
  Vector out(history[0].size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t d = 0; d < out.size(); ++d) {
      out[d] += -coeffs.alpha()[i] * history[i][d] + h * coeffs.beta()[i] * f_history[i][d];
    }
  }
  return out;
}

/// Double-precision k-step run from an RK4 prefix; returns steps + k states.
[[nodiscard]] inline std::vector<Vector> integrate_lmm(const IvpSpec& ivp, std::size_t candidate,
                                                       const LmmCoefficients& coeffs, double h,
                                                       std::size_t steps) {
  const std::size_t k = coeffs.k();
  std::vector<Vector> xs;
  xs.reserve(steps + k);
  xs.push_back(ivp.initial(candidate));
  for (std::size_t i = 1; i < k; ++i) {
    xs.push_back(rk4_step(xs.back(), ivp.t0 + static_cast<double>(i - 1) * h, h, ivp, candidate));
  }
  std::vector<Vector> fs;
  fs.reserve(steps + k);
  for (std::size_t i = 0; i < k; ++i) {
    fs.push_back(ivp.deriv(ivp.t0 + static_cast<double>(i) * h, xs[i], candidate));
  }
  for (std::size_t n = 0; n < steps; ++n) {
    xs.push_back(lmm_step(std::span(xs).subspan(n, k), std::span(fs).subspan(n, k), coeffs, h));
    const std::size_t idx = n + k;
    fs.push_back(ivp.deriv(ivp.t0 + static_cast<double>(idx) * h, xs[idx], candidate));
  }
  return xs;
}

/// C_m = k^m + sum i^m alpha_i - m sum j^(m-1) beta_j  (C_0 = 1 + sum alpha_i), 0^0 = 1.
[[nodiscard]] inline double consistency_residual(const LmmCoefficients& coeffs, int m) {
  const std::size_t k = coeffs.k();
  if (m == 0) {
    double s = 1.0;
    for (double a : coeffs.alpha()) {
      s += a;
    }
    return s;
  }
  auto pow_int = [](double base, int e) { return e == 0 ? 1.0 : std::pow(base, e); };
  double s = std::pow(static_cast<double>(k), m);
  for (std::size_t i = 0; i < k; ++i) {
    s += pow_int(static_cast<double>(i), m) * coeffs.alpha()[i];
    s -= m * pow_int(static_cast<double>(i), m - 1) * coeffs.beta()[i];
  }
  return s;
}

/// Largest p with C_0..C_p all within tol; 0 when C_0 already fails.
[[nodiscard]] inline int consistency_order(const LmmCoefficients& coeffs, double tol = 1e-3) {
  if (std::abs(consistency_residual(coeffs, 0)) > tol) {
    return 0;
  }
  const int cap = 2 * static_cast<int>(coeffs.k()) + 2;
  int p = 0;
  while (p < cap && std::abs(consistency_residual(coeffs, p + 1)) <= tol) {
    ++p;
  }
  return p;
}

/// Principal error constant C_{p+1} / (p+1)!.
[[nodiscard]] inline double error_constant(const LmmCoefficients& coeffs, int p) {
  return consistency_residual(coeffs, p + 1) / std::tgamma(static_cast<double>(p) + 2.0);
}

/// Roots of r^k + c_{k-1} r^{k-1} + ... + c_0 from the companion matrix.
[[nodiscard]] inline std::vector<Complex> monic_roots(std::span<const Complex> lower_coeffs) {
  const auto k = static_cast<Eigen::Index>(lower_coeffs.size());
  if (k == 0) {
    return {};
  }
  if (k == 1) {
    return {-lower_coeffs[0]};
  }
  Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(k, k);
  for (Eigen::Index i = 1; i < k; ++i) {
    companion(i, i - 1) = 1.0;
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    companion(i, k - 1) = -lower_coeffs[static_cast<std::size_t>(i)];
  }
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(companion, false);
  if (solver.info() != Eigen::Success) {
    throw RootFindingError("companion eigensolve did not converge");
  }
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

/// Roots of rho(r) - h*lambda*sigma(r) with sigma(r) = sum_{j<k} beta_j r^j.
[[nodiscard]] inline std::vector<Complex> stability_roots(const LmmCoefficients& coeffs, Complex hlambda) {
  std::vector<Complex> c(coeffs.k());
  for (std::size_t i = 0; i < coeffs.k(); ++i) {
    c[i] = coeffs.alpha()[i] - hlambda * coeffs.beta()[i];
  }
  return monic_roots(c);
}

inline constexpr double kUnitCircleTol = 1e-9;
inline constexpr double kSimpleRootSeparation = 1e-6;

/// All |r| < 1 + tol, and at most one root on the unit circle, which must be simple.
[[nodiscard]] inline bool root_condition(std::span<const Complex> roots, double tol = kUnitCircleTol) {
  int on_circle = 0;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    const double mod = std::abs(roots[i]);
    if (mod >= 1.0 + tol) {
      return false;
    }
    if (mod > 1.0 - tol) {
      ++on_circle;
      for (std::size_t j = 0; j < roots.size(); ++j) {
        if (j != i && std::abs(roots[j] - roots[i]) < kSimpleRootSeparation) {
          return false;
        }
      }
    }
  }
  return on_circle <= 1;
}

[[nodiscard]] inline bool zero_stable(const LmmCoefficients& coeffs, double tol = kUnitCircleTol) {
  return root_condition(stability_roots(coeffs, 0.0), tol);
}

[[nodiscard]] inline bool absolutely_stable(const LmmCoefficients& coeffs, Complex hlambda,
                                            double tol = kUnitCircleTol) {
  if (hlambda.real() > 0.0) {
    throw Error("absolute stability is only defined for Re(h*lambda) <= 0");
  }
  return root_condition(stability_roots(coeffs, hlambda), tol);
}

/// Jury inequalities for a 2-step method at real h*lambda (strict interior of the unit disk).
[[nodiscard]] inline bool jury_stable(const LmmCoefficients& coeffs, double hlambda) {
  if (coeffs.k() != 2) {
    throw Error("the Jury test here is the 2-step form");
  }
  const double a0 = coeffs.alpha()[0] - hlambda * coeffs.beta()[0];
  const double a1 = coeffs.alpha()[1] - hlambda * coeffs.beta()[1];
  return a0 < 1.0 && 1.0 + a1 + a0 > 0.0 && 1.0 - a1 + a0 > 0.0;
}

/**
 * 1 - max modulus of the spurious roots at h*lambda.
 *
 * The principal root is the one closest to exp(h*lambda); it only has to satisfy the
 * root condition, so it is excluded from the margin.
 */
[[nodiscard]] inline double spurious_root_margin(const LmmCoefficients& coeffs, Complex hlambda) {
  const auto roots = stability_roots(coeffs, hlambda);
  if (roots.size() <= 1) {
    return 1.0;
  }
  const Complex target = std::exp(hlambda);
  std::size_t principal = 0;
  for (std::size_t i = 1; i < roots.size(); ++i) {
    if (std::abs(roots[i] - target) < std::abs(roots[principal] - target)) {
      principal = i;
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (i != principal) {
      worst = std::max(worst, std::abs(roots[i]));
    }
  }
  return 1.0 - worst;
}

}  // namespace qlmm
