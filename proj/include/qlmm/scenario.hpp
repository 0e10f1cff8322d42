/**
 * @file scenario.hpp
 * @brief Candidate families of affine systems x' = J x + b with exact solutions and
 *        sampled derivative bounds.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qlmm/lmm.hpp"

namespace qlmm {

struct AffineSystem {
  Eigen::MatrixXd jacobian;
  Eigen::VectorXd offset;
  Eigen::VectorXd initial;
};

enum class ScenarioKind { spring_mass, ballistic, linear };

/**
 * A candidate-indexed IVP family with everything the optimizer and the oracles need:
 * the IvpSpec with sampled bounds, exact solutions, bounds on higher solution
 * derivatives and each candidate's Jacobian spectrum.
 */
struct Scenario {
  ScenarioKind kind = ScenarioKind::linear;
  std::string parameter_name;
  std::vector<double> parameter_values;
  std::vector<AffineSystem> systems;
  IvpSpec ivp;
  /// deriv_bound[m][d] bounds |x_d^(m)| over all candidates and the window.
  std::vector<Vector> deriv_bound;
  std::vector<std::vector<Complex>> spectrum;
  /// Closed-form optimum of the parameter where one is known (NaN otherwise).
  double analytic_optimum = std::numeric_limits<double>::quiet_NaN();

  [[nodiscard]] std::size_t candidates() const noexcept { return systems.size(); }

  /// Exact state at time t.
  [[nodiscard]] Vector exact(double t, std::size_t candidate) const;
};

namespace detail {

inline Vector to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// exp of the augmented generator [[J, b], [0, 0]] gives the affine flow in one matrix.
inline Vector affine_flow(const AffineSystem& s, double t) {
  const Eigen::Index n = s.jacobian.rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n + 1, n + 1);
  g.topLeftCorner(n, n) = s.jacobian * t;
  g.topRightCorner(n, 1) = s.offset * t;
  const Eigen::MatrixXd e = g.exp();
  Eigen::VectorXd x0(n + 1);
  x0.head(n) = s.initial;
  x0(n) = 1.0;
  return to_vector((e * x0).head(n));
}

/// Damped oscillator x'' + 2 sigma x' + w0^2 x = 0 in closed form; returns [x, x'].
inline Vector damped_oscillator(double x0, double v0, double sigma, double w0sq, double t) {
  const double disc = sigma * sigma - w0sq;
  if (std::abs(disc) <= 1e-12 * w0sq) {
    const double c = v0 + sigma * x0;
    const double e = std::exp(-sigma * t);
    return {(x0 + c * t) * e, (c - sigma * (x0 + c * t)) * e};
  }
  if (disc < 0) {
    const double wd = std::sqrt(-disc);
    const double c = (v0 + sigma * x0) / wd;
    const double e = std::exp(-sigma * t);
    const double co = std::cos(wd * t);
    const double si = std::sin(wd * t);
    const double x = e * (x0 * co + c * si);
    const double v = e * ((-sigma * x0 + c * wd) * co + (-sigma * c - x0 * wd) * si);
    return {x, v};
  }
  const double r = std::sqrt(disc);
  const double r1 = -sigma + r;
  const double r2 = -sigma - r;
  const double b = (v0 - r1 * x0) / (r2 - r1);
  const double a = x0 - b;
  return {a * std::exp(r1 * t) + b * std::exp(r2 * t), a * r1 * std::exp(r1 * t) + b * r2 * std::exp(r2 * t)};
}

}  // namespace detail

inline Vector Scenario::exact(double t, std::size_t candidate) const {
  const AffineSystem& s = systems.at(candidate);
  const double dt = t - ivp.t0;
  switch (kind) {
    case ScenarioKind::spring_mass: {
      const double w0sq = -s.jacobian(1, 0);
      const double sigma = -s.jacobian(1, 1) / 2;
      return detail::damped_oscillator(s.initial(0), s.initial(1), sigma, w0sq, dt);
    }
    case ScenarioKind::ballistic: {
      const double vx = s.offset(0);
      const double g = -s.offset(2);
      const double vy = s.initial(2);
      return {s.initial(0) + vx * dt, s.initial(1) + vy * dt - g * dt * dt / 2, vy - g * dt};
    }
    case ScenarioKind::linear:
      break;
  }
  return detail::affine_flow(s, dt);
}

struct ScenarioOptions {
  double t0 = 0.0;
  double tf = 1.0;
  /// Sample points per candidate for the bounds.
  std::size_t samples = 4001;
  /// Relative widening of sampled bounds.
  double pad = 0.01;
  /// Highest derivative order bounded.
  int max_order = 8;
};

/**
 * Fill the IvpSpec and the bounds of a scenario whose systems are already set.
 *
 * For an affine flow x^(m) = J^(m-1) (J x + b), so every bound is a maximum over the
 * exact solution on a dense grid, widened by `pad`.
 */
inline void finalize_scenario(Scenario& sc, const ScenarioOptions& opt) {
  if (sc.systems.empty()) {
    throw Error("scenario has no candidates");
  }
  const auto dim = static_cast<std::size_t>(sc.systems.front().jacobian.rows());
  for (const auto& s : sc.systems) {
    if (static_cast<std::size_t>(s.jacobian.rows()) != dim || static_cast<std::size_t>(s.jacobian.cols()) != dim ||
        static_cast<std::size_t>(s.offset.size()) != dim || static_cast<std::size_t>(s.initial.size()) != dim) {
      throw Error("every candidate system must share one dimension");
    }
  }

  IvpSpec& ivp = sc.ivp;
  ivp.dimension = dim;
  ivp.candidates = sc.systems.size();
  ivp.t0 = opt.t0;
  ivp.tf = opt.tf;
  ivp.time_independent = true;
  // The evaluators own a copy so the scenario stays movable.
  const auto systems = std::make_shared<const std::vector<AffineSystem>>(sc.systems);
  ivp.deriv = [systems](double, std::span<const double> x, std::size_t c) {
    const AffineSystem& s = (*systems)[c];
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    return detail::to_vector(s.jacobian * xv + s.offset);
  };
  ivp.initial = [systems](std::size_t c) { return detail::to_vector((*systems)[c].initial); };

  const double inf = std::numeric_limits<double>::infinity();
  Vector umax(dim, -inf), lmin(dim, inf), x0max(dim, -inf), x0min(dim, inf);
  sc.deriv_bound.assign(static_cast<std::size_t>(opt.max_order) + 1, Vector(dim, 0.0));
  sc.spectrum.clear();

  const std::size_t samples = std::max<std::size_t>(opt.samples, 2);
  for (std::size_t c = 0; c < sc.systems.size(); ++c) {
    const AffineSystem& s = sc.systems[c];
    for (std::size_t d = 0; d < dim; ++d) {
      x0max[d] = std::max(x0max[d], s.initial(static_cast<Eigen::Index>(d)));
      x0min[d] = std::min(x0min[d], s.initial(static_cast<Eigen::Index>(d)));
    }
    for (std::size_t i = 0; i < samples; ++i) {
      const double t = opt.t0 + (opt.tf - opt.t0) * static_cast<double>(i) / static_cast<double>(samples - 1);
      const Vector xs = sc.exact(t, c);
      Eigen::VectorXd deriv = s.jacobian * Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(dim)) +
                              s.offset;
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = deriv(static_cast<Eigen::Index>(d));
        umax[d] = std::max(umax[d], v);
        lmin[d] = std::min(lmin[d], v);
        sc.deriv_bound[0][d] = std::max(sc.deriv_bound[0][d], std::abs(xs[d]));
      }
      for (int m = 1; m <= opt.max_order; ++m) {
        for (std::size_t d = 0; d < dim; ++d) {
          auto& b = sc.deriv_bound[static_cast<std::size_t>(m)][d];
          b = std::max(b, std::abs(deriv(static_cast<Eigen::Index>(d))));
        }
        deriv = s.jacobian * deriv;
      }
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(s.jacobian.cast<Complex>(), false);
    if (es.info() != Eigen::Success) {
      throw RootFindingError("Jacobian eigensolve did not converge");
    }
    sc.spectrum.emplace_back(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  }

  for (std::size_t d = 0; d < dim; ++d) {
    const double width = std::max(umax[d] - lmin[d], std::max(std::abs(umax[d]), std::abs(lmin[d])));
    umax[d] += opt.pad * width;
    lmin[d] -= opt.pad * width;
    for (auto& order : sc.deriv_bound) {
      order[d] *= 1.0 + opt.pad;
    }
  }
  ivp.u = umax;
  ivp.l = lmin;
  ivp.x0_max = x0max;
  ivp.x0_min = x0min;
  ivp.validate();
}

/// Mass-spring-damper x'' = -(k/m) x - (c/m) x' from x = 0, x' = 1, one candidate per damping value.
[[nodiscard]] inline Scenario make_spring_mass(double mass, double stiffness, const std::vector<double>& damping,
                                               const ScenarioOptions& opt) {
  Scenario sc;
  sc.kind = ScenarioKind::spring_mass;
  sc.parameter_name = "damping";
  sc.parameter_values = damping;
  for (double c : damping) {
    AffineSystem s;
    s.jacobian.resize(2, 2);
    s.jacobian << 0.0, 1.0, -stiffness / mass, -c / mass;
    s.offset = Eigen::VectorXd::Zero(2);
    s.initial = Eigen::Vector2d(0.0, 1.0);
    sc.systems.push_back(std::move(s));
  }
  sc.analytic_optimum = 2.0 * std::sqrt(mass * stiffness);
  finalize_scenario(sc, opt);
  return sc;
}

/// Projectile [horizontal, height, vertical speed] launched at `speed` and each angle in degrees.
[[nodiscard]] inline Scenario make_ballistic(double speed, double gravity, const std::vector<double>& angles_deg,
                                             const ScenarioOptions& opt) {
  Scenario sc;
  sc.kind = ScenarioKind::ballistic;
  sc.parameter_name = "angle";
  sc.parameter_values = angles_deg;
  for (double deg : angles_deg) {
    const double th = deg * std::numbers::pi / 180.0;
    AffineSystem s;
    s.jacobian = Eigen::MatrixXd::Zero(3, 3);
    s.jacobian(1, 2) = 1.0;
    s.offset = Eigen::Vector3d(speed * std::cos(th), 0.0, -gravity);
    s.initial = Eigen::Vector3d(0.0, 0.0, speed * std::sin(th));
    sc.systems.push_back(std::move(s));
  }
  sc.analytic_optimum = 45.0;
  finalize_scenario(sc, opt);
  return sc;
}

/// J = J0 + p J1, b = b0 + p b1, x0 = x00 + p x01 for every sweep value p.
[[nodiscard]] inline Scenario make_linear(const Eigen::MatrixXd& j0, const Eigen::MatrixXd& j1,
                                          const Eigen::VectorXd& b0, const Eigen::VectorXd& b1,
                                          const Eigen::VectorXd& x00, const Eigen::VectorXd& x01,
                                          const std::vector<double>& params, const ScenarioOptions& opt) {
  Scenario sc;
  sc.kind = ScenarioKind::linear;
  sc.parameter_name = "p";
  sc.parameter_values = params;
  for (double p : params) {
    sc.systems.push_back({j0 + p * j1, b0 + p * b1, x00 + p * x01});
  }
  finalize_scenario(sc, opt);
  return sc;
}

}  // namespace qlmm
