/**
 * @file report.hpp
 * @brief Parallel candidate runs and error statistics against exact solutions.
 */
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qlmm/lmm.hpp"
#include "qlmm/scenario.hpp"
#include "qlmm/stepper.hpp"

namespace qlmm {

/// Minimum, quartiles and maximum with linear interpolation between order statistics.
struct FiveNumber {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"min", min}, {"q1", q1}, {"median", median}, {"q3", q3}, {"max", max}};
  }
};

[[nodiscard]] inline FiveNumber five_number(std::vector<double> xs) {
  if (xs.empty()) {
    return {};
  }
  std::sort(xs.begin(), xs.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
  };
  return {xs.front(), q(0.25), q(0.5), q(0.75), xs.back()};
}

/**
 * Run `body(i)` for i in [0, count) on up to `jobs` threads. The first exception in index
 * order is rethrown after all workers finish, so failures are deterministic.
 */
template <class Body>
void parallel_for(std::size_t count, unsigned jobs, Body&& body) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) {
    t.join();
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

/// One record per candidate, in candidate order.
[[nodiscard]] inline std::vector<RunRecord> run_all(const Scheme& scheme, const IvpSpec& ivp, const CostModel& model,
                                                    unsigned jobs) {
  std::vector<RunRecord> out(ivp.candidates);
  parallel_for(ivp.candidates, jobs, [&](std::size_t c) { out[c] = run(scheme, ivp, c, model); });
  return out;
}

/// Absolute errors against the exact solution, split by dimension.
struct ErrorSamples {
  std::vector<std::vector<double>> qlmm;
  std::vector<std::vector<double>> lmm;
  /// max over steps of |QLMM - exact-real LMM| per dimension, over all included candidates.
  Vector max_deviation;
};

/**
 * Compare each record with the exact solution and with the same scheme integrated in
 * double precision from the same starting prefix method.
 */
[[nodiscard]] inline ErrorSamples error_samples(const Scenario& sc, const Scheme& scheme,
                                                std::span<const RunRecord> records) {
  const std::size_t dim = sc.ivp.dimension;
  ErrorSamples s;
  s.qlmm.assign(dim, {});
  s.lmm.assign(dim, {});
  s.max_deviation.assign(dim, 0.0);
  for (const RunRecord& r : records) {
    const auto ref = integrate_lmm(sc.ivp, r.candidate, scheme.coeffs, scheme.h, scheme.steps);
    for (std::size_t n = 0; n < r.decoded.size(); ++n) {
      const Vector exact = sc.exact(r.time(n), r.candidate);
      for (std::size_t d = 0; d < dim; ++d) {
        s.qlmm[d].push_back(std::abs(r.decoded[n][d] - exact[d]));
        s.lmm[d].push_back(std::abs(ref[n][d] - exact[d]));
        s.max_deviation[d] = std::max(s.max_deviation[d], std::abs(r.decoded[n][d] - ref[n][d]));
      }
    }
  }
  return s;
}

[[nodiscard]] inline nlohmann::json error_stats_json(const ErrorSamples& s) {
  nlohmann::json j;
  for (std::size_t d = 0; d < s.qlmm.size(); ++d) {
    j["dimensions"].push_back({{"dim", d},
                               {"qlmm_vs_exact", five_number(s.qlmm[d]).to_json()},
                               {"lmm_vs_exact", five_number(s.lmm[d]).to_json()},
                               {"max_qlmm_vs_lmm", s.max_deviation[d]}});
  }
  return j;
}

}  // namespace qlmm
