/**
 * @file oracle.hpp
 * @brief Classical emulation of the search oracles and of threshold-iteration minimum
 *        finding, with Grover call-count estimates.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "qlmm/errors.hpp"
#include "qlmm/stepper.hpp"

namespace qlmm {

enum class OracleMode { final_time, all_steps };

/**
 * final_time: a candidate qualifies when y_{n,sign_dim} >= v for every n, and its value
 * is x_{N,value_dim}.
 *
 * all_steps: a pair (c, n) qualifies when y_{n,sign_dim} > v and y_{n+1,sign_dim} < v
 * (a downward crossing), and its value is x_{n,value_dim}.
 *
 * `maximize` flips the threshold comparison; values themselves are never negated.
 */
struct OraclePredicate {
  OracleMode mode = OracleMode::final_time;
  std::size_t value_dim = 0;
  std::size_t sign_dim = 0;
  bool maximize = false;
};

/// A point of the search domain: a candidate, and for all_steps also a step.
struct SearchItem {
  std::size_t candidate = 0;
  std::size_t step = 0;
  double value = 0.0;

  friend bool operator==(const SearchItem&, const SearchItem&) = default;
};

struct SearchResult {
  std::size_t winner = 0;
  std::size_t winner_step = 0;
  double winner_value = 0.0;
  std::size_t iterations = 0;
  double oracle_calls_estimate = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"winner", winner},
            {"winner_step", winner_step},
            {"winner_value", winner_value},
            {"iterations", iterations},
            {"oracle_calls_estimate", oracle_calls_estimate},
            {"seed", seed}};
  }
};

namespace detail {

/// decode(y) - v on register values; both are dyadic in one format so the difference is exact.
inline double unbiased(const RunRecord& r, std::size_t n, std::size_t d) {
  return r.trajectory[n][d].decode() - r.effective_bias[d];
}

inline bool beats(double value, double threshold, bool maximize) {
  return maximize ? value > threshold : value < threshold;
}

}  // namespace detail

/// Candidates that qualify in final-time mode, regardless of any threshold.
[[nodiscard]] inline std::vector<SearchItem> final_time_items(std::span<const RunRecord> records,
                                                              const OraclePredicate& pred) {
  std::vector<SearchItem> out;
  for (const RunRecord& r : records) {
    bool ok = !r.trajectory.empty();
    for (std::size_t n = 0; n < r.trajectory.size() && ok; ++n) {
      ok = r.trajectory[n][pred.sign_dim].decode() >= r.effective_bias[pred.sign_dim];
    }
    if (ok) {
      const std::size_t last = r.trajectory.size() - 1;
      out.push_back({r.candidate, last, detail::unbiased(r, last, pred.value_dim)});
    }
  }
  return out;
}

/// Downward crossings of the sign dimension, one item per (candidate, step).
[[nodiscard]] inline std::vector<SearchItem> all_steps_items(std::span<const RunRecord> records,
                                                             const OraclePredicate& pred) {
  std::vector<SearchItem> out;
  for (const RunRecord& r : records) {
    const double v = r.effective_bias[pred.sign_dim];
    for (std::size_t n = 0; n + 1 < r.trajectory.size(); ++n) {
      if (r.trajectory[n][pred.sign_dim].decode() > v && r.trajectory[n + 1][pred.sign_dim].decode() < v) {
        out.push_back({r.candidate, n, detail::unbiased(r, n, pred.value_dim)});
      }
    }
  }
  return out;
}

/// Candidates marked at `threshold`: y_{N,0} < v_0 + T (or > when maximizing) and never below v.
[[nodiscard]] inline std::vector<std::size_t> eval_final_time_oracle(std::span<const RunRecord> records,
                                                                     double threshold,
                                                                     const OraclePredicate& pred = {}) {
  std::vector<std::size_t> out;
  for (const SearchItem& it : final_time_items(records, pred)) {
    if (detail::beats(it.value, threshold, pred.maximize)) {
      out.push_back(it.candidate);
    }
  }
  return out;
}

/// (candidate, step) pairs at a downward crossing whose value beats `threshold`.
[[nodiscard]] inline std::vector<std::pair<std::size_t, std::size_t>> eval_all_steps_oracle(
    std::span<const RunRecord> records, double threshold, const OraclePredicate& pred, const IvpSpec& ivp) {
  if (!ivp.time_independent) {
    throw Error("the all-steps oracle needs a time-independent derivative");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const SearchItem& it : all_steps_items(records, pred)) {
    if (detail::beats(it.value, threshold, pred.maximize)) {
      out.emplace_back(it.candidate, it.step);
    }
  }
  return out;
}

/**
 * Threshold-iteration minimum finding over a domain of `domain_size` points of which
 * `items` qualify. Amplitude amplification is replaced by a uniform draw from the
 * marked set; each round adds sqrt(C / t) calls for t marked points and the final
 * empty round adds sqrt(C).
 */
[[nodiscard]] inline SearchResult threshold_search(std::span<const SearchItem> items, std::size_t domain_size,
                                                   bool maximize, std::uint64_t seed) {
  if (items.empty()) {
    throw NoFeasibleCandidateError("no candidate satisfies the oracle's feasibility conditions");
  }
  if (domain_size < items.size()) {
    domain_size = items.size();
  }
  std::mt19937_64 rng(seed);
  const double c = static_cast<double>(domain_size);

  SearchResult res;
  res.seed = seed;
  std::optional<std::size_t> current;
  {
    // The first threshold comes from a uniformly random point of the whole domain.
    std::uniform_int_distribution<std::size_t> pick(0, domain_size - 1);
    const std::size_t i = pick(rng);
    if (i < items.size()) {
      current = i;
    }
  }
  const double worst = maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  while (true) {
    const double threshold = current ? items[*current].value : worst;
    std::vector<std::size_t> marked;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (detail::beats(items[i].value, threshold, maximize)) {
        marked.push_back(i);
      }
    }
    if (marked.empty()) {
      res.oracle_calls_estimate += std::sqrt(c);
      break;
    }
    res.oracle_calls_estimate += std::sqrt(c / static_cast<double>(marked.size()));
    std::uniform_int_distribution<std::size_t> pick(0, marked.size() - 1);
    current = marked[pick(rng)];
    ++res.iterations;
  }
  res.winner = items[*current].candidate;
  res.winner_step = items[*current].step;
  res.winner_value = items[*current].value;
  return res;
}

/// Minimum (or maximum) finding over the runs under `pred`.
[[nodiscard]] inline SearchResult durr_hoyer(std::span<const RunRecord> records, const OraclePredicate& pred,
                                             std::uint64_t seed) {
  if (pred.mode == OracleMode::final_time) {
    const auto items = final_time_items(records, pred);
    return threshold_search(items, records.size(), pred.maximize, seed);
  }
  std::size_t domain = 0;
  for (const RunRecord& r : records) {
    domain += r.trajectory.empty() ? 0 : r.trajectory.size() - 1;
  }
  const auto items = all_steps_items(records, pred);
  return threshold_search(items, domain, pred.maximize, seed);
}

}  // namespace qlmm
