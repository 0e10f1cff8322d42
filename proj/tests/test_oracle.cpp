#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qlmm/oracle.hpp"
#include "qlmm/report.hpp"
#include "qlmm/scenario.hpp"

using namespace qlmm;

namespace {

/// A one-dimensional record whose decoded values are `xs` around a bias of 8.
RunRecord record(std::size_t candidate, const std::vector<double>& xs) {
  const FloatFormat f(20, 4, -4, 1);
  RunRecord r;
  r.candidate = candidate;
  r.h = 0.1;
  r.effective_bias = {8.0};
  for (double x : xs) {
    r.trajectory.push_back({encode(x + 8.0, f)});
    r.decoded.push_back({r.trajectory.back()[0].decode() - 8.0});
  }
  return r;
}

std::vector<double> odd_range(int lo, int hi) {
  std::vector<double> out;
  for (int v = lo; v <= hi; v += 2) out.push_back(v);
  return out;
}

}  // namespace

TEST(ThresholdSearch, FindsArgminForEverySeed) {
  std::mt19937_64 values(99);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<SearchItem> items;
    for (std::size_t c = 0; c < 16; ++c) items.push_back({c, 0, u(values)});
    const auto brute = std::min_element(items.begin(), items.end(),
                                        [](const SearchItem& a, const SearchItem& b) { return a.value < b.value; });
    const SearchResult r = threshold_search(items, items.size(), false, seed);
    EXPECT_EQ(r.winner, brute->candidate) << "seed " << seed;
    EXPECT_EQ(r.winner_value, brute->value);
    EXPECT_GE(r.oracle_calls_estimate, 4.0);
  }
}

TEST(ThresholdSearch, FindsArgmaxWhenMaximizing) {
  std::mt19937_64 values(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<SearchItem> items;
    for (std::size_t c = 0; c < 16; ++c) items.push_back({c, c * 3, u(values)});
    const auto brute = std::max_element(items.begin(), items.end(),
                                        [](const SearchItem& a, const SearchItem& b) { return a.value < b.value; });
    const SearchResult r = threshold_search(items, 64, true, seed);
    EXPECT_EQ(r.winner, brute->candidate);
    EXPECT_EQ(r.winner_step, brute->step);
  }
}

TEST(ThresholdSearch, CallEstimateAccumulatesRounds) {
  // A single marked item: the first draw may miss (adds sqrt(C)); the empty round adds sqrt(C).
  const std::vector<SearchItem> one{{0, 0, 1.0}};
  const SearchResult r = threshold_search(one, 16, false, 3);
  EXPECT_EQ(r.winner, 0u);
  EXPECT_LE(r.iterations, 1u);
  EXPECT_DOUBLE_EQ(r.oracle_calls_estimate, 4.0 * (1 + r.iterations));
}

TEST(ThresholdSearch, DeterministicPerSeed) {
  std::vector<SearchItem> items;
  for (std::size_t c = 0; c < 16; ++c) items.push_back({c, 0, std::sin(static_cast<double>(c))});
  const SearchResult a = threshold_search(items, 16, false, 42);
  const SearchResult b = threshold_search(items, 16, false, 42);
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(ThresholdSearch, EmptyDomainHasNoCandidate) {
  EXPECT_THROW((void)threshold_search({}, 16, false, 1), NoFeasibleCandidateError);
}

TEST(FinalTimeOracle, RequiresNonNegativeSignDimension) {
  std::vector<RunRecord> rs{record(0, {0.0, 0.5, -0.1, 0.05}),  // dips below the bias
                            record(1, {0.0, 0.7, 0.3, 0.2}),
                            record(2, {0.0, 0.4, 0.2, 0.1})};
  const auto items = final_time_items(rs, {});
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].candidate, 1u);
  EXPECT_EQ(items[1].candidate, 2u);
  EXPECT_EQ(eval_final_time_oracle(rs, 0.15), std::vector<std::size_t>{2});
  EXPECT_EQ(eval_final_time_oracle(rs, 0.5).size(), 2u);
  EXPECT_EQ(durr_hoyer(rs, {}, 7).winner, 2u);
}

TEST(AllStepsOracle, MarksDownwardCrossings) {
  // Two dimensions are needed for value/sign splits; reuse one dimension as both here.
  std::vector<RunRecord> rs{record(0, {0.0, 1.0, 2.0, 0.5, -0.5, -1.0}),  // crossing at n = 3
                            record(1, {0.0, 3.0, -1.0})};                 // crossing at n = 1
  const OraclePredicate pred{OracleMode::all_steps, 0, 0, true};
  const auto items = all_steps_items(rs, pred);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].candidate, 0u);
  EXPECT_EQ(items[0].step, 3u);
  EXPECT_EQ(items[1].candidate, 1u);
  EXPECT_EQ(items[1].step, 1u);
  IvpSpec ivp;
  ivp.time_independent = true;
  const auto marked = eval_all_steps_oracle(rs, 1.0, pred, ivp);
  ASSERT_EQ(marked.size(), 1u);
  EXPECT_EQ(marked[0], (std::pair<std::size_t, std::size_t>{1, 1}));
  ivp.time_independent = false;
  EXPECT_THROW((void)eval_all_steps_oracle(rs, 1.0, pred, ivp), Error);
  EXPECT_EQ(durr_hoyer(rs, pred, 1).winner, 1u);
}

TEST(AllStepsOracle, NoCrossingMeansNoCandidate) {
  std::vector<RunRecord> rs{record(0, {0.0, 1.0, 2.0})};
  EXPECT_THROW((void)durr_hoyer(rs, {OracleMode::all_steps, 0, 0, true}, 1), NoFeasibleCandidateError);
}

TEST(EndToEnd, SingleCandidateSweepWinsTrivially) {
  const Scenario sc = make_spring_mass(1.0, 40.0, {21.0}, {0.0, 1.4, 401, 0.01, 8});
  const Scheme s{LmmCoefficients({-0.5, -0.7427, 0.2427}, {0.0, 0.8714, 1.8714}),
                 1,
                 0.01243,
                 112,
                 0.0,
                 {FloatFormat(25, 3, -4, 1), FloatFormat(27, 4, -9, 1)},
                 {10.0, 69.7}};
  const auto records = run_all(s, sc.ivp, {}, 2);
  EXPECT_EQ(durr_hoyer(records, {}, 11).winner, 0u);
}

TEST(EndToEnd, ParallelRunsMatchSerialRuns) {
  const Scenario sc = make_ballistic(40.0, 9.8, odd_range(31, 61), {0.0, 7.5, 401, 0.01, 8});
  const Scheme s{LmmCoefficients({-0.5, -0.5}, {0.0, 1.5}),
                 1,
                 0.05,
                 150,
                 0.0,
                 {FloatFormat(16, 4, -7, 1), FloatFormat(18, 5, -22, 1), FloatFormat(14, 4, -9, 1)},
                 {16.0, 663.0, 56.2}};
  const auto par = run_all(s, sc.ivp, {}, 4);
  const auto ser = run_all(s, sc.ivp, {}, 1);
  ASSERT_EQ(par.size(), 16u);
  for (std::size_t c = 0; c < par.size(); ++c) EXPECT_EQ(par[c].trajectory, ser[c].trajectory);
}

TEST(Report, FiveNumberSummary) {
  const FiveNumber f = five_number({5.0, 1.0, 3.0, 2.0, 4.0});
  EXPECT_EQ(f.min, 1.0);
  EXPECT_EQ(f.q1, 2.0);
  EXPECT_EQ(f.median, 3.0);
  EXPECT_EQ(f.q3, 4.0);
  EXPECT_EQ(f.max, 5.0);
  EXPECT_DOUBLE_EQ(five_number({1.0, 2.0}).median, 1.5);
}
