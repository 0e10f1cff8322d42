#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "qlmm/config.hpp"
#include "qlmm/oracle.hpp"
#include "qlmm/report.hpp"

using namespace qlmm;

namespace {

const std::string kConfigs = QLMM_CONFIG_DIR;

detail::Ptree ini(const std::string& text) {
  std::istringstream in(text);
  detail::Ptree tree;
  boost::property_tree::ini_parser::read_ini(in, tree);
  return tree;
}

/// Key named by the ConfigError raised while parsing `text`, or "" when it parses.
std::string failing_key(const std::string& text) {
  try {
    (void)parse_config(ini(text));
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

const std::string kSpring = "[scenario]\nkind = spring_mass\ntf = 1.4\n[sweep]\nmin = 3\nmax = 33\ncount = 16\n";

}  // namespace

TEST(Config, SpringFileMatchesScenario) {
  const ScenarioConfig c = load_config(kConfigs + "/spring_mass.conf");
  EXPECT_EQ(c.kind, ScenarioKind::spring_mass);
  EXPECT_EQ(c.tf, 1.4);
  EXPECT_EQ(c.epsilon, 3.8);
  EXPECT_EQ(c.k_range, (std::vector<std::size_t>{2, 3}));
  const auto values = c.sweep.values();
  ASSERT_EQ(values.size(), 16u);
  EXPECT_EQ(values.front(), 3.0);
  EXPECT_EQ(values[5], 13.0);
  EXPECT_EQ(values.back(), 33.0);
  EXPECT_EQ(c.predicate.mode, OracleMode::final_time);
  EXPECT_FALSE(c.predicate.maximize);
  EXPECT_EQ(c.tradeoff_caps.size(), 5u);
}

TEST(Config, BallisticFileMatchesScenario) {
  const ScenarioConfig c = load_config(kConfigs + "/ballistic.conf");
  EXPECT_EQ(c.kind, ScenarioKind::ballistic);
  EXPECT_EQ(c.tf, 7.5);
  EXPECT_EQ(c.h_cap, 0.05);
  const auto values = c.sweep.values();
  ASSERT_EQ(values.size(), 16u);
  EXPECT_EQ(values[7], 45.0);
  EXPECT_EQ(c.predicate.mode, OracleMode::all_steps);
  EXPECT_EQ(c.predicate.value_dim, 0u);
  EXPECT_EQ(c.predicate.sign_dim, 1u);
  EXPECT_TRUE(c.predicate.maximize);
  EXPECT_EQ(build_scenario(c).ivp.dimension, 3u);
}

TEST(Config, UnknownKeysAndSectionsAreNamed) {
  EXPECT_EQ(failing_key(kSpring + "[optimizer]\nepsilom = 1\n"), "optimizer.epsilom");
  EXPECT_EQ(failing_key(kSpring + "[optimiser]\nepsilon = 1\n"), "optimiser");
  EXPECT_EQ(failing_key("[scenario]\nkind = pendulum\n"), "scenario.kind");
}

TEST(Config, MalformedValuesAreNamed) {
  EXPECT_EQ(failing_key(kSpring + "[optimizer]\nepsilon = 1.5x\n"), "optimizer.epsilon");
  EXPECT_EQ(failing_key(kSpring + "[box]\nmantissa = 4:x\n"), "box.mantissa");
  EXPECT_EQ(failing_key(kSpring + "[box]\nmantissa = 1:8\n"), "box.mantissa");
  EXPECT_EQ(failing_key(kSpring + "[search]\nmaximize = maybe\n"), "search.maximize");
  EXPECT_EQ(failing_key(kSpring + "[search]\nmode = sometimes\n"), "search.mode");
  EXPECT_EQ(failing_key(kSpring + "[tradeoff]\ncaps = 100, 12.5\n"), "tradeoff.caps");
  EXPECT_EQ(failing_key(kSpring + "[optimizer]\nnode_limit = -3\n"), "optimizer.node_limit");
  EXPECT_EQ(failing_key(kSpring), "");
}

TEST(Config, MissingEpsilonIsRejectedWhenBuildingAProblem) {
  const ScenarioConfig c = parse_config(ini(kSpring));
  const Scenario sc = build_scenario(c);
  try {
    (void)build_problem(c, sc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "optimizer.epsilon");
  }
}

TEST(Config, SearchDimensionsAreChecked) {
  const ScenarioConfig c = parse_config(ini(kSpring + "[search]\nsign_dim = 2\n"));
  try {
    (void)build_scenario(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "search.sign_dim");
  }
}

TEST(Config, RangesListsAndMatrices) {
  const IntRange r = detail::parse_range("k", "3:9");
  EXPECT_EQ(r.lo, 3);
  EXPECT_EQ(r.hi, 9);
  const IntRange one = detail::parse_range("k", "5");
  EXPECT_EQ(one.lo, 5);
  EXPECT_EQ(one.hi, 5);
  EXPECT_EQ(detail::parse_list("k", "1, 2.5,-3"), (std::vector<double>{1.0, 2.5, -3.0}));
  const Eigen::MatrixXd m = detail::parse_matrix("k", "0, 1; -4, -0.5");
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 2);
  EXPECT_EQ(m(1, 0), -4.0);
  EXPECT_THROW((void)detail::parse_matrix("k", "1, 2; 3"), ConfigError);
}

TEST(Config, LinearScenarioFromMatrices) {
  const ScenarioConfig c = parse_config(
      ini("[scenario]\nkind = linear\ntf = 2\nj0 = 0, 1; -4, -0.5\nj1 = 0, 0; 0, -1\nb0 = 0, 1\nb1 = 0.1, 0\n"
          "x0 = 1, 0\nx0_slope = 0, 0.2\n[sweep]\nvalues = 0, 1, 2\n"));
  const Scenario sc = build_scenario(c);
  EXPECT_EQ(sc.candidates(), 3u);
  EXPECT_EQ(sc.ivp.dimension, 2u);
  EXPECT_EQ(sc.exact(0.0, 2)[1], 0.4);
}

TEST(Scheme, WriteThenLoadRoundTrips) {
  const Scheme a = load_scheme(kConfigs + "/spring_mass_reference.scheme");
  const auto path = std::filesystem::temp_directory_path() / "qlmm_round_trip.scheme";
  {
    std::ofstream out(path);
    write_scheme(out, a);
  }
  const Scheme b = load_scheme(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(b.k(), a.k());
  EXPECT_EQ(b.a0, a.a0);
  EXPECT_EQ(b.h, a.h);
  EXPECT_EQ(b.steps, a.steps);
  ASSERT_EQ(b.dimension(), a.dimension());
  for (std::size_t i = 0; i < a.k(); ++i) {
    EXPECT_EQ(b.coeffs.alpha()[i], a.coeffs.alpha()[i]);
    EXPECT_EQ(b.coeffs.beta()[i], a.coeffs.beta()[i]);
  }
  for (std::size_t d = 0; d < a.dimension(); ++d) {
    EXPECT_EQ(b.formats[d].mantissa_bits(), a.formats[d].mantissa_bits());
    EXPECT_EQ(b.formats[d].exponent_bits(), a.formats[d].exponent_bits());
    EXPECT_EQ(b.formats[d].exponent_offset(), a.formats[d].exponent_offset());
    EXPECT_EQ(b.formats[d].margin_bits(), a.formats[d].margin_bits());
    EXPECT_EQ(b.bias[d], a.bias[d]);
  }
}

TEST(Scheme, ReferenceFilesMatchTheirScenarios) {
  for (const auto& [conf, scheme, qubits] : {std::tuple{"spring_mass.conf", "spring_mass_reference.scheme", 1191u},
                                             std::tuple{"ballistic.conf", "ballistic_reference.scheme", 2044u}}) {
    const ScenarioConfig c = load_config(kConfigs + "/" + conf);
    const Scenario sc = build_scenario(c);
    const Scheme s = load_scheme(kConfigs + "/" + scheme);
    const FeasibilityReport r = check_feasible(s, build_problem(c, sc));
    EXPECT_TRUE(r.feasible()) << scheme;
    EXPECT_EQ(resource_estimate(s, c.cost_model), qubits);
  }
}

TEST(Scheme, InvalidSchemeFilesAreConfigErrors) {
  const auto path = std::filesystem::temp_directory_path() / "qlmm_bad.scheme";
  auto key_of = [&](const std::string& text) -> std::string {
    std::ofstream(path) << text;
    try {
      (void)load_scheme(path.string());
    } catch (const ConfigError& e) {
      return e.key();
    }
    return "";
  };
  const std::string head = "[scheme]\nk = 2\na0 = 1\nalpha = -0.5, -0.5\nbeta = 0, 1.5\nh = 0.1\nsteps = 4\n";
  const std::string dim = "[dim0]\nmantissa = 8\nexponent = 3\nmargin = 1\noffset = -4\nbias = 2\n";
  EXPECT_EQ(key_of(head + dim), "");
  EXPECT_EQ(key_of(head), "dim0");
  EXPECT_EQ(key_of("[scheme]\nk = 3\na0 = 1\nalpha = -0.5, -0.5\nbeta = 0, 1.5\nh = 0.1\nsteps = 4\n" + dim),
            "scheme.alpha");
  EXPECT_EQ(key_of(head + "[dim0]\nmantissa = 8\nexponent = 3\nmargin = 1\noffset = -4\n"), "dim0.bias");
  EXPECT_EQ(key_of(head + dim + "[dim1]\nmantisa = 3\n"), "dim1.mantisa");
  EXPECT_EQ(key_of("[scheme]\nk = 2\na0 = 1\nalpha = -0.4, -0.5\nbeta = 0, 1.5\nh = 0.1\nsteps = 4\n" + dim),
            "scheme");
  std::filesystem::remove(path);
  EXPECT_THROW((void)load_scheme("/nonexistent/x.scheme"), ConfigError);
}
