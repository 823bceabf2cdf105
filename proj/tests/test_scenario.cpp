#include <gtest/gtest.h>

#include "qpp/scenario.hpp"
#include "support.hpp"

using namespace qpp;

namespace {

const char* kBase =
    "channel.kind=dephasing\n"
    "channel.gamma=1\n"
    "property.kind=coherence\n"
    "initial.bloch=0.5,0.5,0.5\n";

// Message of the ConfigError raised by text, or "" if it parses.
std::string error_of(const std::string& text) {
  try {
    parse_scenario(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Scenario, DefaultsAndComments) {
  Scenario s = parse_scenario(std::string("# comment line\n\n") + kBase + "seed=7   # trailing comment\n");
  EXPECT_EQ(s.dim, 2);
  EXPECT_EQ(s.spec.kind, ChannelKind::Dephasing);
  EXPECT_EQ(s.policy.mode, PolicyMode::MinimalAlpha3);
  EXPECT_FALSE(s.policy_set);
  EXPECT_EQ(s.out_trajectory, "trajectory.csv");
  EXPECT_EQ(s.out_summary, "summary.txt");
  EXPECT_EQ(s.grid, 21);
  EXPECT_EQ(s.samples, 1000);
  EXPECT_EQ(s.seed, 7u);
  EXPECT_EQ(s.integrator.t_max, 10.0);
  ASSERT_TRUE(s.initial);
  EXPECT_LT((s.initial->as(Convention::Bloch).coords - Vec(Vec3(0.5, 0.5, 0.5))).norm(), 1e-15);
}

TEST(Scenario, CoherenceInitialStateConverted) {
  Scenario s = parse_scenario(
      "channel.kind=dephasing\nchannel.gamma=1\nproperty.kind=coherence\ninitial.coherence=0.1,0.2,0.3\n");
  EXPECT_LT((s.initial->as(Convention::Bloch).coords - kSqrt2 * Vec(Vec3(0.1, 0.2, 0.3))).norm(), 1e-15);
}

TEST(Scenario, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_of(std::string(kBase) + "bogus.key=1\n").rfind("t.cfg:5: unknown key 'bogus.key'", 0), 0u);
  EXPECT_EQ(error_of(std::string(kBase) + "no equals sign\n").rfind("t.cfg:5: expected key=value", 0), 0u);
  EXPECT_NE(error_of(std::string(kBase) + "channel.gamma=2\n").find("t.cfg:5: duplicate key 'channel.gamma'"),
            std::string::npos);
  EXPECT_EQ(error_of("channel.kind=dephasing\nchannel.gamma=abc\n").rfind("t.cfg:2: channel.gamma:", 0), 0u);
  EXPECT_EQ(error_of("channel.kind=dephasing\ninitial.bloch=0.9,0.9,0\n").rfind("t.cfg:2: initial.bloch:", 0), 0u);
}

TEST(Scenario, RejectsInvalidValues) {
  EXPECT_NE(error_of("channel.kind=warp\n"), "");
  EXPECT_NE(error_of("channel.kind=dephasing\nchannel.gamma=-1\n"), "");
  EXPECT_NE(error_of("channel.kind=dephasing\nchannel.gamma=nan\n"), "");
  EXPECT_NE(error_of("channel.kind=dephasing\ninitial.bloch=0.1,0.2\n"), "");
  EXPECT_NE(error_of("channel.kind=dephasing\nproperty.kind=fidelity\n"), "");
  EXPECT_NE(error_of("channel.kind=dephasing\nproperty.kind=fidelity\nproperty.w=1,1,0\n"), "");
  EXPECT_NE(error_of(std::string(kBase) + "policy.mode=fixed_p\n"), "");
  EXPECT_NE(error_of(std::string(kBase) + "policy.mode=alpha2_steering\n"), "");
  EXPECT_NE(error_of(std::string(kBase) + "integrator.rtol=0\n"), "");
  EXPECT_NE(error_of(std::string(kBase) + "landscape.grid=1\n"), "");
  EXPECT_NE(error_of(std::string(kBase) + "classify.samples=0\n"), "");
  EXPECT_NE(error_of(std::string(kBase) + "classify.samples=1.5\n"), "");
  EXPECT_NE(error_of("system.dim=1\n"), "");
  EXPECT_NE(error_of("system.dim=3\nchannel.kind=dephasing\n"), "");
  EXPECT_NE(error_of("system.dim=3\nchannel.kind=level_decay\nchannel.levels=0,0\n"), "");
  EXPECT_NE(error_of("system.dim=3\nchannel.kind=level_decay\nchannel.levels=0,2\nproperty.kind=coherence\n"), "");
}

TEST(Scenario, QutritChannelBuildsLindbladTerm) {
  Scenario s = parse_scenario(
      "system.dim=3\nchannel.kind=level_decay\nchannel.levels=0,2\nchannel.gamma=0.5\n"
      "property.kind=population\nproperty.level=0\n");
  EXPECT_EQ(s.dim, 3);
  EXPECT_EQ(s.D.dim, 3);
  EXPECT_EQ(s.D.convention, Convention::Coherence);
  ASSERT_EQ(s.spec.terms.size(), 1u);
  EXPECT_EQ(s.spec.terms[0].op(0, 2), cplx(1.0));
  EXPECT_EQ(s.spec.terms[0].rate, 0.5);
  ASSERT_TRUE(s.property);
  EXPECT_EQ(s.property->dim, 3);
}

TEST(Scenario, AnalyticPredictionOnlyWhereAFormulaApplies) {
  Scenario s = parse_scenario(kBase);
  auto p = analytic_prediction(s, *s.initial);
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->t_b, 0.125, 1e-15);  // vz^2 / (4 gamma f0)
  Scenario pur = parse_scenario("channel.kind=dephasing\nproperty.kind=purity\ninitial.bloch=0.5,0.5,0.5\n");
  EXPECT_FALSE(analytic_prediction(pur, *pur.initial));
}

TEST(Scenario, ExampleConfigsParse) {
  for (const char* name : {"bitflip_coherence", "bitflip_fidelity", "dephasing_vz", "dephasing_coherence",
                           "depolarizing_fidelity", "relaxation_inside", "landscape_dephasing", "landscape_relaxation",
                           "classify_purity", "classify_coherence", "classify_vz", "qutrit_population",
                           "dephasing_paths", "bitflip_steering", "bitflip_alpha2"})
    EXPECT_NO_THROW(load_scenario(std::string(QPP_CONFIG_DIR) + "/" + name + ".cfg")) << name;
  EXPECT_THROW(load_scenario(std::string(QPP_CONFIG_DIR) + "/missing.cfg"), ConfigError);
}
