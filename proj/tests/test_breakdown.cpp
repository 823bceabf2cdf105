#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "oracle_values.hpp"
#include "support.hpp"

using namespace qpp;

namespace {

const StateVector kStd = StateVector::bloch(0.5, 0.5, 1 / std::sqrt(2.0));

double rel(double a, double b) { return qtest::rel_err(a, b); }

// Time for vz to reach 0 on the coherence level set f0 under relaxation:
// vz vz' = -g2 f0 - g1 vz^2 + 2 g1 a vz.
double relaxation_quadrature(const ChannelSpec& s, double f0, double vz) {
  double g1 = s.g1(), g2 = s.g2(), a = s.a();
  boost::math::quadrature::tanh_sinh<double> q;
  return q.integrate([&](double z) { return z / (g2 * f0 + g1 * z * z - 2 * g1 * a * z); }, 0.0, vz);
}

double simulated_tb(const ChannelSpec& spec, const TargetProperty& f, const StateVector& v0, PolicyMode mode) {
  IntegratorConfig cfg;
  cfg.t_max = 20;
  SynthesisPolicy pol;
  pol.mode = mode;
  SimulationResult r = simulate_tracked(f, builtin_dissipator(spec), v0, pol, cfg);
  EXPECT_EQ(r.termination, Termination::Breakdown);
  return r.t_event;
}

}  // namespace

TEST(Oracle, CoherenceBreakdownTimes) {
  EXPECT_LT(rel(tb_coherence(ChannelSpec::bit_flip(1), kStd).t_b, oracle::kBitFlipStandardTb), 1e-6);
  EXPECT_LT(rel(tb_coherence(ChannelSpec::depolarizing(1), kStd).t_b, oracle::kDepolarizingCoherenceTb), 1e-6);
  EXPECT_LT(rel(tb_coherence(ChannelSpec::dephasing(1), kStd).t_b, oracle::kDephasingStandardTb), 1e-6);
  EXPECT_LT(rel(tb_coherence(ChannelSpec::bit_flip(1), StateVector::bloch(0, 0.6, 0.5)).t_b, oracle::kBitFlipVx0Tb),
            1e-6);
  ChannelSpec rd = ChannelSpec::relaxation_dephasing(1.0, 0.3, 2.0);
  double f0 = 0.3 * rd.a() * rd.a() * rd.g1() / rd.g2();
  BreakdownPrediction p = tb_coherence(rd, StateVector::bloch(std::sqrt(f0), 0, 0.05));
  EXPECT_EQ(p.formula_id, "relaxation_coherence_below");
  EXPECT_LT(rel(p.t_b, oracle::kRelaxDephBelowTb), 1e-6);
}

TEST(Oracle, FidelityBreakdownTimes) {
  Vec3 x(1, 0, 0), z(0, 0, 1);
  EXPECT_LT(rel(tb_fidelity(ChannelSpec::depolarizing(1), StateVector::bloch(Vec(0.5 * x + std::sqrt(0.75) * z)), x).t_b,
                oracle::kDepolarizingFidelityTb),
            1e-6);
  BreakdownPrediction t0 = tb_fidelity(ChannelSpec::dephasing(1), StateVector::bloch(Vec(0.5 * x + 0.6 * z)), x);
  EXPECT_EQ(t0.formula_id, "fixed_p_theta_p_zero");
  EXPECT_LT(rel(t0.t_b, oracle::kFixedPThetaZeroTb), 1e-6);
  Vec3 w = Vec3(1, 0, 1).normalized();
  Vec3 p(oracle::kFixedPGenericP[0], oracle::kFixedPGenericP[1], oracle::kFixedPGenericP[2]);
  BreakdownPrediction g = tb_fidelity(ChannelSpec::dephasing(1), StateVector::bloch(Vec(0.3 * w + 0.6 * p)), w);
  EXPECT_EQ(g.formula_id, "fixed_p_fidelity");
  EXPECT_LT(rel(g.t_b, oracle::kFixedPGenericTb), 1e-6);
}

TEST(BreakdownTime, MonotoneInRateAndHeight) {
  for (ChannelSpec s : {ChannelSpec::dephasing(1), ChannelSpec::bit_flip(1), ChannelSpec::depolarizing(1)}) {
    double prev = 0;
    for (double vz : {0.1, 0.3, 0.5, 0.7}) {
      double t = tb_coherence(s, StateVector::bloch(0.4, 0.5, vz)).t_b;
      EXPECT_GT(t, prev) << to_string(s.kind);
      prev = t;
    }
    double slow = tb_coherence(s, kStd).t_b;
    s.gamma = 2.0;
    EXPECT_NEAR(tb_coherence(s, kStd).t_b, slow / 2, 1e-14) << to_string(s.kind);
  }
}

TEST(BreakdownTime, BitFlipVxZeroLimit) {
  double f0 = 0.36, vz = 0.5;
  double limit = tb_coherence(ChannelSpec::bit_flip(1), StateVector::bloch(0, 0.6, vz)).t_b;
  EXPECT_NEAR(limit, std::log1p(vz * vz / f0) / 4, 1e-15);
  for (double vx : {1e-3, 1e-5, 1e-7}) {
    double vy = std::sqrt(f0 - vx * vx);
    EXPECT_NEAR(tb_coherence(ChannelSpec::bit_flip(1), StateVector::bloch(vx, vy, vz)).t_b, limit, 100 * vx * vx + 1e-15);
  }
  // Small vy: breakdown recedes to infinity; vy = 0 never breaks down.
  double prev = 0;
  for (double vy : {0.3, 0.1, 0.01, 1e-4}) {
    double t = tb_coherence(ChannelSpec::bit_flip(1), StateVector::bloch(std::sqrt(f0 - vy * vy), vy, vz)).t_b;
    EXPECT_GT(t, prev);
    EXPECT_TRUE(std::isfinite(t));
    prev = t;
  }
  EXPECT_FALSE(tb_coherence(ChannelSpec::bit_flip(1), StateVector::bloch(0.6, 0, vz)).finite());
}

TEST(BreakdownTime, RelaxationBranchesMatchQuadrature) {
  for (double gd : {0.0, 0.3}) {
    ChannelSpec s = ChannelSpec::relaxation_dephasing(1.0, gd, 2.0);
    double a = s.a(), thresh = a * a * s.g1() / s.g2();
    int finite = 0;
    for (int n = 0; n < 200 && finite < 60; ++n) {
      double f0 = qtest::uniform(0.05, 2.0) * thresh;
      double vz = qtest::uniform(0.01, 0.6);
      if (f0 + vz * vz > 0.98) continue;
      BreakdownPrediction p = tb_coherence(s, StateVector::bloch(std::sqrt(f0), 0, vz));
      if (!p.finite()) continue;
      ++finite;
      EXPECT_LT(rel(p.t_b, relaxation_quadrature(s, f0, vz)), 1e-6) << p.formula_id << " f0=" << f0 << " vz=" << vz;
    }
    EXPECT_GT(finite, 20);
  }
}

TEST(BreakdownTime, ZeroDephasingReducesToRelaxation) {
  ChannelSpec r = ChannelSpec::relaxation(1.0, 2.0), rd = ChannelSpec::relaxation_dephasing(1.0, 0.0, 2.0);
  for (int n = 0; n < 50; ++n) {
    Vec3 v = qtest::random_ball(0.95);
    BreakdownPrediction a = tb_coherence(r, StateVector::bloch(Vec(v)));
    BreakdownPrediction b = tb_coherence(rd, StateVector::bloch(Vec(v)));
    EXPECT_EQ(a.finite(), b.finite());
    if (a.finite()) EXPECT_NEAR(a.t_b, b.t_b, 1e-14 * (1 + a.t_b));
  }
}

TEST(BreakdownTime, RelaxationRegions) {
  ChannelSpec s = ChannelSpec::relaxation(1.0, 2.0);
  double a = s.a();
  // Inside the ellipsoid the level set reaches a stable point.
  RegionVerdict in = coherence_stable_reachability(s, StateVector::bloch(0.2 * a, 0, a));
  EXPECT_TRUE(in.reachable);
  BreakdownPrediction pin = tb_coherence(s, StateVector::bloch(0.2 * a, 0, a));
  EXPECT_EQ(pin.reachability, Reachability::StableReachable);
  EXPECT_EQ(pin.region, "inside_ellipsoid");
  // Below the ellipsoid the state falls to the equatorial plane.
  EXPECT_FALSE(coherence_stable_reachability(s, StateVector::bloch(0.6 * a, 0, 0.01 * a)).reachable);
  // Above the coherence threshold there is no stable point on the level set.
  BreakdownPrediction out = tb_coherence(s, StateVector::bloch(0.9, 0, 0.3));
  EXPECT_EQ(out.formula_id, "relaxation_coherence_outside");
  EXPECT_TRUE(out.finite());
  EXPECT_EQ(tb_coherence(s, StateVector::bloch(0.5, 0, 0)).t_b, 0.0);
}

TEST(BreakdownTime, FixedPBranchesAreContinuous) {
  const double g = 1.0, ap = 0.6, th = 0.7;
  for (double c1 : {-0.3, 0.9}) {
    double at0 = fixed_p_g_time(g, ap, th, c1, 0.0);
    for (double eps : {1e-4, 1e-6, 1e-8}) {
      EXPECT_NEAR(fixed_p_g_time(g, ap, th, c1, eps), at0, 100 * eps);
      EXPECT_NEAR(fixed_p_g_time(g, ap, th, c1, -eps), at0, 100 * eps);
    }
  }
}

TEST(BreakdownTime, AnalyticMatchesSimulation) {
  TargetProperty coh = coherence_property();
  for (ChannelSpec s : {ChannelSpec::dephasing(0.7), ChannelSpec::bit_flip(1.0), ChannelSpec::depolarizing(1.3),
                        ChannelSpec::relaxation(1.0, 2.0)}) {
    StateVector v0 = StateVector::bloch(0.5, 0.4, 0.6);
    BreakdownPrediction p = tb_coherence(s, v0);
    ASSERT_TRUE(p.finite()) << to_string(s.kind);
    EXPECT_LT(rel(simulated_tb(s, coh, v0, PolicyMode::MinimalAlpha3), p.t_b), 1e-6) << to_string(s.kind);
  }
  Vec3 w = Vec3(1, 0, 1).normalized();
  Vec3 p(oracle::kFixedPGenericP[0], oracle::kFixedPGenericP[1], oracle::kFixedPGenericP[2]);
  StateVector v0 = StateVector::bloch(Vec(0.3 * w + 0.6 * p));
  EXPECT_LT(rel(simulated_tb(ChannelSpec::dephasing(1), fidelity_property(w), v0, PolicyMode::FixedP),
                oracle::kFixedPGenericTb),
            1e-6);
}

TEST(BitFlipClosedForm, MatchesSimulation) {
  IntegratorConfig cfg;
  cfg.t_max = 0.35;
  SimulationResult r = simulate_tracked(coherence_property(), builtin_dissipator(ChannelSpec::bit_flip(1)), kStd, {}, cfg);
  ASSERT_EQ(r.termination, Termination::HorizonReached);
  for (const auto& s : r.samples) {
    Vec cf = bitflip_closed_form(kStd, 1.0, s.t).coords;
    EXPECT_LT((cf - s.v).norm(), 1e-8) << "t=" << s.t;
  }
  EXPECT_THROW(bitflip_closed_form(kStd, 1.0, 0.5), Error);
}

TEST(FixedPReachability, CoplanarAxisBetweenReachesStablePoint) {
  Vec3 w = Vec3(1, 0, 1).normalized();
  // p in the x-z plane on the far side of z from w.
  Vec3 p = Vec3(-1, 0, 1).normalized();
  FixedPReachability r = fixed_p_stable_reachability(StateVector::bloch(Vec(0.3 * w + 0.6 * p)), w,
                                                     ChannelSpec::dephasing(1));
  EXPECT_TRUE(r.reachable);
  BreakdownPrediction pr = tb_fidelity(ChannelSpec::dephasing(1), StateVector::bloch(Vec(0.3 * w + 0.6 * p)), w);
  EXPECT_FALSE(pr.finite());
  // alpha_p short of the stable point.
  EXPECT_FALSE(fixed_p_stable_reachability(StateVector::bloch(Vec(0.3 * w + 0.2 * p)), w, ChannelSpec::dephasing(1))
                   .reachable);
  // Out of plane.
  Vec3 q(oracle::kFixedPGenericP[0], oracle::kFixedPGenericP[1], oracle::kFixedPGenericP[2]);
  EXPECT_FALSE(fixed_p_stable_reachability(StateVector::bloch(Vec(0.3 * w + 0.6 * q)), w, ChannelSpec::dephasing(1))
                   .reachable);
}

TEST(FixedPReachability, ReachableStateApproachesStablePoint) {
  Vec3 w = Vec3(1, 0, 1).normalized();
  Vec3 p = Vec3(-1, 0, 1).normalized();
  IntegratorConfig cfg;
  cfg.t_max = 60;
  SynthesisPolicy pol;
  pol.mode = PolicyMode::FixedP;
  SimulationResult r = simulate_tracked(fidelity_property(w), builtin_dissipator(ChannelSpec::dephasing(1)),
                                        StateVector::bloch(Vec(0.3 * w + 0.6 * p)), pol, cfg);
  // Double root: the stable point on the z axis is approached algebraically.
  EXPECT_NE(r.termination, Termination::Breakdown);
  EXPECT_LT(r.max_f_drift(), 1e-8);
  for (std::size_t i = 1; i < r.samples.size(); ++i)
    EXPECT_LE(std::abs(r.samples[i].v(0)), std::abs(r.samples[i - 1].v(0)) + 1e-15);
  EXPECT_LT(std::abs(r.final().v(0)), 0.005);
}
