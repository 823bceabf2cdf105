#include <gtest/gtest.h>

#include "support.hpp"

using namespace qpp;

namespace {

const StateVector kStd = StateVector::bloch(0.5, 0.5, 1 / std::sqrt(2.0));

SimulationResult run(const ChannelSpec& spec, const TargetProperty& f, const StateVector& v0, double t_max,
                     PolicyMode mode = PolicyMode::MinimalAlpha3, double rtol = 1e-10) {
  IntegratorConfig cfg;
  cfg.t_max = t_max;
  cfg.rtol = rtol;
  cfg.atol = rtol * 1e-2;
  SynthesisPolicy pol;
  pol.mode = mode;
  return simulate_tracked(f, builtin_dissipator(spec), v0, pol, cfg);
}

}  // namespace

TEST(DormandPrince, FifthOrderLocalError) {
  auto f = [](double, const Vec& y) { return Vec(-y); };
  Vec y0 = Vec::Ones(1);
  double prev = 0;
  for (double h : {0.2, 0.1, 0.05}) {
    DormandPrince dp;
    dp.attempt(f, 0.0, y0, f(0.0, y0), h, 1e-6, 1e-6);
    double err = std::abs(dp.y1()(0) - std::exp(-h));
    if (prev > 0) {
      EXPECT_GT(prev / err, 40.0);
      EXPECT_LT(prev / err, 90.0);
    }
    prev = err;
  }
}

TEST(DormandPrince, DenseOutputIsAccurate) {
  auto f = [](double, const Vec& y) { return Vec(-y); };
  Vec y0 = Vec::Ones(1);
  DormandPrince dp;
  const double h = 0.05;
  dp.attempt(f, 0.0, y0, f(0.0, y0), h, 1e-6, 1e-6);
  EXPECT_EQ(dp.dense(0.0)(0), 1.0);
  EXPECT_NEAR(dp.dense(1.0)(0), dp.y1()(0), 1e-16);
  for (double th : {0.1, 0.3, 0.5, 0.7, 0.9}) EXPECT_NEAR(dp.dense(th)(0), std::exp(-th * h), 1e-10);
}

TEST(Integrator, FreeRelaxationMatchesExactSolution) {
  ChannelSpec s = ChannelSpec::relaxation_dephasing(1.0, 0.3, 2.0);
  Vec3 v0(0.3, -0.4, 0.5), vinf(0, 0, 2 * s.a());
  IntegratorConfig cfg;
  cfg.t_max = 3;
  SimulationResult r = simulate_free(builtin_dissipator(s), StateVector::bloch(Vec(v0)), cfg);
  for (const auto& smp : r.samples) {
    Vec3 decay(std::exp(-s.g2() * smp.t), std::exp(-s.g2() * smp.t), std::exp(-s.g1() * smp.t));
    Vec3 exact = vinf + decay.cwiseProduct(v0 - vinf);
    EXPECT_LT((to_vec3(smp.v) - exact).norm(), 1e-9);
  }
}

TEST(Integrator, RejectsBadConfig) {
  IntegratorConfig cfg;
  cfg.rtol = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.t_max = std::numeric_limits<double>::infinity();
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.rtol = 1e-16;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(TrackedRun, PropertyConservedForAllChannels) {
  std::vector<TargetProperty> props{coherence_property(), fidelity_property(Vec3(0, 1, 0)),
                                    fidelity_property(Vec3(0.3, -0.4, 0.5))};
  for (const auto& spec : qtest::builtin_channels())
    for (const auto& f : props) {
      SimulationResult r = run(spec, f, StateVector::bloch(0.4, 0.3, 0.6), 2.0);
      EXPECT_LT(r.max_f_drift(), 1e-8) << to_string(spec.kind) << " " << f.name;
      EXPECT_LT(r.max_constraint_residual, 1e-12) << to_string(spec.kind) << " " << f.name;
      for (const auto& s : r.samples) EXPECT_LE(s.v.norm(), 1.0 + 1e-12);
    }
}

TEST(TrackedRun, PurityNonIncreasingUnderUnitalNoise) {
  for (ChannelSpec s : {ChannelSpec::dephasing(0.7), ChannelSpec::bit_flip(1.0), ChannelSpec::bit_phase_flip(0.4),
                        ChannelSpec::depolarizing(1.3)}) {
    SimulationResult r = run(s, coherence_property(), kStd, 2.0);
    for (std::size_t i = 1; i < r.samples.size(); ++i)
      EXPECT_LE(r.samples[i].purity, r.samples[i - 1].purity + 1e-13) << to_string(s.kind);
  }
}

TEST(TrackedRun, BreakdownTimeStableUnderTolerance) {
  for (ChannelSpec s : {ChannelSpec::dephasing(1.0), ChannelSpec::bit_flip(1.0), ChannelSpec::depolarizing(1.0),
                        ChannelSpec::relaxation(1.0, 2.0)}) {
    SimulationResult a = run(s, coherence_property(), StateVector::bloch(0.5, 0.4, 0.6), 20, PolicyMode::MinimalAlpha3,
                             1e-8);
    SimulationResult b = run(s, coherence_property(), StateVector::bloch(0.5, 0.4, 0.6), 20, PolicyMode::MinimalAlpha3,
                             5e-9);
    ASSERT_EQ(a.termination, Termination::Breakdown);
    ASSERT_EQ(b.termination, Termination::Breakdown);
    EXPECT_LT(qtest::rel_err(a.t_event, b.t_event), 1e-3) << to_string(s.kind);
  }
}

TEST(TrackedRun, FieldDivergesApproachingBreakdown) {
  SimulationResult r = run(ChannelSpec::dephasing(1.0), coherence_property(), kStd, 1.0);
  ASSERT_EQ(r.termination, Termination::Breakdown);
  EXPECT_NEAR(r.t_event, 0.25, 1e-8);
  double h0 = r.samples.front().control.norm();
  for (std::size_t i = 1; i < r.samples.size(); ++i)
    EXPECT_GE(r.samples[i].control.norm(), r.samples[i - 1].control.norm());
  EXPECT_GT(r.final().control.norm(), 1e3 * h0);
  // Minimal dephasing field |h| = gamma sqrt(f) / |vz|.
  for (const auto& s : r.samples) {
    double f = s.v(0) * s.v(0) + s.v(1) * s.v(1);
    EXPECT_NEAR(s.control.norm(), std::sqrt(f) / std::abs(s.v(2)), 1e-9 * s.control.norm());
  }
}

TEST(TrackedRun, TriviallyControllableNeedsNoField) {
  SimulationResult r = run(ChannelSpec::dephasing(1.0), vz_property(), kStd, 5.0);
  EXPECT_EQ(r.termination, Termination::HorizonReached);
  EXPECT_EQ(r.max_f_drift(), 0.0);
  for (const auto& s : r.samples) EXPECT_EQ(s.control.norm(), 0.0);
}

TEST(TrackedRun, UncontrollableStartIsImmediateBreakdown) {
  SimulationResult r = run(ChannelSpec::dephasing(1.0), coherence_property(), StateVector::bloch(0.5, 0.2, 0.0), 1.0);
  EXPECT_EQ(r.termination, Termination::Breakdown);
  EXPECT_EQ(r.t_event, 0.0);
}

TEST(TrackedRun, ConvergesToStablePointInsideRelaxationEllipsoid) {
  ChannelSpec s = ChannelSpec::relaxation(1.0, 2.0);
  SimulationResult r = run(s, coherence_property(), StateVector::bloch(0.2, 0, 0.4), 40);
  EXPECT_EQ(r.termination, Termination::StableConverged);
  EXPECT_TRUE(is_stable_point(builtin_dissipator(s), r.final().v, 1e-7));
  EXPECT_LT(r.max_f_drift(), 1e-8);
}

TEST(TrackedRun, FixedPKeepsDirectionP) {
  Vec3 w = Vec3(1, 0, 1).normalized();
  Vec3 v0 = 0.3 * w + 0.6 * Vec3(0, 1, 0);
  Vec3 normal = w.cross(Vec3(0, 1, 0));
  SimulationResult r = run(ChannelSpec::dephasing(1.0), fidelity_property(w), StateVector::bloch(Vec(v0)), 5,
                           PolicyMode::FixedP);
  for (const auto& s : r.samples) {
    EXPECT_NEAR(to_vec3(s.v).dot(w), 0.3, 1e-8);
    EXPECT_NEAR(to_vec3(s.v).dot(normal), 0.0, 1e-8);
  }
}

TEST(TrackedRun, SteeringReachesTheStableAxis) {
  SimulationResult r = run(ChannelSpec::bit_flip(1.0), coherence_property(), kStd, 50, PolicyMode::Alpha2Steering);
  EXPECT_EQ(r.termination, Termination::StableConverged);
  EXPECT_LT(r.max_f_drift(), 1e-8);
  EXPECT_NEAR(r.final().v(0), std::sqrt(0.5), 1e-6);
  EXPECT_LT(std::abs(r.final().v(2)), 1e-6);
}

TEST(TrackedRun, QutritPopulationPreserved) {
  OperatorBasis b = build_nice_basis(3);
  CMat L = CMat::Zero(3, 3);
  L(0, 2) = 1.0;
  Dissipator D = dissipator_from_lindblad({{L, 0.5}}, b, Convention::Coherence);
  TargetProperty f = population_property(b, 0);
  CMat rho(3, 3);
  rho << 0.3, 0.1, 0.05, 0.1, 0.3, cplx(0, 0.1), 0.05, cplx(0, -0.1), 0.4;
  IntegratorConfig cfg;
  cfg.t_max = 0.5;
  SimulationResult r = simulate_tracked(f, D, to_state_vector(rho, b), {}, cfg);
  EXPECT_LT(r.max_f_drift(), 1e-8);
  for (const auto& s : r.samples) {
    CMat m = density_unchecked(StateVector{3, s.v, Convention::Coherence}, b);
    EXPECT_NEAR(m.trace().real(), 1.0, 1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<CMat>(m).eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(TrackedRun, PrescribedPathRoundTrip) {
  // Record a tracked run, turn it into a prescribed path, replay it open loop.
  ChannelSpec spec = ChannelSpec::bit_flip(1.0);
  Dissipator D = builtin_dissipator(spec);
  SimulationResult ref = run(spec, coherence_property(), kStd, 0.2);
  ParamTrajectory l = to_param_trajectory(ref, D);
  TimedTrajectory tt = reparameterize(l, D, check_realizability(l, D));
  IntegratorConfig cfg;
  cfg.t_max = tt.final_time;
  SynthesisPolicy pol;
  pol.mode = PolicyMode::TrajectoryPrescribed;
  pol.path = tt;
  SimulationResult rep = simulate_tracked(coherence_property(), D, kStd, pol, cfg);
  EXPECT_LT((rep.final().v - ref.final().v).norm(), 1e-6);
}

TEST(TrackedRun, BreakdownBelowTimeResolutionIsStillBreakdown) {
  // The field diverges like 1/sqrt(t_b - t); the cap lies below double time resolution.
  Vec3 v0(-0.6603, -0.1993, 0.5897);
  SimulationResult r = run(ChannelSpec::bit_flip(1.0), coherence_property(), StateVector::bloch(Vec(v0)), 5.0);
  ASSERT_EQ(r.termination, Termination::Breakdown);
  EXPECT_LT(qtest::rel_err(r.t_event, tb_coherence(ChannelSpec::bit_flip(1.0), StateVector::bloch(Vec(v0))).t_b), 1e-8);
  EXPECT_LT(r.breakdown_collinearity, 1e-6);

  Vec3 w = Vec3(0.99527292701309167, 0.061512559629695887, -0.075153215251220595).normalized();
  Vec3 v1(-0.70983287839802101, -0.31604483657255616, -0.45989477492555753);
  SimulationResult q =
      run(ChannelSpec::bit_flip(1.0), fidelity_property(w), StateVector::bloch(Vec(v1)), 5.0, PolicyMode::FixedP);
  ASSERT_EQ(q.termination, Termination::Breakdown);
  EXPECT_LT(qtest::rel_err(q.t_event, tb_fidelity(ChannelSpec::bit_flip(1.0), StateVector::bloch(Vec(v1)), w).t_b), 1e-6);
}

TEST(TrackedRun, StepUnderflowAwayFromBreakdownIsAFailure) {
  // A prescribed law with a finite-time blow-up that is not a breakdown point of f.
  Dissipator D = builtin_dissipator(ChannelSpec::dephasing(1.0));
  ControlLaw law = [](double t, const Vec&) { return ControlField::from_h(Vec3(0, 0, 1.0 / std::sqrt(1.0 - t))); };
  IntegratorConfig cfg;
  cfg.t_max = 2.0;
  cfg.h_max = 1e30;
  TargetProperty f = vz_property();
  RunOptions opt;
  opt.property = &f;
  SimulationResult r = integrate_controlled(D, Vec(Vec3(0.3, 0.2, 0.4)), law, cfg, opt);
  EXPECT_NE(r.termination, Termination::HorizonReached);
  EXPECT_NE(r.termination, Termination::Breakdown);
}
