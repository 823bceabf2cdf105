#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "qpp/landscape.hpp"

namespace qpp {

enum class PolicyMode { MinimalAlpha3, FixedP, Alpha2Steering, TrajectoryPrescribed };

inline std::string to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::MinimalAlpha3: return "minimal_alpha3";
    case PolicyMode::FixedP: return "fixed_p";
    case PolicyMode::Alpha2Steering: return "alpha2_steering";
    case PolicyMode::TrajectoryPrescribed: return "trajectory_prescribed";
  }
  return "unknown";
}

struct SynthesisPolicy {
  PolicyMode mode = PolicyMode::MinimalAlpha3;
  double h_max = 0.0;  // 0 selects 1e6 * largest channel rate
  std::optional<TimedTrajectory> path;
};

/// h = alpha3 (g x v) with alpha3 = g.(Rv+c) / (2 |g x v|^2). No throwing:
/// an uncontrollable point yields an infinite field.
inline ControlField minimal_field(const Vec3& g, const Vec3& v, const Vec3& drift, double normR, double normc,
                                  double tol = 1e-8) {
  PropertyClass pc = classify_from(g, v, drift, normR, normc, tol);
  ControlField cf;
  if (pc.kind == ClassKind::TriviallyControllable) {
    cf.alphas = AlphaDecomposition{};
    return cf;
  }
  Vec3 gxv = g.cross(v);
  double n2 = gxv.squaredNorm();
  if (pc.kind == ClassKind::Uncontrollable || n2 == 0.0) {
    cf.h = Vec3::Constant(std::numeric_limits<double>::infinity());
    cf.ill_conditioned = true;
    return cf;
  }
  double a3 = pc.alignment / (2.0 * n2);
  cf.h = a3 * gxv;
  cf.alphas = AlphaDecomposition{0.0, 0.0, a3};
  cf.ill_conditioned = pc.collinearity <= 10.0 * tol * pc.collinearity_scale;
  return cf;
}

inline Vec3 bloch_gradient(const TargetProperty& f, const StateVector& sv) {
  Vec fv = sv.as(f.convention).coords;
  if (!f.domain_ok(fv)) throw Error(ErrorCode::GradientUndefined, "state outside the property domain");
  Vec3 g = to_vec3(f.grad(fv));
  // df/dv_bloch = df/dv_coh / sqrt2
  if (f.convention == Convention::Coherence) g /= kSqrt2;
  return g;
}

/// Minimal f-preserving qubit control (alpha1 = alpha2 = 0).
inline ControlField synthesize_qubit(const TargetProperty& f, const Dissipator& D, const StateVector& sv,
                                     double tol = 1e-8) {
  if (D.dim != 2 || D.convention != Convention::Bloch)
    throw Error(ErrorCode::InvalidDimension, "qubit synthesis needs a Bloch-convention dissipator");
  Vec3 v = to_vec3(sv.as(Convention::Bloch).coords);
  Vec3 g = bloch_gradient(f, sv);
  Vec3 drift = to_vec3(D.apply(v));
  PropertyClass pc = classify_from(g, v, drift, D.R.norm(), D.c.norm(), tol);
  if (pc.kind == ClassKind::Uncontrollable) throw Error(ErrorCode::BreakdownPoint, "grad f parallel to v");
  return minimal_field(g, v, drift, D.R.norm(), D.c.norm(), tol);
}

/// Normalized constraint residual |grad f . vdot| / (|grad f| (2|h||v| + |R||v| + |c|)).
inline double constraint_residual(const Vec3& g, const Vec3& v, const Vec3& h, const Dissipator& D) {
  Vec3 vdot = unitary_velocity(h, v) + to_vec3(D.apply(v));
  double scale = g.norm() * (2 * h.norm() * v.norm() + D.R.norm() * v.norm() + D.c.norm());
  if (scale == 0.0) return 0.0;
  return std::abs(g.dot(vdot)) / scale;
}

/// General-dimension particular solution
/// H = i <grad f, L_D rho> [rho, grad f] / |[rho, grad f]|^2.
inline ControlField synthesize_general(const CMat& gradf, const CMat& LDrho, const CMat& rho, double tol = 1e-8) {
  const int d = static_cast<int>(rho.rows());
  CMat comm = commutator(rho, gradf);
  double n = comm.norm();
  CMat dev = rho - CMat::Identity(d, d) / static_cast<double>(d);
  if (n <= tol * dev.norm() * gradf.norm()) throw Error(ErrorCode::BreakdownPoint, "rho commutes with grad f");
  double align = hs_inner(gradf, LDrho).real();
  CMat H = cplx(0, 1) * align * comm / (n * n);
  ControlField cf = ControlField::from_matrix(0.5 * (H + H.adjoint()));
  cf.ill_conditioned = n <= 10 * tol * dev.norm() * gradf.norm();
  return cf;
}

inline ControlField synthesize_general(const CMat& gradf, const std::vector<LindbladTerm>& terms, const CMat& rho,
                                       double tol = 1e-8) {
  return synthesize_general(gradf, lindblad_action(terms, rho), rho, tol);
}

/// Qubit field from a general 2x2 control, via the single conversion routine.
inline ControlField to_qubit_field(const ControlField& general) {
  if (general.qubit) return general;
  ControlField q = ControlField::from_h(bloch_field_from_hamiltonian(general.H));
  q.h0 = (general.H.trace().real()) / 2;
  q.ill_conditioned = general.ill_conditioned;
  return q;
}

/// d minus the multiplicity of the zero eigenvalue of i[rho, grad f].
inline int relevant_parameter_count(const CMat& rho, const CMat& gradf, double tol = 1e-9) {
  const int d = static_cast<int>(rho.rows());
  CMat A = cplx(0, 1) * commutator(rho, gradf);
  A = 0.5 * (A + A.adjoint());
  double scale = rho.norm() * gradf.norm();
  Eigen::SelfAdjointEigenSolver<CMat> es(A, Eigen::EigenvaluesOnly);
  int m0 = 0;
  for (int i = 0; i < d; ++i)
    if (std::abs(es.eigenvalues()(i)) <= tol * std::max(scale, 1e-300)) ++m0;
  return d - m0;
}

/// Orthonormal frame of the fixed-p construction: v = alpha_w w + alpha_p p.
struct FixedPFrame {
  Vec3 w, p;
  double alpha_w = 0.0, alpha_p = 0.0;
};

inline FixedPFrame fixed_p_frame(const Vec3& w, const Vec3& v) {
  FixedPFrame fr;
  fr.w = w;
  fr.alpha_w = v.dot(w);
  Vec3 perp = v - fr.alpha_w * w;
  fr.alpha_p = perp.norm();
  if (fr.alpha_p <= 1e-12 * std::max(1.0, v.norm())) throw Error(ErrorCode::BreakdownPoint, "v collinear with w");
  fr.p = perp / fr.alpha_p;
  return fr;
}

/// Fidelity control for a pure reference w that keeps the direction p fixed:
/// vdot has no component along w or w x p, gauge h . v = 0.
inline ControlField fixed_p_control(const Vec3& w, const Vec3& v, const Dissipator& D) {
  if (std::abs(w.norm() - 1.0) > 1e-12) throw Error(ErrorCode::InvalidReference, "fixed-p control needs |w| = 1");
  FixedPFrame fr = fixed_p_frame(w, v);
  Vec3 q = w.cross(fr.p);
  Vec3 drift = to_vec3(D.apply(v));
  Mat3 A;
  A.row(0) = 2.0 * v.cross(w).transpose();
  A.row(1) = 2.0 * v.cross(q).transpose();
  A.row(2) = v.transpose();
  Vec3 b(-drift.dot(w), -drift.dot(q), 0.0);
  Vec3 h = A.fullPivLu().solve(b);
  ControlField cf = ControlField::from_h(h);
  cf.alphas = decompose_alpha(h, 0.5 * w, v);
  cf.ill_conditioned = fr.alpha_p <= 1e-7;
  return cf;
}

/// Per-sample qubit control realizing a time-parametrized path:
/// 2 h x v = vdot - (Rv + c), h orthogonal to v.
inline std::vector<ControlField> trajectory_control(const TimedTrajectory& path, const Dissipator& D,
                                                    double tol = 1e-8) {
  std::vector<ControlField> out;
  out.reserve(path.states.size());
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    Vec3 v = to_vec3(path.states[i]);
    Vec3 B = to_vec3(path.velocities[i]) - to_vec3(D.apply(path.states[i]));
    double n2 = v.squaredNorm();
    if (n2 == 0.0) {
      if (B.norm() > tol) throw Error(ErrorCode::NotRealizable, "velocity demanded at the origin");
      out.push_back(ControlField::from_h(Vec3::Zero()));
      continue;
    }
    if (std::abs(B.dot(v)) > tol * std::max(1.0, B.norm() * v.norm()))
      throw Error(ErrorCode::NotRealizable, "radial velocity not supplied by the dissipator");
    out.push_back(ControlField::from_h(v.cross(B) / (2.0 * n2)));
  }
  return out;
}

/// General-dimension version: H_jk = -i <j| rhodot - L_D rho |k> / (l_j - l_k).
inline std::vector<ControlField> trajectory_control(const std::vector<CMat>& rho, const std::vector<CMat>& rhodot,
                                                    const std::vector<LindbladTerm>& terms, double block_tol = 1e-8) {
  if (rho.size() != rhodot.size()) throw Error(ErrorCode::InvalidTrajectory, "sample count mismatch");
  std::vector<ControlField> out;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    CMat B = rhodot[i] - lindblad_action(terms, rho[i]);
    SpectralDecomposition sd = eigendecompose_grouped(rho[i]);
    for (const auto& P : sd.projectors)
      if ((P * B * P).norm() > block_tol * std::max(1.0, B.norm()))
        throw Error(ErrorCode::NotRealizable, "eigenspace block condition violated");
    out.push_back(ControlField::from_matrix(offdiagonal_hamiltonian(rho[i], B, block_tol)));
  }
  return out;
}

/// Coherence-preserving steering to the x axis under bit flip: alpha2 from the
/// prescribed cylinder path, alpha3 from the minimal control.
struct Alpha2Steering {
  double gamma = 1.0;
  double f0 = 0.0;
  double vz0 = 0.0;
  double theta = 0.0;
  bool stationary = false;

  AlphaDecomposition alphas(const Vec3& v) const {
    if (stationary) return {};
    double f = v(0) * v(0) + v(1) * v(1);
    double a3 = -0.5 * gamma * v(1) * v(1) / (f * v(2) * v(2));
    double a2 = gamma / (2.0 * v(2)) *
                (std::numbers::pi * (1.0 - theta) * (v(1) * v(1) + v(2) * v(2)) / (vz0 * vz0) - v(0) * v(1) / f0);
    return {0.0, a2, a3};
  }

  ControlField field(const Vec3& v) const {
    if (stationary) return ControlField::from_h(Vec3::Zero());
    AlphaDecomposition a = alphas(v);
    Vec3 g(2 * v(0), 2 * v(1), 0);
    ControlField cf = ControlField::from_h(a.alpha2 * g + a.alpha3 * g.cross(v));
    cf.alphas = a;
    return cf;
  }
};

inline bool is_bit_flip(const Dissipator& D, double* gamma = nullptr) {
  if (D.dim != 2 || D.convention != Convention::Bloch || !D.unital()) return false;
  Mat3 R = D.R;
  double g = -R(1, 1) / 2;
  Mat3 expect = Vec3(0, -2 * g, -2 * g).asDiagonal();
  if (!(g > 0) || (R - expect).norm() > 1e-12 * g) return false;
  if (gamma) *gamma = g;
  return true;
}

inline Alpha2Steering alpha2_steering(const StateVector& v0s, const Dissipator& D, double f0) {
  double g = 0;
  if (!is_bit_flip(D, &g)) throw Error(ErrorCode::InvalidArgument, "alpha2 steering is defined for bit flip");
  Vec3 v0 = to_vec3(v0s.as(Convention::Bloch).coords);
  Alpha2Steering s;
  s.gamma = g;
  s.f0 = f0;
  s.vz0 = v0(2);
  if (is_stable_point(D, Vec(v0))) {
    s.stationary = true;
    return s;
  }
  if (v0(2) == 0.0) throw Error(ErrorCode::BreakdownPoint, "initial state in the breakdown plane");
  if (!(f0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "coherence must be positive");
  s.theta = 2.0 / std::numbers::pi * std::atan(v0(0) / v0(1));
  return s;
}

/// Analytic steering path l(u) on the coherence cylinder and its u-derivative.
inline std::pair<Vec3, Vec3> steering_path(const Vec3& v0, double u) {
  double f0 = v0(0) * v0(0) + v0(1) * v0(1), sf = std::sqrt(f0);
  double theta = 2.0 / std::numbers::pi * std::atan(v0(0) / v0(1));
  double k = 0.5 * std::numbers::pi * (1.0 - theta);
  double ang = 0.5 * std::numbers::pi * theta + k * u;
  double s = std::sqrt(std::max(0.0, 1.0 - u));
  Vec3 l(sf * std::sin(ang), sf * std::cos(ang), v0(2) * s);
  Vec3 dl(sf * k * std::cos(ang), -sf * k * std::sin(ang),
          s > 0 ? -v0(2) / (2.0 * s) : -std::copysign(std::numeric_limits<double>::infinity(), v0(2)));
  return {l, dl};
}

}  // namespace qpp
