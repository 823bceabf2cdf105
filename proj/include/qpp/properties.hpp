#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "qpp/channels.hpp"

namespace qpp {

/// Scalar state property with analytic gradient. Coordinates are in the
/// property's own convention (Bloch for the qubit built-ins).
struct TargetProperty {
  std::string name;
  std::function<double(const Vec&)> eval;
  std::function<Vec(const Vec&)> grad;
  std::function<bool(const Vec&)> domain_ok = [](const Vec&) { return true; };
  std::optional<Vec> reference;
  int dim = 2;
  Convention convention = Convention::Bloch;

  TargetProperty scaled(double s) const {
    TargetProperty p = *this;
    auto e = eval;
    auto g = grad;
    p.eval = [e, s](const Vec& v) { return s * e(v); };
    p.grad = [g, s](const Vec& v) { return Vec(s * g(v)); };
    return p;
  }
};

inline TargetProperty coherence_property() {
  TargetProperty p;
  p.name = "coherence";
  p.eval = [](const Vec& v) { return v(0) * v(0) + v(1) * v(1); };
  p.grad = [](const Vec& v) { return Vec(Vec3(2 * v(0), 2 * v(1), 0)); };
  return p;
}

inline TargetProperty vz_property() {
  TargetProperty p;
  p.name = "custom-vz";
  p.eval = [](const Vec& v) { return v(2); };
  p.grad = [](const Vec&) { return Vec(Vec3(0, 0, 1)); };
  return p;
}

/// Squared Uhlmann fidelity with a reference Bloch vector w.
inline TargetProperty fidelity_property(const Vec3& w) {
  if (w.norm() > 1.0 + 1e-12) throw Error(ErrorCode::InvalidReference, "reference outside the Bloch ball");
  const double ww = std::min(w.squaredNorm(), 1.0);
  const bool pure_ref = 1.0 - ww <= 1e-14;
  TargetProperty p;
  p.name = "fidelity";
  p.reference = Vec(w);
  p.eval = [w, ww, pure_ref](const Vec& v) {
    double root = pure_ref ? 0.0 : std::sqrt(std::max(0.0, (1.0 - v.squaredNorm()) * (1.0 - ww)));
    return 0.5 * (1.0 + v.dot(w) + root);
  };
  p.grad = [w, ww, pure_ref](const Vec& v) {
    double k0 = 0.0;
    if (!pure_ref) {
      double den = 1.0 - v.squaredNorm();
      if (den <= 0.0) throw Error(ErrorCode::GradientUndefined, "fidelity gradient undefined on the sphere");
      k0 = std::sqrt((1.0 - ww) / den);
    }
    return Vec(0.5 * (Vec(w) - k0 * v));
  };
  p.domain_ok = [pure_ref](const Vec& v) { return pure_ref || v.squaredNorm() < 1.0; };
  return p;
}

/// Purity in either convention: (1 + |v|^2)/2 for Bloch, 1/d + |v|^2 otherwise.
inline TargetProperty purity_property(int d = 2, Convention conv = Convention::Bloch) {
  if (d != 2 && conv == Convention::Bloch) throw Error(ErrorCode::InvalidDimension, "Bloch convention is qubit only");
  TargetProperty p;
  p.name = "purity";
  p.dim = d;
  p.convention = conv;
  if (conv == Convention::Bloch) {
    p.eval = [](const Vec& v) { return 0.5 * (1.0 + v.squaredNorm()); };
    p.grad = [](const Vec& v) { return Vec(v); };
  } else {
    p.eval = [d](const Vec& v) { return 1.0 / d + v.squaredNorm(); };
    p.grad = [](const Vec& v) { return Vec(2.0 * v); };
  }
  return p;
}

/// von Neumann entropy of a qubit as a function of r = |v| (Bloch).
inline TargetProperty von_neumann_property() {
  TargetProperty p;
  p.name = "von_neumann";
  p.eval = [](const Vec& v) {
    double r = v.norm();
    double lp = 0.5 * (1 + r), lm = 0.5 * (1 - r);
    auto xlx = [](double x) { return x > 0 ? x * std::log(x) : 0.0; };
    return -xlx(lp) - xlx(lm);
  };
  p.grad = [](const Vec& v) {
    double r = v.norm();
    if (r > 1.0 - 1e-9) throw Error(ErrorCode::GradientUndefined, "entropy gradient diverges at pure states");
    // dS/dr / r = -atanh(r)/r, which tends to -1 at the origin.
    double k = r < 1e-8 ? -1.0 - r * r / 3.0 : -std::atanh(r) / r;
    return Vec(k * v);
  };
  p.domain_ok = [](const Vec& v) { return v.norm() <= 1.0 - 1e-9; };
  return p;
}

/// Population <k|rho|k> of level k, coherence coordinates in the given basis.
inline TargetProperty population_property(const OperatorBasis& basis, int level) {
  if (level < 0 || level >= basis.dim) throw Error(ErrorCode::InvalidArgument, "level out of range");
  Vec g(basis.J());
  for (int j = 1; j <= basis.J(); ++j) g(j - 1) = basis[j](level, level).real();
  const double d = basis.dim;
  TargetProperty p;
  p.name = "population";
  p.dim = basis.dim;
  p.convention = Convention::Coherence;
  p.eval = [g, d](const Vec& v) { return 1.0 / d + g.dot(v); };
  p.grad = [g](const Vec&) { return g; };
  return p;
}

/// Gradient of f as an operator: sum_j df/dv_j F_j with v in coherence
/// coordinates. For Bloch-convention qubit properties this is g . sigma.
inline CMat gradient_operator(const TargetProperty& f, const StateVector& sv, const OperatorBasis& basis) {
  StateVector s = sv.as(f.convention);
  Vec g = f.grad(s.coords);
  if (f.convention == Convention::Bloch) g *= kSqrt2;
  return operator_of(g, basis);
}

enum class ClassKind { TriviallyControllable, Uncontrollable, Controllable };

inline std::string to_string(ClassKind k) {
  switch (k) {
    case ClassKind::TriviallyControllable: return "trivially_controllable";
    case ClassKind::Uncontrollable: return "uncontrollable";
    case ClassKind::Controllable: return "controllable";
  }
  return "unknown";
}

struct PropertyClass {
  ClassKind kind = ClassKind::Controllable;
  double alignment = 0.0;        // grad f . (Rv + c)
  double alignment_scale = 0.0;  // |grad f| (|R||v| + |c|)
  double collinearity = 0.0;     // |grad f x v|
  double collinearity_scale = 0.0;
};

inline PropertyClass classify_from(const Vec3& g, const Vec3& v, const Vec3& drift, double normR, double normc,
                                   double tol) {
  PropertyClass pc;
  pc.alignment = g.dot(drift);
  pc.alignment_scale = g.norm() * (normR * v.norm() + normc);
  pc.collinearity = g.cross(v).norm();
  pc.collinearity_scale = g.norm() * v.norm();
  if (std::abs(pc.alignment) <= tol * pc.alignment_scale)
    pc.kind = ClassKind::TriviallyControllable;
  else if (pc.collinearity <= tol * pc.collinearity_scale)
    pc.kind = ClassKind::Uncontrollable;
  else
    pc.kind = ClassKind::Controllable;
  return pc;
}

/// Qubit classification in Bloch coordinates.
inline PropertyClass classify_at(const TargetProperty& f, const Dissipator& D, const StateVector& sv,
                                 double tol = 1e-8) {
  StateVector s = sv.as(D.convention);
  if (D.dim != 2 || s.coords.size() != 3) throw Error(ErrorCode::InvalidDimension, "classify_at is qubit only");
  Vec fv = sv.as(f.convention).coords;
  if (!f.domain_ok(fv)) throw Error(ErrorCode::GradientUndefined, "state outside the property domain");
  Vec3 g = to_vec3(f.grad(fv));
  if (f.convention != D.convention) g *= (f.convention == Convention::Bloch ? kSqrt2 : 1.0 / kSqrt2);
  Vec3 v = to_vec3(s.coords);
  Vec3 drift = to_vec3(D.apply(s.coords));
  return classify_from(g, v, drift, D.R.norm(), D.c.norm(), tol);
}

/// Operator-level classification for any dimension: alignment <grad f, L_D rho>,
/// collinearity |[rho, grad f]|.
inline PropertyClass classify_general(const CMat& gradf, const std::vector<LindbladTerm>& terms, const CMat& rho,
                                      double tol = 1e-8) {
  const int d = static_cast<int>(rho.rows());
  if (gradf.rows() != d) throw Error(ErrorCode::DimensionMismatch, "gradient and state dimensions differ");
  if (!gradf.allFinite()) throw Error(ErrorCode::GradientUndefined, "gradient not finite");
  OperatorBasis basis = build_nice_basis(d);
  Dissipator D = dissipator_from_lindblad(terms, basis);
  CMat L = lindblad_action(terms, rho);
  CMat dev = rho - CMat::Identity(d, d) / static_cast<double>(d);
  Vec v = coords_of(dev, basis);
  PropertyClass pc;
  pc.alignment = hs_inner(gradf, L).real();
  pc.alignment_scale = gradf.norm() * (D.R.norm() * v.norm() + D.c.norm());
  pc.collinearity = commutator(rho, gradf).norm();
  pc.collinearity_scale = dev.norm() * gradf.norm();
  if (std::abs(pc.alignment) <= tol * pc.alignment_scale)
    pc.kind = ClassKind::TriviallyControllable;
  else if (pc.collinearity <= tol * pc.collinearity_scale)
    pc.kind = ClassKind::Uncontrollable;
  else
    pc.kind = ClassKind::Controllable;
  return pc;
}

}  // namespace qpp
