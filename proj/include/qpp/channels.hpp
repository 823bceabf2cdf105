#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qpp/operator_space.hpp"

namespace qpp {

struct LindbladTerm {
  CMat op;
  double rate = 0.0;
};

/// Coherence-vector generator of the noise: vdot = R v + c.
struct Dissipator {
  Mat R;
  Vec c;
  int dim = 2;
  Convention convention = Convention::Bloch;
  std::vector<LindbladTerm> source;

  Vec apply(const Vec& v) const { return R * v + c; }
  bool unital(double tol = 1e-12) const { return c.norm() <= tol; }
  double max_rate() const { return std::max(R.cwiseAbs().maxCoeff(), c.cwiseAbs().maxCoeff()); }
};

inline Dissipator operator+(const Dissipator& a, const Dissipator& b) {
  if (a.dim != b.dim || a.convention != b.convention)
    throw Error(ErrorCode::DimensionMismatch, "dissipators differ in dimension or convention");
  Dissipator s = a;
  s.R += b.R;
  s.c += b.c;
  s.source.insert(s.source.end(), b.source.begin(), b.source.end());
  return s;
}

enum class ChannelKind { Dephasing, BitFlip, BitPhaseFlip, Depolarizing, Relaxation, RelaxationDephasing, Custom };

struct ChannelSpec {
  ChannelKind kind = ChannelKind::Dephasing;
  double gamma = 1.0;       // Dephasing, BitFlip, BitPhaseFlip, Depolarizing, Relaxation
  double gamma1 = 1.0;      // RelaxationDephasing
  double gamma_d = 0.0;     // RelaxationDephasing
  double beta_delta = 0.0;  // Relaxation, RelaxationDephasing
  std::vector<LindbladTerm> terms;
  int custom_dim = 2;

  static ChannelSpec dephasing(double g) { return {ChannelKind::Dephasing, g}; }
  static ChannelSpec bit_flip(double g) { return {ChannelKind::BitFlip, g}; }
  static ChannelSpec bit_phase_flip(double g) { return {ChannelKind::BitPhaseFlip, g}; }
  static ChannelSpec depolarizing(double g) { return {ChannelKind::Depolarizing, g}; }
  static ChannelSpec relaxation(double g, double bd) {
    ChannelSpec s{ChannelKind::Relaxation, g};
    s.gamma1 = g;
    s.beta_delta = bd;
    return s;
  }
  static ChannelSpec relaxation_dephasing(double g1, double gd, double bd) {
    ChannelSpec s{ChannelKind::RelaxationDephasing, g1};
    s.gamma1 = g1;
    s.gamma_d = gd;
    s.beta_delta = bd;
    return s;
  }
  static ChannelSpec custom(std::vector<LindbladTerm> t) {
    ChannelSpec s{ChannelKind::Custom};
    s.custom_dim = t.empty() ? 2 : static_cast<int>(t.front().op.rows());
    s.terms = std::move(t);
    return s;
  }

  bool is_relaxation() const {
    return kind == ChannelKind::Relaxation || kind == ChannelKind::RelaxationDephasing;
  }
  /// Ground-state population of the thermal fixed point.
  double p0() const { return 1.0 / (1.0 + std::exp(-beta_delta)); }
  double a() const { return std::min(p0() - 0.5, 0.5 - 1e-15); }
  double g1() const { return kind == ChannelKind::RelaxationDephasing ? gamma1 : gamma; }
  double gd() const { return kind == ChannelKind::RelaxationDephasing ? gamma_d : 0.0; }
  double g2() const { return 2.0 * gd() + 0.5 * g1(); }

  void validate() const {
    auto pos = [](double x, const char* n) {
      if (!(x > 0.0) || !std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, std::string(n) + " must be > 0");
    };
    switch (kind) {
      case ChannelKind::RelaxationDephasing:
        pos(gamma1, "gamma1");
        if (!(gamma_d >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma_d must be >= 0");
        break;
      case ChannelKind::Custom:
        for (const auto& t : terms)
          if (!(t.rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "rates must be >= 0");
        break;
      default:
        pos(gamma, "gamma");
    }
    if (is_relaxation() && !(beta_delta >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "beta_delta must be >= 0");
  }

  std::vector<LindbladTerm> lindblad_terms() const {
    switch (kind) {
      case ChannelKind::Dephasing: return {{pauli::Z(), gamma}};
      case ChannelKind::BitFlip: return {{pauli::X(), gamma}};
      case ChannelKind::BitPhaseFlip: return {{pauli::Y(), gamma}};
      case ChannelKind::Depolarizing:
        return {{pauli::X(), gamma / 3}, {pauli::Y(), gamma / 3}, {pauli::Z(), gamma / 3}};
      case ChannelKind::Relaxation:
      case ChannelKind::RelaxationDephasing: {
        double pg = 0.5 + a();
        std::vector<LindbladTerm> t{{pauli::minus(), g1() * pg}, {pauli::plus(), g1() * (1.0 - pg)}};
        if (gd() > 0) t.push_back({pauli::Z(), gd()});
        return t;
      }
      case ChannelKind::Custom: return terms;
    }
    return {};
  }
};

inline std::string to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::Dephasing: return "dephasing";
    case ChannelKind::BitFlip: return "bit_flip";
    case ChannelKind::BitPhaseFlip: return "bit_phase_flip";
    case ChannelKind::Depolarizing: return "depolarizing";
    case ChannelKind::Relaxation: return "relaxation";
    case ChannelKind::RelaxationDephasing: return "relaxation_dephasing";
    case ChannelKind::Custom: return "custom";
  }
  return "unknown";
}

/// sum_a gamma_a (L rho L^dag - 1/2 {L^dag L, rho})
inline CMat lindblad_action(const std::vector<LindbladTerm>& terms, const CMat& rho) {
  CMat out = CMat::Zero(rho.rows(), rho.cols());
  for (const auto& t : terms) {
    if (t.op.rows() != rho.rows() || t.op.cols() != rho.cols())
      throw Error(ErrorCode::DimensionMismatch, "Lindblad operator and state dimensions differ");
    CMat LdL = t.op.adjoint() * t.op;
    out += t.rate * (t.op * rho * t.op.adjoint() - 0.5 * (LdL * rho + rho * LdL));
  }
  return out;
}

inline Dissipator dissipator_from_lindblad(const std::vector<LindbladTerm>& terms, const OperatorBasis& basis,
                                           Convention conv = Convention::Coherence) {
  const int d = basis.dim;
  for (const auto& t : terms) {
    if (t.op.rows() != d || t.op.cols() != d)
      throw Error(ErrorCode::DimensionMismatch, "Lindblad operator dimension differs from basis");
    if (std::abs(t.op.trace()) > 1e-12)
      throw Error(ErrorCode::InvalidLindbladOperator, "Lindblad operators must be traceless");
  }
  const int J = basis.J();
  Dissipator D;
  D.dim = d;
  D.convention = Convention::Coherence;
  D.source = terms;
  D.R.resize(J, J);
  for (int j = 1; j <= J; ++j) {
    CMat Lj = lindblad_action(terms, basis[j]);
    for (int i = 1; i <= J; ++i) D.R(i - 1, j - 1) = (basis[i] * Lj).trace().real();
  }
  CMat LI = lindblad_action(terms, CMat::Identity(d, d));
  D.c.resize(J);
  for (int j = 1; j <= J; ++j) D.c(j - 1) = (basis[j] * LI).trace().real() / d;
  if (conv == Convention::Bloch) {
    if (d != 2) throw Error(ErrorCode::InvalidDimension, "Bloch convention is qubit only");
    D.c *= kSqrt2;
    D.convention = Convention::Bloch;
  }
  return D;
}

/// Closed-form qubit (R, c) in the Bloch convention.
inline Dissipator builtin_dissipator(const ChannelSpec& spec) {
  spec.validate();
  Dissipator D;
  D.dim = 2;
  D.convention = Convention::Bloch;
  D.R = Mat::Zero(3, 3);
  D.c = Vec::Zero(3);
  const double g = spec.gamma;
  switch (spec.kind) {
    case ChannelKind::Dephasing: D.R.diagonal() << -2 * g, -2 * g, 0; break;
    case ChannelKind::BitFlip: D.R.diagonal() << 0, -2 * g, -2 * g; break;
    case ChannelKind::BitPhaseFlip: D.R.diagonal() << -2 * g, 0, -2 * g; break;
    case ChannelKind::Depolarizing: D.R.diagonal().setConstant(-4.0 / 3.0 * g); break;
    case ChannelKind::Relaxation:
    case ChannelKind::RelaxationDephasing:
      D.R.diagonal() << -spec.g2(), -spec.g2(), -spec.g1();
      D.c(2) = 2 * spec.g1() * spec.a();
      break;
    case ChannelKind::Custom: {
      OperatorBasis b = build_nice_basis(spec.custom_dim);
      return dissipator_from_lindblad(spec.terms, b, spec.custom_dim == 2 ? Convention::Bloch : Convention::Coherence);
    }
  }
  D.source = spec.lindblad_terms();
  return D;
}

inline Vec apply_dissipator(const Dissipator& D, const StateVector& v) {
  StateVector s = v.as(D.convention);
  if (s.dim != D.dim || s.coords.size() != D.R.cols())
    throw Error(ErrorCode::DimensionMismatch, "state and dissipator dimensions differ");
  return D.apply(s.coords);
}

}  // namespace qpp
