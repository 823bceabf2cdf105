#pragma once

#include <optional>

#include "qpp/operator_space.hpp"

namespace qpp {

/// Coefficients of h in the frame {v, grad f, grad f x v}.
struct AlphaDecomposition {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;
};

/// Qubit fields carry h (Bloch convention, H = h0 I + h . sigma). General
/// fields carry the Hermitian matrix H only.
struct ControlField {
  bool qubit = true;
  Vec3 h = Vec3::Zero();
  double h0 = 0.0;
  CMat H;
  std::optional<AlphaDecomposition> alphas;
  bool ill_conditioned = false;

  static ControlField from_h(const Vec3& h) {
    ControlField f;
    f.h = h;
    return f;
  }
  static ControlField from_matrix(const CMat& H) {
    ControlField f;
    f.qubit = false;
    f.H = H;
    return f;
  }
  double norm() const { return qubit ? h.norm() : H.norm(); }
  CMat matrix() const;
};

/// Qubit factor conventions live here and nowhere else.
/// H = h0 I + h . sigma  <->  h_i = Tr(H sigma_i) / 2.
inline CMat hamiltonian_from_bloch_field(const Vec3& h, double h0 = 0.0) {
  return h0 * pauli::I() + pauli::dot(h);
}

inline Vec3 bloch_field_from_hamiltonian(const CMat& H) {
  if (H.rows() != 2) throw Error(ErrorCode::InvalidDimension, "qubit Hamiltonian expected");
  return Vec3((H * pauli::X()).trace().real() / 2, (H * pauli::Y()).trace().real() / 2,
              (H * pauli::Z()).trace().real() / 2);
}

inline CMat ControlField::matrix() const { return qubit ? hamiltonian_from_bloch_field(h, h0) : H; }

/// Bloch-vector velocity produced by H: vdot = 2 h x v.
inline Vec3 unitary_velocity(const Vec3& h, const Vec3& v) { return 2.0 * h.cross(v); }

/// Coherence-vector velocity of -i[H, rho] for any dimension.
inline Vec unitary_velocity(const CMat& H, const Vec& coherence, const OperatorBasis& basis) {
  CMat rho = operator_of(coherence, basis);
  CMat drho = cplx(0, -1) * commutator(H, rho);
  return coords_of(drho, basis);
}

/// Solve h = a1 v + a2 g + a3 (g x v); requires g not parallel to v.
inline std::optional<AlphaDecomposition> decompose_alpha(const Vec3& h, const Vec3& g, const Vec3& v) {
  Vec3 gxv = g.cross(v);
  if (gxv.norm() <= 1e-14 * (g.norm() * v.norm() + 1e-300)) return std::nullopt;
  Mat3 B;
  B.col(0) = v;
  B.col(1) = g;
  B.col(2) = gxv;
  Vec3 a = B.fullPivLu().solve(h);
  return AlphaDecomposition{a(0), a(1), a(2)};
}

}  // namespace qpp
