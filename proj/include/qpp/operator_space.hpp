#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qpp/core.hpp"

namespace qpp {

/// Orthonormal Hermitian operator basis F_0..F_J with F_0 = I/sqrt(d).
struct OperatorBasis {
  int dim = 0;
  std::vector<CMat> elements;

  int J() const { return dim * dim - 1; }
  const CMat& operator[](int j) const { return elements.at(static_cast<std::size_t>(j)); }
};

using DensityMatrix = CMat;

struct StateVector {
  int dim = 2;
  Vec coords;
  Convention convention = Convention::Coherence;

  static StateVector bloch(double x, double y, double z) {
    return StateVector{2, Vec3(x, y, z), Convention::Bloch};
  }
  static StateVector bloch(const Vec& v) { return StateVector{2, v, Convention::Bloch}; }
  static StateVector coherence(int d, const Vec& v) { return StateVector{d, v, Convention::Coherence}; }

  StateVector as(Convention target) const {
    if (target == convention) return *this;
    if (dim != 2) throw Error(ErrorCode::InvalidDimension, "Bloch convention is qubit only");
    double s = target == Convention::Bloch ? kSqrt2 : 1.0 / kSqrt2;
    return StateVector{dim, coords * s, target};
  }
  double norm() const { return coords.norm(); }
};

struct SpectralDecomposition {
  std::vector<double> eigenvalues;
  std::vector<CMat> projectors;
  double group_tol = 0.0;
};

/// Generalized Gell-Mann basis: symmetric pairs, antisymmetric pairs, then
/// diagonals. For d = 2 this gives sigma_x, sigma_y, sigma_z over sqrt2.
inline OperatorBasis build_nice_basis(int d) {
  if (d < 2) throw Error(ErrorCode::InvalidDimension, "basis dimension must be >= 2");
  OperatorBasis b;
  b.dim = d;
  b.elements.reserve(static_cast<std::size_t>(d * d));
  b.elements.push_back(CMat::Identity(d, d) / std::sqrt(static_cast<double>(d)));
  const double s = 1.0 / std::sqrt(2.0);
  if (d == 2) {
    b.elements.push_back(pauli::X() * s);
    b.elements.push_back(pauli::Y() * s);
    b.elements.push_back(pauli::Z() * s);
    return b;
  }
  for (int j = 0; j < d; ++j)
    for (int k = j + 1; k < d; ++k) {
      CMat m = CMat::Zero(d, d);
      m(j, k) = s;
      m(k, j) = s;
      b.elements.push_back(m);
    }
  for (int j = 0; j < d; ++j)
    for (int k = j + 1; k < d; ++k) {
      CMat m = CMat::Zero(d, d);
      m(j, k) = cplx(0, -s);
      m(k, j) = cplx(0, s);
      b.elements.push_back(m);
    }
  for (int l = 1; l < d; ++l) {
    CMat m = CMat::Zero(d, d);
    double norm = 1.0 / std::sqrt(static_cast<double>(l) * (l + 1));
    for (int j = 0; j < l; ++j) m(j, j) = norm;
    m(l, l) = -l * norm;
    b.elements.push_back(m);
  }
  return b;
}

inline void check_density(const DensityMatrix& rho, double tol = 1e-12) {
  if (rho.rows() != rho.cols()) throw Error(ErrorCode::DimensionMismatch, "density matrix not square");
  if (!is_hermitian(rho, tol)) throw Error(ErrorCode::NotHermitian, "density matrix not Hermitian");
  if (std::abs(rho.trace() - cplx(1.0)) > tol) throw Error(ErrorCode::PositivityViolation, "trace != 1");
  Eigen::SelfAdjointEigenSolver<CMat> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw Error(ErrorCode::PositivityViolation, "negative eigenvalue");
}

inline StateVector to_state_vector(const DensityMatrix& rho, const OperatorBasis& basis,
                                   Convention conv = Convention::Coherence) {
  if (rho.rows() != basis.dim || rho.cols() != basis.dim)
    throw Error(ErrorCode::DimensionMismatch, "density matrix and basis dimensions differ");
  Vec v(basis.J());
  for (int j = 1; j <= basis.J(); ++j) v(j - 1) = (rho * basis[j]).trace().real();
  return StateVector{basis.dim, v, Convention::Coherence}.as(conv);
}

/// rho = I/d + sum_j v_j F_j (coherence coordinates).
inline DensityMatrix density_unchecked(const StateVector& sv, const OperatorBasis& basis) {
  StateVector c = sv.as(Convention::Coherence);
  if (c.dim != basis.dim || c.coords.size() != basis.J())
    throw Error(ErrorCode::DimensionMismatch, "state vector and basis dimensions differ");
  DensityMatrix rho = CMat::Identity(basis.dim, basis.dim) / static_cast<double>(basis.dim);
  for (int j = 1; j <= basis.J(); ++j) rho += c.coords(j - 1) * basis[j];
  return rho;
}

inline DensityMatrix from_state_vector(const StateVector& sv, const OperatorBasis& basis) {
  DensityMatrix rho = density_unchecked(sv, basis);
  Eigen::SelfAdjointEigenSolver<CMat> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw Error(ErrorCode::PositivityViolation, "coordinates outside the state space");
  return rho;
}

/// Expand a traceless operator in the basis: returns Tr(F_j A) for j >= 1.
inline Vec coords_of(const CMat& a, const OperatorBasis& basis) {
  Vec v(basis.J());
  for (int j = 1; j <= basis.J(); ++j) v(j - 1) = (basis[j] * a).trace().real();
  return v;
}

inline CMat operator_of(const Vec& coords, const OperatorBasis& basis) {
  CMat a = CMat::Zero(basis.dim, basis.dim);
  for (int j = 1; j <= basis.J(); ++j) a += coords(j - 1) * basis[j];
  return a;
}

inline double purity(const StateVector& sv) {
  double n2 = sv.coords.squaredNorm();
  if (sv.convention == Convention::Bloch) return 0.5 * (1.0 + n2);
  return 1.0 / sv.dim + n2;
}

/// Eigendecomposition with eigenvalues closer than group_tol * range merged.
inline SpectralDecomposition eigendecompose_grouped(const CMat& a, double group_tol = 1e-9) {
  if (!is_hermitian(a, 1e-10)) throw Error(ErrorCode::NotHermitian, "matrix not Hermitian");
  CMat herm = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(herm);
  const Vec& ev = es.eigenvalues();
  const CMat& U = es.eigenvectors();
  const int n = static_cast<int>(ev.size());
  double range = ev(n - 1) - ev(0);
  double scale = std::max(range, std::max(std::abs(ev(0)), std::abs(ev(n - 1))));
  double thresh = group_tol * std::max(scale, 1e-300);

  SpectralDecomposition out;
  out.group_tol = group_tol;
  int start = 0;
  for (int i = 1; i <= n; ++i) {
    if (i == n || ev(i) - ev(i - 1) > thresh) {
      CMat P = CMat::Zero(n, n);
      double mean = 0;
      for (int k = start; k < i; ++k) {
        P += U.col(k) * U.col(k).adjoint();
        mean += ev(k);
      }
      out.eigenvalues.push_back(mean / (i - start));
      out.projectors.push_back(P);
      start = i;
    }
  }
  return out;
}

/// Rank of a projector, read off its trace.
inline int projector_rank(const CMat& p) { return static_cast<int>(std::lround(p.trace().real())); }

}  // namespace qpp
