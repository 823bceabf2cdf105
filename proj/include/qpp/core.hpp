#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qpp {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class ErrorCode {
  InvalidDimension,
  DimensionMismatch,
  PositivityViolation,
  NotHermitian,
  InvalidLindbladOperator,
  InvalidReference,
  GradientUndefined,
  BreakdownPoint,
  NotAStablePoint,
  InvalidTrajectory,
  NotRealizable,
  NumericalFailure,
  OutsideDomain,
  InvalidArgument,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidDimension: return "InvalidDimension";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::PositivityViolation: return "PositivityViolation";
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::InvalidLindbladOperator: return "InvalidLindbladOperator";
    case ErrorCode::InvalidReference: return "InvalidReference";
    case ErrorCode::GradientUndefined: return "GradientUndefined";
    case ErrorCode::BreakdownPoint: return "BreakdownPoint";
    case ErrorCode::NotAStablePoint: return "NotAStablePoint";
    case ErrorCode::InvalidTrajectory: return "InvalidTrajectory";
    case ErrorCode::NotRealizable: return "NotRealizable";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Qubit coordinates come in two normalizations: coherence (basis sigma/sqrt2)
// and Bloch (basis sigma, |v| <= 1). Bloch = sqrt2 * coherence.
enum class Convention { Coherence, Bloch };

inline constexpr double kSqrt2 = 1.41421356237309504880;

inline Vec3 to_vec3(const Vec& v) {
  if (v.size() != 3) throw Error(ErrorCode::DimensionMismatch, "expected a 3-vector");
  return Vec3(v(0), v(1), v(2));
}

inline double frobenius(const CMat& a) { return a.norm(); }

// Hilbert-Schmidt inner product Tr(A^dag B).
inline cplx hs_inner(const CMat& a, const CMat& b) { return (a.adjoint() * b).trace(); }

inline CMat commutator(const CMat& a, const CMat& b) { return a * b - b * a; }

inline bool is_hermitian(const CMat& a, double tol) {
  return a.rows() == a.cols() && (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

namespace pauli {
inline CMat I() { return CMat::Identity(2, 2); }
inline CMat X() {
  CMat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline CMat Y() {
  CMat m(2, 2);
  m << 0, cplx(0, -1), cplx(0, 1), 0;
  return m;
}
inline CMat Z() {
  CMat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
// |0><1| lowers the excited state |1> to |0>.
inline CMat minus() {
  CMat m(2, 2);
  m << 0, 1, 0, 0;
  return m;
}
inline CMat plus() {
  CMat m(2, 2);
  m << 0, 0, 1, 0;
  return m;
}
inline CMat dot(const Vec3& v) { return v(0) * X() + v(1) * Y() + v(2) * Z(); }
}  // namespace pauli

}  // namespace qpp
