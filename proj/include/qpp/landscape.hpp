#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qpp/control_field.hpp"
#include "qpp/properties.hpp"

namespace qpp {

/// Dissipator-induced purity rate v . (Rv + c). Independent of the control.
inline double purity_rate(const Dissipator& D, const Vec& v) { return v.dot(D.apply(v)); }

inline double purity_rate(const Dissipator& D, const StateVector& sv) {
  return purity_rate(D, sv.as(D.convention).coords);
}

enum class LocusKind { Everywhere, Origin, Line, Plane, Ellipsoid, EllipticCylinder, ParallelPlanes, Quadric };

inline std::string to_string(LocusKind k) {
  switch (k) {
    case LocusKind::Everywhere: return "everywhere";
    case LocusKind::Origin: return "origin";
    case LocusKind::Line: return "line";
    case LocusKind::Plane: return "plane";
    case LocusKind::Ellipsoid: return "ellipsoid";
    case LocusKind::EllipticCylinder: return "elliptic_cylinder";
    case LocusKind::ParallelPlanes: return "parallel_planes";
    case LocusKind::Quadric: return "quadric";
  }
  return "unknown";
}

/// Zero set of v . (Rv + c) for a qubit. In the eigenframe w = O^T v of the
/// symmetric part of R = -O diag(d) O^T the locus is
/// sum' d_i (w_i - r_i)^2 = sum' d_i r_i^2 with r_i = c'_i / (2 d_i).
struct StableLocus {
  LocusKind kind = LocusKind::Origin;
  Mat3 O = Mat3::Identity();
  Vec3 d = Vec3::Zero();
  Vec3 r = Vec3::Zero();
  std::vector<bool> zero_axis = {false, false, false};
  double rhs = 0.0;

  Vec3 center() const { return O * r; }
  Vec3 semi_axes() const {
    Vec3 s = Vec3::Zero();
    for (int i = 0; i < 3; ++i)
      if (!zero_axis[i]) s(i) = std::sqrt(std::max(0.0, rhs / d(i)));
    return s;
  }
  /// Direction of the first flat axis (Line, EllipticCylinder).
  Vec3 axis() const {
    for (int i = 0; i < 3; ++i)
      if (zero_axis[i]) return O.col(i);
    return Vec3::Zero();
  }
  /// Normal of a Plane / ParallelPlanes locus.
  Vec3 normal() const {
    for (int i = 0; i < 3; ++i)
      if (!zero_axis[i]) return O.col(i);
    return Vec3::Zero();
  }

  /// Points on the locus inside the Bloch ball.
  template <class Rng>
  std::vector<Vec3> sample(int n, Rng& rng) const {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<Vec3> pts;
    int guard = 0;
    while (static_cast<int>(pts.size()) < n && guard++ < 100 * n + 1000) {
      Vec3 w = Vec3::Zero();
      switch (kind) {
        case LocusKind::Origin: break;
        case LocusKind::Everywhere: w = Vec3(U(rng), U(rng), U(rng)); break;
        case LocusKind::Line: w(axis_index(true, 0)) = U(rng); break;
        case LocusKind::Plane: {
          w(axis_index(true, 0)) = U(rng);
          w(axis_index(true, 1)) = U(rng);
          break;
        }
        case LocusKind::ParallelPlanes: {
          int k = axis_index(false, 0);
          w(axis_index(true, 0)) = U(rng);
          w(axis_index(true, 1)) = U(rng);
          w(k) = (U(rng) < 0 ? 0.0 : 2.0 * r(k));
          break;
        }
        case LocusKind::Ellipsoid:
        case LocusKind::EllipticCylinder: {
          Vec3 g(N(rng), N(rng), N(rng));
          for (int i = 0; i < 3; ++i)
            if (zero_axis[i]) g(i) = 0;
          g.normalize();
          Vec3 s = semi_axes();
          for (int i = 0; i < 3; ++i) w(i) = zero_axis[i] ? U(rng) : r(i) + s(i) * g(i);
          break;
        }
        case LocusKind::Quadric: return pts;
      }
      Vec3 v = O * w;
      if (v.norm() <= 1.0) pts.push_back(v);
    }
    return pts;
  }

 private:
  int axis_index(bool zero, int which) const {
    int seen = 0;
    for (int i = 0; i < 3; ++i)
      if (zero_axis[i] == zero && seen++ == which) return i;
    return 0;
  }
};

inline StableLocus stable_locus(const Dissipator& D) {
  if (D.dim != 2) throw Error(ErrorCode::InvalidDimension, "stable locus geometry is qubit only");
  Mat3 Rs = 0.5 * (D.R + D.R.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> es(-Rs);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigendecomposition failed");
  Vec3 c = to_vec3(D.c);
  StableLocus L;
  L.O = es.eigenvectors();
  L.d = es.eigenvalues();
  Vec3 cp = L.O.transpose() * c;
  double dmax = L.d.cwiseAbs().maxCoeff();
  int nzero = 0;
  bool linear_flat = false;
  for (int i = 0; i < 3; ++i) {
    L.zero_axis[i] = std::abs(L.d(i)) <= 1e-12 * dmax || dmax == 0.0;
    if (L.zero_axis[i]) {
      ++nzero;
      if (std::abs(cp(i)) > 1e-12 * std::max(1.0, dmax)) linear_flat = true;
    } else {
      L.r(i) = cp(i) / (2.0 * L.d(i));
      L.rhs += L.d(i) * L.r(i) * L.r(i);
    }
  }
  bool unital = c.norm() <= 1e-12 * std::max(1.0, dmax);
  if (linear_flat)
    L.kind = LocusKind::Quadric;
  else if (nzero == 3)
    L.kind = LocusKind::Everywhere;
  else if (unital || L.rhs <= 1e-300)
    L.kind = nzero == 0 ? LocusKind::Origin : nzero == 1 ? LocusKind::Line : LocusKind::Plane;
  else
    L.kind = nzero == 0 ? LocusKind::Ellipsoid : nzero == 1 ? LocusKind::EllipticCylinder : LocusKind::ParallelPlanes;
  return L;
}

/// Qubit stable-point test: zero purity rate, and at the origin the drift
/// itself must vanish (no h can rotate the zero vector).
inline bool is_stable_point(const Dissipator& D, const Vec& v, double tol = 1e-10) {
  Vec drift = D.apply(v);
  if (v.norm() <= tol) return drift.norm() <= tol;
  return std::abs(v.dot(drift)) <= tol;
}

inline bool is_stable_point(const Dissipator& D, const StateVector& sv, double tol = 1e-10) {
  return is_stable_point(D, sv.as(D.convention).coords, tol);
}

/// Block test for any dimension: every eigenspace projector P of rho must
/// satisfy P L_D(rho) P = 0.
inline bool is_stable_point(const std::vector<LindbladTerm>& terms, const CMat& rho, double tol = 1e-10) {
  CMat L = lindblad_action(terms, rho);
  SpectralDecomposition sd = eigendecompose_grouped(rho);
  for (const auto& P : sd.projectors)
    if ((P * L * P).norm() > tol) return false;
  return true;
}

/// Hermitian H with -i[H, rho] = B on the off-diagonal blocks of B in the
/// eigenbasis of rho. Diagonal blocks of B must vanish.
inline CMat offdiagonal_hamiltonian(const CMat& rho, const CMat& B, double block_tol, double gap_tol = 1e-9) {
  const int d = static_cast<int>(rho.rows());
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (rho + rho.adjoint()));
  const Vec& lam = es.eigenvalues();
  const CMat& U = es.eigenvectors();
  double range = std::max(lam(d - 1) - lam(0), 1e-300);
  CMat Bt = U.adjoint() * B * U;
  CMat Ht = CMat::Zero(d, d);
  double scale = std::max(B.norm(), 1e-300);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      double gap = lam(j) - lam(k);
      if (std::abs(gap) <= gap_tol * range) {
        if (std::abs(Bt(j, k)) > block_tol * scale)
          throw Error(ErrorCode::NotRealizable, "demand inside a degenerate eigenspace");
        continue;
      }
      Ht(j, k) = cplx(0, -1) * Bt(j, k) / gap;
    }
  CMat H = U * Ht * U.adjoint();
  return 0.5 * (H + H.adjoint());
}

/// Control holding a stable point fixed.
inline ControlField stabilizing_control(const Dissipator& D, const Vec& v, double tol = 1e-10) {
  if (!is_stable_point(D, v, tol)) throw Error(ErrorCode::NotAStablePoint, "state is not a stable point");
  Vec3 x = to_vec3(v);
  Vec3 drift = to_vec3(D.apply(v));
  double n2 = x.squaredNorm();
  if (n2 == 0.0 || drift.norm() == 0.0) return ControlField::from_h(Vec3::Zero());
  return ControlField::from_h(drift.cross(x) / (2.0 * n2));
}

inline ControlField stabilizing_control(const std::vector<LindbladTerm>& terms, const CMat& rho, double tol = 1e-10) {
  if (!is_stable_point(terms, rho, tol)) throw Error(ErrorCode::NotAStablePoint, "state is not a stable point");
  CMat L = lindblad_action(terms, rho);
  return ControlField::from_matrix(offdiagonal_hamiltonian(rho, -L, 1e-6));
}

/// Breakdown point: grad f nonzero and parallel to v while the purity rate
/// is nonzero.
inline bool breakdown_membership(const TargetProperty& f, const Dissipator& D, const StateVector& sv,
                                 double tol = 1e-8) {
  Vec fv = sv.as(f.convention).coords;
  if (!f.domain_ok(fv)) throw Error(ErrorCode::GradientUndefined, "state outside the property domain");
  Vec3 g = to_vec3(f.grad(fv));
  Vec3 v = to_vec3(sv.as(D.convention).coords);
  if (g.norm() <= tol) return false;
  bool collinear = g.cross(v).norm() <= tol * g.norm() * v.norm();
  return collinear && std::abs(purity_rate(D, Vec(v))) > tol;
}

// ---------------------------------------------------------------------------
// Prescribed trajectories

/// Parametrized path u in [0,1] -> coordinates, piecewise cubic Hermite.
/// Without explicit derivatives the knot slopes come from a clamped C1 spline.
struct ParamTrajectory {
  std::vector<double> u;
  std::vector<Vec> states;
  std::vector<Vec> derivs;
  int dim = 2;
  Convention convention = Convention::Bloch;

  void prepare() {
    const std::size_t n = u.size();
    if (n < 2 || states.size() != n) throw Error(ErrorCode::InvalidTrajectory, "need at least two samples");
    for (std::size_t i = 1; i < n; ++i)
      if (!(u[i] > u[i - 1])) throw Error(ErrorCode::InvalidTrajectory, "parameter must be strictly increasing");
    if (!derivs.empty()) {
      if (derivs.size() != n) throw Error(ErrorCode::InvalidTrajectory, "derivative count mismatch");
      return;
    }
    derivs = spline_slopes();
  }

  std::size_t segment(double x) const {
    auto it = std::upper_bound(u.begin(), u.end(), x);
    std::size_t i = it == u.begin() ? 0 : static_cast<std::size_t>(it - u.begin()) - 1;
    return std::min(i, u.size() - 2);
  }

  Vec at(double x) const {
    std::size_t i = segment(x);
    if (x == u[i]) return states[i];
    if (x == u[i + 1]) return states[i + 1];
    double h = u[i + 1] - u[i], s = (x - u[i]) / h;
    double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s;
    double h01 = -2 * s * s * s + 3 * s * s, h11 = s * s * s - s * s;
    return h00 * states[i] + h10 * h * derivs[i] + h01 * states[i + 1] + h11 * h * derivs[i + 1];
  }

  Vec deriv(double x) const {
    std::size_t i = segment(x);
    if (x == u[i]) return derivs[i];
    if (x == u[i + 1]) return derivs[i + 1];
    double h = u[i + 1] - u[i], s = (x - u[i]) / h;
    double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
    double d01 = -6 * s * s + 6 * s, d11 = 3 * s * s - 2 * s;
    return (d00 * states[i] + d01 * states[i + 1]) / h + d10 * derivs[i] + d11 * derivs[i + 1];
  }

 private:
  // Slope of the cubic through the four samples nearest one end.
  Vec end_slope(bool front) const {
    const std::size_t n = u.size(), m = std::min<std::size_t>(n, 4);
    std::vector<std::size_t> idx(m);
    for (std::size_t k = 0; k < m; ++k) idx[k] = front ? k : n - 1 - k;
    const double x0 = u[idx[0]];
    Vec s = Vec::Zero(states[0].size());
    for (std::size_t j = 0; j < m; ++j) {
      // d/dx of the Lagrange basis polynomial L_j at x0.
      double d = 0;
      if (j == 0) {
        for (std::size_t k = 1; k < m; ++k) d += 1.0 / (x0 - u[idx[k]]);
      } else {
        d = 1.0 / (u[idx[j]] - x0);
        for (std::size_t k = 1; k < m; ++k)
          if (k != j) d *= (x0 - u[idx[k]]) / (u[idx[j]] - u[idx[k]]);
      }
      s += d * states[idx[j]];
    }
    return s;
  }

  // C1 cubic spline, clamped with end slopes from local cubics.
  std::vector<Vec> spline_slopes() const {
    const std::size_t n = u.size();
    std::vector<Vec> s(n);
    s[0] = end_slope(true);
    s[n - 1] = end_slope(false);
    if (n <= 2) return s;
    std::vector<double> a(n), b(n), c(n);
    std::vector<Vec> r(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      double h0 = u[i] - u[i - 1], h1 = u[i + 1] - u[i];
      Vec d0 = (states[i] - states[i - 1]) / h0, d1 = (states[i + 1] - states[i]) / h1;
      a[i] = h1;
      b[i] = 2 * (h0 + h1);
      c[i] = h0;
      r[i] = 3 * (h1 * d0 + h0 * d1);
    }
    r[1] -= a[1] * s[0];
    r[n - 2] -= c[n - 2] * s[n - 1];
    for (std::size_t i = 2; i + 1 < n; ++i) {
      double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      r[i] -= w * r[i - 1];
    }
    s[n - 2] = r[n - 2] / b[n - 2];
    for (std::size_t i = n - 2; i-- > 1;) s[i] = (r[i] - c[i] * s[i + 1]) / b[i];
    return s;
  }
};

enum class ViolationReason { CNonpositive, CInfinite, OffLevelSet, BreakdownPoint, BlockCondition };

inline std::string to_string(ViolationReason r) {
  switch (r) {
    case ViolationReason::CNonpositive: return "c_nonpositive";
    case ViolationReason::CInfinite: return "c_infinite";
    case ViolationReason::OffLevelSet: return "off_level_set";
    case ViolationReason::BreakdownPoint: return "breakdown_point";
    case ViolationReason::BlockCondition: return "block_condition";
  }
  return "unknown";
}

struct RealizabilityReport {
  bool realizable = false;
  std::vector<std::pair<double, double>> c_samples;  // NaN marks a stable 0/0 sample
  struct Violation {
    double u;
    ViolationReason reason;
  };
  std::optional<Violation> first_violation;
  // Path ends on a stable point with c -> infinity: reached only as t -> infinity.
  bool asymptotic_endpoint = false;
};

struct RealizabilityOptions {
  double tol = 1e-9;
  int density = 512;
  const TargetProperty* property = nullptr;
  double level_tol = 1e-6;
};

namespace detail {

struct SampleCheck {
  double c = 0.0;  // NaN when stable 0/0
  bool stable = false;
  std::optional<ViolationReason> reason;
};

inline SampleCheck check_sample(const ParamTrajectory& l, const Dissipator& D, double u, const Vec& v0,
                                const RealizabilityOptions& opt, const OperatorBasis* basis) {
  SampleCheck sc;
  Vec x = l.at(u), dx = l.deriv(u);
  Vec drift = D.apply(x);
  double dP = x.dot(dx);
  double pD = x.dot(drift);
  double sP = x.norm() * dx.norm();
  double sD = x.norm() * (D.R.norm() * x.norm() + D.c.norm());
  bool pd_zero = std::abs(pD) <= opt.tol * std::max(sD, 1e-300) || (x.norm() <= opt.tol && drift.norm() <= opt.tol);
  if (!dx.allFinite()) {
    sc.stable = pd_zero;
    sc.c = std::numeric_limits<double>::infinity();
    sc.reason = ViolationReason::CInfinite;
    return sc;
  }
  if (pd_zero) {
    // Pdot_D is quadratic in the distance to the stable set, so "zero" here
    // also covers nearby points; a same-sign ratio there is still a valid c.
    sc.stable = true;
    sc.c = std::numeric_limits<double>::quiet_NaN();
    bool dp_zero = std::abs(dP) <= opt.tol * std::max(sP, 1e-300) || std::abs(dP) <= opt.tol;
    if (!dp_zero) {
      if (pD != 0.0 && dP / pD > 0.0) sc.c = dP / pD;
      else sc.reason = ViolationReason::CInfinite;
    }
  } else {
    sc.c = dP / pD;
    if (!(sc.c > 0.0)) sc.reason = ViolationReason::CNonpositive;
  }
  if (!sc.reason && basis) {
    // Block condition P (dsigma - c L_D sigma) P = 0 on every eigenspace.
    double c = std::isnan(sc.c) ? 0.0 : sc.c;
    CMat rho = density_unchecked(StateVector{l.dim, x, Convention::Coherence}, *basis);
    CMat A = operator_of(dx, *basis) - c * operator_of(drift, *basis);
    double scale = operator_of(dx, *basis).norm() + std::abs(c) * operator_of(drift, *basis).norm();
    SpectralDecomposition sd = eigendecompose_grouped(rho);
    for (const auto& P : sd.projectors)
      if ((P * A * P).norm() > std::max(1e-7 * scale, opt.tol)) sc.reason = ViolationReason::BlockCondition;
  }
  if (!sc.reason && opt.property) {
    const TargetProperty& f = *opt.property;
    if (std::abs(f.eval(x) - f.eval(v0)) > opt.level_tol) sc.reason = ViolationReason::OffLevelSet;
    else if (l.dim == 2 && breakdown_membership(f, D, StateVector{2, x, D.convention}, 1e-8))
      sc.reason = ViolationReason::BreakdownPoint;
  }
  return sc;
}

}  // namespace detail

/// Control-independent realizability: dP/du = c(u) Pdot_D with 0 < c < inf
/// (qubits); for d > 2 the eigenspace block condition is tested as well.
inline RealizabilityReport check_realizability(ParamTrajectory l, const Dissipator& D,
                                               const RealizabilityOptions& opt = {}) {
  l.prepare();
  if (l.convention != D.convention || l.dim != D.dim)
    throw Error(ErrorCode::DimensionMismatch, "trajectory and dissipator conventions differ");
  std::optional<OperatorBasis> basis;
  if (l.dim > 2) basis = build_nice_basis(l.dim);
  const OperatorBasis* bp = basis ? &*basis : nullptr;

  std::vector<double> grid(l.u.begin(), l.u.end());
  double u0 = l.u.front(), u1 = l.u.back();
  for (int k = 0; k < opt.density; ++k) grid.push_back(u0 + (u1 - u0) * k / (opt.density - 1));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  RealizabilityReport rep;
  const Vec v0 = l.states.front();
  double prev_ok = grid.front();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double u = grid[k];
    auto sc = detail::check_sample(l, D, u, v0, opt, bp);
    bool knot = std::binary_search(l.u.begin(), l.u.end(), u);
    if (knot) rep.c_samples.emplace_back(u, sc.c);
    if (sc.reason) {
      // A path may end on a breakdown point but not pass through one.
      if (k + 1 == grid.size() && k > 0 && *sc.reason == ViolationReason::BreakdownPoint) break;
      if (k + 1 == grid.size() && sc.stable && *sc.reason == ViolationReason::CInfinite && k > 0) {
        // Terminal stable point approached with c -> +inf.
        auto prev = detail::check_sample(l, D, grid[k - 1], v0, opt, bp);
        if (!prev.reason && (prev.stable || prev.c > 0)) {
          rep.asymptotic_endpoint = true;
          if (knot) rep.c_samples.back().second = std::numeric_limits<double>::infinity();
          break;
        }
      }
      double lo = prev_ok, hi = u;
      if (k > 0)
        for (int it = 0; it < 60 && hi - lo > 1e-12 * std::max(1.0, std::abs(u1 - u0)); ++it) {
          double mid = 0.5 * (lo + hi);
          if (detail::check_sample(l, D, mid, v0, opt, bp).reason) hi = mid;
          else lo = mid;
        }
      else hi = u;
      rep.first_violation = RealizabilityReport::Violation{hi, *sc.reason};
      rep.realizable = false;
      return rep;
    }
    prev_ok = u;
  }
  rep.realizable = true;
  return rep;
}

/// Time-parametrized path t = phi(u) with velocities dv/dt = l'(u) / c(u).
struct TimedTrajectory {
  std::vector<double> t;
  std::vector<double> u;
  std::vector<Vec> states;
  std::vector<Vec> velocities;
  double final_time = 0.0;
  bool asymptotic = false;
  Vec endpoint;
};

inline TimedTrajectory reparameterize(ParamTrajectory l, const Dissipator& D, const RealizabilityReport& report) {
  if (!report.realizable) throw Error(ErrorCode::NotRealizable, "trajectory is not realizable");
  l.prepare();
  const std::size_t n = l.u.size();
  // c at knots; stable 0/0 knots take the neighbour average (any positive c works).
  std::vector<double> ck(n, std::numeric_limits<double>::quiet_NaN());
  auto c_at = [&](double u) {
    Vec x = l.at(u), dx = l.deriv(u);
    double pD = x.dot(D.apply(x));
    double sD = x.norm() * (D.R.norm() * x.norm() + D.c.norm());
    double dP = x.dot(dx);
    if (std::abs(pD) <= 1e-9 * std::max(sD, 1e-300) && !(pD != 0.0 && dP / pD > 0.0))
      return std::numeric_limits<double>::quiet_NaN();
    return dP / pD;
  };
  for (std::size_t i = 0; i < n; ++i) ck[i] = c_at(l.u[i]);
  std::size_t last = report.asymptotic_endpoint ? n - 1 : n;
  for (std::size_t i = 0; i < last; ++i)
    if (std::isnan(ck[i])) {
      double s = 0;
      int cnt = 0;
      for (std::size_t j = i; j-- > 0;)
        if (!std::isnan(ck[j])) { s += ck[j]; ++cnt; break; }
      for (std::size_t j = i + 1; j < last; ++j)
        if (!std::isnan(ck[j])) { s += ck[j]; ++cnt; break; }
      ck[i] = cnt ? s / cnt : 1.0;
    }

  static const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
  static const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                               0.2369268850561891};
  TimedTrajectory out;
  double t = 0.0;
  for (std::size_t i = 0; i < last; ++i) {
    if (i > 0) {
      double a = l.u[i - 1], b = l.u[i], acc = 0.0;
      for (int q = 0; q < 5; ++q) {
        double uq = 0.5 * (a + b) + 0.5 * (b - a) * gx[q];
        double cq = c_at(uq);
        if (std::isnan(cq)) cq = ck[i - 1] + (ck[i] - ck[i - 1]) * (uq - a) / (b - a);
        acc += gw[q] * cq;
      }
      t += 0.5 * (b - a) * acc;
    }
    out.t.push_back(t);
    out.u.push_back(l.u[i]);
    out.states.push_back(l.states[i]);
    out.velocities.push_back(l.deriv(l.u[i]) / ck[i]);
  }
  out.asymptotic = report.asymptotic_endpoint;
  out.endpoint = l.states.back();
  out.final_time = out.asymptotic ? std::numeric_limits<double>::infinity() : t;
  return out;
}

}  // namespace qpp
