#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qpp/control.hpp"

namespace qpp {

enum class Reachability { FiniteBreakdown, StableReachable, TriviallyStable };

inline std::string to_string(Reachability r) {
  switch (r) {
    case Reachability::FiniteBreakdown: return "finite_breakdown";
    case Reachability::StableReachable: return "stable_reachable";
    case Reachability::TriviallyStable: return "trivially_stable";
  }
  return "unknown";
}

struct BreakdownPrediction {
  Reachability reachability = Reachability::FiniteBreakdown;
  double t_b = std::numeric_limits<double>::infinity();  // finite iff FiniteBreakdown
  std::string formula_id;
  std::string region;
  Vec3 v0 = Vec3::Zero();
  ChannelSpec spec;

  bool finite() const { return reachability == Reachability::FiniteBreakdown; }

  static BreakdownPrediction breakdown(double t, std::string id) {
    BreakdownPrediction p;
    p.t_b = t;
    p.formula_id = std::move(id);
    return p;
  }
  static BreakdownPrediction never(Reachability r, std::string id, std::string region = {}) {
    BreakdownPrediction p;
    p.reachability = r;
    p.formula_id = std::move(id);
    p.region = std::move(region);
    return p;
  }
};

namespace detail {

inline double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-13);
}

/// Bit-flip breakdown time, written as A + log(1 + xi - xi e^-A) to avoid overflow.
inline double bitflip_tb(double gamma, double vx, double vy, double vz) {
  double f0 = vx * vx + vy * vy;
  if (vx == 0.0) return std::log1p(vz * vz / f0) / (4 * gamma);
  double xi = vy * vy / (vx * vx);
  double A = vz * vz / (xi * f0);
  return (A + std::log1p(-xi * std::expm1(-A))) / (4 * gamma);
}

}  // namespace detail

/// Coherence breakdown time under the minimal control.
inline BreakdownPrediction tb_coherence(const ChannelSpec& spec, const StateVector& v0s) {
  spec.validate();
  Vec3 v = to_vec3(v0s.as(Convention::Bloch).coords);
  const double f0 = v(0) * v(0) + v(1) * v(1), vz = v(2);
  auto stamp = [&](BreakdownPrediction p) {
    p.v0 = v;
    p.spec = spec;
    return p;
  };
  if (f0 <= 1e-15) return stamp(BreakdownPrediction::never(Reachability::TriviallyStable, "z_axis", "z_axis"));
  const double g = spec.gamma;
  switch (spec.kind) {
    case ChannelKind::Dephasing:
      return stamp(BreakdownPrediction::breakdown(vz * vz / (4 * g * f0), "dephasing_coherence"));
    case ChannelKind::Depolarizing:
      return stamp(BreakdownPrediction::breakdown(3.0 / (8 * g) * std::log1p(vz * vz / f0), "depolarizing_coherence"));
    case ChannelKind::BitFlip:
      if (v(1) == 0.0)
        return stamp(BreakdownPrediction::never(Reachability::StableReachable, "bitflip_coherence", "x_axis_decay"));
      return stamp(BreakdownPrediction::breakdown(detail::bitflip_tb(g, v(0), v(1), vz),
                                                  v(0) == 0.0 ? "bitflip_coherence_vx0_limit" : "bitflip_coherence"));
    case ChannelKind::Relaxation:
    case ChannelKind::RelaxationDephasing: {
      const double g1 = spec.g1(), g2 = spec.g2(), a = spec.a();
      const double om2 = g2 * f0 / g1 - a * a;
      const double thresh = a * a * g1 / g2;
      if (vz == 0.0) return stamp(BreakdownPrediction::breakdown(0.0, "relaxation_coherence_plane"));
      if (std::abs(f0 - thresh) > 1e-12 * std::max(thresh, 1e-300)) {
        if (om2 > 0) {
          double om = std::sqrt(om2);
          double tb = 0.5 / g1 * std::log(((vz - a) * (vz - a) + om2) / (a * a + om2)) +
                      a / (om * g1) * (std::atan((vz - a) / om) + std::atan(a / om));
          return stamp(BreakdownPrediction::breakdown(tb, "relaxation_coherence_outside"));
        }
        double om = std::sqrt(-om2);
        if (vz < a - om) {
          auto F = [&](double z) {
            double x = z - a;
            return 0.5 * std::log(std::abs(x * x - om * om)) + a / (2 * om) * std::log(std::abs((x - om) / (x + om)));
          };
          return stamp(BreakdownPrediction::breakdown((F(vz) - F(0.0)) / g1, "relaxation_coherence_below"));
        }
        std::string region = vz > a + om ? "above_ellipsoid" : (vz == a - om || vz == a + om) ? "on_ellipsoid"
                                                                                             : "inside_ellipsoid";
        return stamp(BreakdownPrediction::never(Reachability::StableReachable, "relaxation_coherence_region", region));
      }
      // Boundary coherence: vz vdot_z = -g1 (vz - a)^2.
      if (vz > 0 && vz >= a)
        return stamp(BreakdownPrediction::never(Reachability::StableReachable, "relaxation_coherence_numeric",
                                                "threshold_above_center"));
      double tb = detail::integrate([&](double z) { return z / (g1 * (z - a) * (z - a)); }, 0.0, vz);
      return stamp(BreakdownPrediction::breakdown(std::abs(tb), "relaxation_coherence_numeric"));
    }
    default:
      throw Error(ErrorCode::InvalidArgument, "no breakdown-time formula for " + to_string(spec.kind) + " coherence");
  }
}

/// Frame of the fixed-p fidelity analysis relative to the channel axis.
struct FidelityFrame {
  Vec3 w, p;
  double alpha_w = 0, alpha_p = 0;
  double theta_p = 0, theta_w = 0;
  double c1 = 0, c2 = 0;
};

inline Vec3 channel_axis(const ChannelSpec& spec) {
  switch (spec.kind) {
    case ChannelKind::Dephasing: return Vec3::UnitZ();
    case ChannelKind::BitFlip: return Vec3::UnitX();
    case ChannelKind::BitPhaseFlip: return Vec3::UnitY();
    default: return Vec3::UnitZ();
  }
}

inline FidelityFrame fidelity_frame(const ChannelSpec& spec, const Vec3& v0, const Vec3& w) {
  FixedPFrame fp = fixed_p_frame(w, v0);
  FidelityFrame fr;
  fr.w = w;
  fr.p = fp.p;
  fr.alpha_w = fp.alpha_w;
  fr.alpha_p = fp.alpha_p;
  Vec3 d = channel_axis(spec);
  fr.theta_p = std::acos(std::clamp(fr.p.dot(d), -1.0, 1.0));
  fr.theta_w = std::acos(std::clamp(w.dot(d), -1.0, 1.0));
  double s2 = std::sin(fr.theta_p) * std::sin(fr.theta_p);
  if (s2 > 0) {
    fr.c1 = fr.alpha_w * std::cos(fr.theta_p) * std::cos(fr.theta_w) / s2;
    fr.c2 = fr.alpha_w * fr.alpha_w * std::cos(fr.theta_p + fr.theta_w) * std::cos(fr.theta_p - fr.theta_w) / (s2 * s2);
  }
  return fr;
}

/// Antiderivative of alpha / ((alpha - c1)^2 - c2), all three signs of c2.
inline double fixed_p_antiderivative(double alpha, double c1, double c2) {
  double x = alpha - c1;
  double I;
  if (c2 < 0) {
    double s = std::sqrt(-c2);
    I = std::atan(x / s) / s;
  } else if (c2 > 0) {
    double s = std::sqrt(c2);
    I = std::log(std::abs((x - s) / (x + s))) / (2 * s);
  } else {
    I = -1.0 / x;
  }
  return 0.5 * std::log(std::abs(x * x - c2)) + c1 * I;
}

/// t_b = [G(alpha_p0) - G(0)] / (2 gamma sin^2 theta_p).
inline double fixed_p_g_time(double gamma, double alpha_p0, double theta_p, double c1, double c2) {
  double s2 = std::sin(theta_p) * std::sin(theta_p);
  return (fixed_p_antiderivative(alpha_p0, c1, c2) - fixed_p_antiderivative(0.0, c1, c2)) / (2 * gamma * s2);
}

struct FixedPReachability {
  bool reachable = false;
  double coplanarity = 0;  // p . (w x d)
  double angle_sum = 0;    // theta_p + theta_w - pi/2
  double margin = 0;       // alpha_p - alpha_w tan(theta_w)
};

/// Fixed-p stable-point reachability under dephasing or bit flip: p, w and the
/// channel axis coplanar, the axis between p and w, alpha_p beyond the stable point.
inline FixedPReachability fixed_p_stable_reachability(const StateVector& v0s, const Vec3& w, const ChannelSpec& spec) {
  if (spec.kind != ChannelKind::Dephasing && spec.kind != ChannelKind::BitFlip)
    throw Error(ErrorCode::InvalidArgument, "fixed-p reachability is defined for dephasing and bit flip");
  Vec3 v0 = to_vec3(v0s.as(Convention::Bloch).coords);
  FidelityFrame fr = fidelity_frame(spec, v0, w);
  Vec3 d = channel_axis(spec);
  FixedPReachability r;
  r.coplanarity = fr.p.dot(w.cross(d));
  r.angle_sum = fr.theta_p + fr.theta_w - 0.5 * std::numbers::pi;
  r.margin = fr.alpha_p - fr.alpha_w * std::tan(fr.theta_w);
  r.reachable = std::abs(r.coplanarity) <= 1e-9 && std::abs(r.angle_sum) <= 1e-9 && r.margin > 1e-9;
  return r;
}

/// Fidelity breakdown time under the fixed-p control (|w| = 1).
inline BreakdownPrediction tb_fidelity(const ChannelSpec& spec, const StateVector& v0s, const Vec3& w) {
  spec.validate();
  if (std::abs(w.norm() - 1.0) > 1e-12) throw Error(ErrorCode::InvalidReference, "fidelity breakdown needs |w| = 1");
  Vec3 v = to_vec3(v0s.as(Convention::Bloch).coords);
  FidelityFrame fr = fidelity_frame(spec, v, w);
  auto stamp = [&](BreakdownPrediction p) {
    p.v0 = v;
    p.spec = spec;
    return p;
  };
  const double g = spec.gamma;
  const double aw = fr.alpha_w, ap = fr.alpha_p;
  switch (spec.kind) {
    case ChannelKind::Depolarizing:
      if (std::abs(aw) <= 1e-12)
        return stamp(BreakdownPrediction::never(Reachability::StableReachable, "depolarizing_fidelity", "origin"));
      return stamp(BreakdownPrediction::breakdown(3.0 / (8 * g) * std::log(v.squaredNorm() / (aw * aw)),
                                                  "depolarizing_fidelity"));
    case ChannelKind::Dephasing:
    case ChannelKind::BitFlip: {
      if (std::abs(aw) <= 1e-12)
        return stamp(BreakdownPrediction::never(Reachability::StableReachable, "fixed_p_fidelity", "alpha_w_zero"));
      double sp = std::sin(fr.theta_p);
      if (std::abs(sp) <= 1e-9)
        return stamp(BreakdownPrediction::breakdown(ap * ap / (4 * g * aw * aw), "fixed_p_theta_p_zero"));
      double c1 = fr.c1, c2 = fr.c2;
      double c2scale = aw * aw / std::pow(sp, 4);
      if (std::abs(c2) <= 1e-12 * c2scale) {
        // Double root at c1: stable point reached asymptotically if it lies in (0, alpha_p].
        if (c1 > 0 && c1 <= ap)
          return stamp(BreakdownPrediction::never(Reachability::StableReachable, "fixed_p_fidelity", "coplanar_segment"));
        return stamp(BreakdownPrediction::breakdown(fixed_p_g_time(g, ap, fr.theta_p, c1, 0.0), "fixed_p_fidelity"));
      }
      return stamp(BreakdownPrediction::breakdown(fixed_p_g_time(g, ap, fr.theta_p, c1, c2), "fixed_p_fidelity"));
    }
    case ChannelKind::Relaxation:
    case ChannelKind::RelaxationDephasing: {
      // u = alpha_p^2 obeys udot = 2 Pdot_D(alpha_w w + sqrt(u) p).
      Dissipator D = builtin_dissipator(spec);
      auto F = [&](double u) {
        Vec3 x = aw * w + std::sqrt(std::max(u, 0.0)) * fr.p;
        return 2.0 * purity_rate(D, Vec(x));
      };
      double u0 = ap * ap;
      double F0 = F(u0);
      double scale = 2.0 * D.R.norm() + D.c.norm();
      if (std::abs(F0) <= 1e-13 * scale)
        return stamp(BreakdownPrediction::never(Reachability::StableReachable, "relaxation_fidelity_numeric",
                                                "on_stable_locus"));
      if (F0 > 0)
        return stamp(BreakdownPrediction::never(Reachability::StableReachable, "relaxation_fidelity_numeric",
                                                "inside_ellipsoid"));
      const int n = 4000;
      for (int k = 0; k < n; ++k) {
        double u = u0 * k / n;
        if (F(u) >= 0)
          return stamp(BreakdownPrediction::never(Reachability::StableReachable, "relaxation_fidelity_numeric",
                                                  "outside_ellipsoid"));
      }
      double tb = detail::integrate([&](double u) { return -1.0 / F(u); }, 0.0, u0);
      return stamp(BreakdownPrediction::breakdown(tb, "relaxation_fidelity_numeric"));
    }
    default:
      throw Error(ErrorCode::InvalidArgument, "no fidelity breakdown formula for " + to_string(spec.kind));
  }
}

/// Closed-form minimal-control bit-flip coherence trajectory.
inline StateVector bitflip_closed_form(const StateVector& v0s, double gamma, double t) {
  Vec3 v0 = to_vec3(v0s.as(Convention::Bloch).coords);
  double vx = v0(0), vy = v0(1), vz = v0(2);
  double f0 = vx * vx + vy * vy;
  double tb = detail::bitflip_tb(gamma, vx, vy, vz);
  if (t < 0 || t >= tb) throw Error(ErrorCode::OutsideDomain, "closed form valid on [0, t_b)");
  double e = std::exp(4 * gamma * t);
  double vy2, Z;
  if (vx == 0.0) {
    vy2 = f0;
    Z = (vz * vz - f0 * (e - 1.0)) / e;
  } else {
    double xi = vy * vy / (vx * vx);
    vy2 = vy * vy * f0 / (vx * vx * e + vy * vy);
    Z = (vz * vz - xi * f0 * std::log((e + xi) / (1.0 + xi))) / e;
  }
  double vx2 = f0 - vy2;
  return StateVector::bloch(std::copysign(std::sqrt(std::max(vx2, 0.0)), vx),
                            std::copysign(std::sqrt(std::max(vy2, 0.0)), vy),
                            std::copysign(std::sqrt(std::max(Z, 0.0)), vz));
}

struct RegionVerdict {
  bool reachable = false;
  std::string label;
};

/// Can the coherence level set of v0 reach a stable point?
inline RegionVerdict coherence_stable_reachability(const ChannelSpec& spec, const StateVector& v0s) {
  Vec3 v = to_vec3(v0s.as(Convention::Bloch).coords);
  double f0 = v(0) * v(0) + v(1) * v(1);
  switch (spec.kind) {
    case ChannelKind::Dephasing:
    case ChannelKind::Depolarizing:
      if (f0 <= 1e-15) return {true, "on_stable_set"};
      return {false, "breakdown"};
    case ChannelKind::BitFlip:
      return {true, "alpha2_steering"};
    case ChannelKind::Relaxation:
    case ChannelKind::RelaxationDephasing: {
      BreakdownPrediction p = tb_coherence(spec, v0s);
      if (p.finite()) return {false, p.formula_id == "relaxation_coherence_outside" ? "above_threshold" : "below_ellipsoid"};
      return {true, p.region};
    }
    default:
      return {false, "not_analyzed"};
  }
}

}  // namespace qpp
