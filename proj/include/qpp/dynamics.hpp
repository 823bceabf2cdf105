#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qpp/control.hpp"
#include "qpp/ode.hpp"

namespace qpp {

struct IntegratorConfig {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  double t_max = 10.0;
  double h_max = 0.0;       // 0 selects 1e6 * largest channel rate
  double stable_tol = 1e-8;
  double event_tol = 0.0;   // 0 selects 1e-9 * t_max
  long max_steps = 2000000;

  void validate() const {
    auto pos = [](double x, const char* n) {
      if (!(x > 0.0)) throw Error(ErrorCode::InvalidArgument, std::string(n) + " must be > 0");
    };
    pos(rtol, "rtol");
    pos(atol, "atol");
    pos(max_step, "max_step");
    pos(t_max, "t_max");
    pos(stable_tol, "stable_tol");
    if (!std::isfinite(t_max)) throw Error(ErrorCode::InvalidArgument, "t_max must be finite");
    if (rtol < 1e-14) throw Error(ErrorCode::InvalidArgument, "rtol must be >= 1e-14");
    if (h_max < 0.0 || event_tol < 0.0) throw Error(ErrorCode::InvalidArgument, "caps must be >= 0");
  }
};

enum class Termination { HorizonReached, Breakdown, StableConverged, IntegrationFailure };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::HorizonReached: return "horizon";
    case Termination::Breakdown: return "breakdown";
    case Termination::StableConverged: return "stable";
    case Termination::IntegrationFailure: return "failure";
  }
  return "unknown";
}

struct Sample {
  double t = 0.0;
  Vec v;
  ControlField control;
  double f = std::numeric_limits<double>::quiet_NaN();
  double purity = 0.0;
};

struct SimulationResult {
  std::vector<Sample> samples;
  Termination termination = Termination::HorizonReached;
  double t_event = 0.0;  // breakdown, convergence or failure time
  std::string reason;
  double h_max = 0.0;
  double max_constraint_residual = 0.0;
  double breakdown_collinearity = std::numeric_limits<double>::quiet_NaN();
  int dim = 2;
  Convention convention = Convention::Bloch;

  const Sample& final() const { return samples.back(); }

  /// Largest |f(t) - f(0)| over samples whose control is below frac * h_max.
  double max_f_drift(double frac = 0.9) const {
    double m = 0.0;
    for (const auto& s : samples)
      if (s.control.norm() <= frac * h_max) m = std::max(m, std::abs(s.f - samples.front().f));
    return m;
  }
};

/// Breakdown time of a finished run, if any.
inline std::optional<double> detect_breakdown_time(const SimulationResult& r) {
  if (r.termination == Termination::Breakdown) return r.t_event;
  return std::nullopt;
}

using ControlLaw = std::function<ControlField(double t, const Vec& v)>;

/// vdot for the coordinates in D's convention.
inline Vec controlled_velocity(const Dissipator& D, const OperatorBasis* basis, const ControlField& cf, const Vec& v) {
  Vec drift = D.apply(v);
  if (D.dim == 2 && D.convention == Convention::Bloch) {
    Vec3 h = cf.qubit ? cf.h : bloch_field_from_hamiltonian(cf.H);
    return unitary_velocity(h, to_vec3(v)) + drift;
  }
  if (cf.qubit && cf.h.isZero(0)) return drift;
  return unitary_velocity(cf.matrix(), v, *basis) + drift;
}

struct RunOptions {
  const TargetProperty* property = nullptr;
  bool detect_breakdown = true;
  bool detect_stable = true;
};

namespace detail {

inline bool field_bad(const ControlField& cf, double h_max) {
  double n = cf.norm();
  return !std::isfinite(n) || n >= h_max;
}

inline ControlField safe_control(const ControlLaw& law, double t, const Vec& v) {
  try {
    return law(t, v);
  } catch (const Error&) {
    ControlField cf;
    cf.h = Vec3::Constant(std::numeric_limits<double>::infinity());
    return cf;
  }
}

}  // namespace detail

/// Adaptive closed-loop integration with breakdown and convergence events.
inline SimulationResult integrate_controlled(const Dissipator& D, const Vec& v0, const ControlLaw& law,
                                             const IntegratorConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  std::optional<OperatorBasis> basis;
  if (!(D.dim == 2 && D.convention == Convention::Bloch)) basis = build_nice_basis(D.dim);
  const OperatorBasis* bp = basis ? &*basis : nullptr;
  const double h_max = cfg.h_max > 0 ? cfg.h_max : 1e6 * D.max_rate();
  const double event_tol = cfg.event_tol > 0 ? cfg.event_tol : 1e-9 * cfg.t_max;

  SimulationResult res;
  res.dim = D.dim;
  res.convention = D.convention;
  res.h_max = h_max;

  const bool qubit = D.dim == 2 && D.convention == Convention::Bloch;
  auto residual_of = [&](const ControlField& cf, const Vec& v) {
    if (!opt.property || !qubit || !cf.qubit || !std::isfinite(cf.norm())) return;
    const TargetProperty& f = *opt.property;
    Vec fv = StateVector{2, v, Convention::Bloch}.as(f.convention).coords;
    if (!f.domain_ok(fv)) return;
    Vec3 g = to_vec3(f.grad(fv));
    res.max_constraint_residual = std::max(res.max_constraint_residual, constraint_residual(g, to_vec3(v), cf.h, D));
  };
  // Sine of the angle between grad f and v (qubit runs with a property), else NaN.
  auto collinearity_at = [&](const Vec& v) {
    double c = std::numeric_limits<double>::quiet_NaN();
    if (!opt.property || !qubit) return c;
    Vec fv = StateVector{2, v, Convention::Bloch}.as(opt.property->convention).coords;
    if (!opt.property->domain_ok(fv)) return c;
    Vec3 g = to_vec3(opt.property->grad(fv));
    Vec3 x = to_vec3(v);
    return g.cross(x).norm() / std::max(g.norm() * x.norm(), 1e-300);
  };
  auto control = [&](double t, const Vec& v) {
    ControlField cf = detail::safe_control(law, t, v);
    residual_of(cf, v);
    return cf;
  };
  auto rhs = [&](double t, const Vec& v) -> Vec {
    ControlField cf = control(t, v);
    if (!std::isfinite(cf.norm())) return Vec::Constant(v.size(), std::numeric_limits<double>::quiet_NaN());
    return controlled_velocity(D, bp, cf, v);
  };
  auto record = [&](double t, const Vec& v, const ControlField& cf) {
    Sample s;
    s.t = t;
    s.v = v;
    s.control = cf;
    if (opt.property) s.f = opt.property->eval(StateVector{D.dim, v, D.convention}.as(opt.property->convention).coords);
    s.purity = purity(StateVector{D.dim, v, D.convention});
    res.samples.push_back(std::move(s));
  };

  double t = 0.0;
  Vec y = v0;
  ControlField cf = control(t, y);
  if (opt.detect_breakdown && detail::field_bad(cf, h_max)) {
    record(t, y, cf);
    res.termination = Termination::Breakdown;
    res.t_event = 0.0;
    res.reason = "uncontrollable initial state";
    return res;
  }
  Vec k1 = controlled_velocity(D, bp, cf, y);
  record(t, y, cf);
  if (!k1.allFinite()) {
    res.termination = Termination::IntegrationFailure;
    res.reason = "non-finite initial velocity";
    return res;
  }
  double h = std::min(initial_step(y, k1, cfg.rtol, cfg.atol, cfg.t_max), cfg.max_step);
  bool stable_prev = false;
  DormandPrince dp;
  long steps = 0;

  while (t < cfg.t_max) {
    if (++steps > cfg.max_steps) {
      res.termination = Termination::IntegrationFailure;
      res.t_event = t;
      res.reason = "step limit reached";
      return res;
    }
    h = std::min({h, cfg.max_step, cfg.t_max - t});
    if (h <= 1e-15 * std::max(1.0, std::abs(t))) {
      // Steps collapsing at a breakdown point before the field reaches the cap.
      double col = collinearity_at(y);
      bool at_breakdown = opt.detect_breakdown && (cf.norm() > 0.1 * h_max || col <= 1e-6);
      res.termination = at_breakdown ? Termination::Breakdown : Termination::IntegrationFailure;
      res.t_event = t;
      res.reason = at_breakdown ? "field cap beyond time resolution" : "step size underflow";
      if (at_breakdown) res.breakdown_collinearity = col;
      return res;
    }
    auto r = dp.attempt(rhs, t, y, k1, h, cfg.rtol, cfg.atol);
    if (!r.finite) {
      h *= 0.25;
      continue;
    }
    if (r.err > 1.0) {
      h = next_step(h, r.err);
      continue;
    }
    double t_new = (h == cfg.t_max - t) ? cfg.t_max : t + h;
    Vec y_new = dp.y1();
    ControlField cf_new = control(t_new, y_new);
    if (opt.detect_breakdown && detail::field_bad(cf_new, h_max)) {
      double lo = 0.0, hi = 1.0;
      Vec y_lo = y;
      ControlField cf_lo = cf;
      while ((hi - lo) * h > event_tol) {
        double mid = 0.5 * (lo + hi);
        Vec ym = dp.dense(mid);
        ControlField cm = control(t + mid * h, ym);
        if (detail::field_bad(cm, h_max)) {
          hi = mid;
        } else {
          lo = mid;
          y_lo = ym;
          cf_lo = cm;
        }
      }
      if (lo > 0.0) record(t + lo * h, y_lo, cf_lo);
      res.termination = Termination::Breakdown;
      res.t_event = t + hi * h;
      res.breakdown_collinearity = collinearity_at(dp.dense(hi));
      return res;
    }
    k1 = dp.k7();
    t = t_new;
    y = y_new;
    cf = cf_new;
    record(t, y, cf);

    bool slow = k1.norm() <= cfg.stable_tol;
    if (opt.detect_stable && slow && stable_prev) {
      bool stable = qubit ? is_stable_point(D, y, std::max(cfg.stable_tol, 1e-10))
                          : is_stable_point(D.source, density_unchecked(StateVector{D.dim, y, D.convention}, *bp),
                                            std::max(cfg.stable_tol, 1e-10));
      if (stable) {
        res.termination = Termination::StableConverged;
        res.t_event = t;
        return res;
      }
    }
    stable_prev = slow;
    double h_next = next_step(h, r.err);
    // Near the cap, stop growing the step so the event stays bracketed.
    if (cf.norm() > 0.1 * h_max) h_next = std::min(h_next, h);
    h = h_next;
  }
  res.termination = Termination::HorizonReached;
  res.t_event = t;
  return res;
}

/// Control law realizing a synthesis policy for property f under D.
inline ControlLaw make_control_law(const TargetProperty& f, const Dissipator& D, const StateVector& v0,
                                   const SynthesisPolicy& policy, double tol = 1e-8) {
  const bool qubit = D.dim == 2 && D.convention == Convention::Bloch;
  switch (policy.mode) {
    case PolicyMode::MinimalAlpha3: {
      if (qubit) {
        double nR = D.R.norm(), nc = D.c.norm();
        return [f, D, nR, nc, tol](double, const Vec& v) {
          Vec3 x = to_vec3(v);
          Vec fv = StateVector{2, v, Convention::Bloch}.as(f.convention).coords;
          if (!f.domain_ok(fv)) throw Error(ErrorCode::GradientUndefined, "outside property domain");
          Vec3 g = to_vec3(f.grad(fv));
          if (f.convention == Convention::Coherence) g /= kSqrt2;
          return minimal_field(g, x, to_vec3(D.apply(v)), nR, nc, tol);
        };
      }
      OperatorBasis basis = build_nice_basis(D.dim);
      return [f, D, basis, tol](double, const Vec& v) {
        StateVector sv{D.dim, v, D.convention};
        CMat rho = density_unchecked(sv, basis);
        CMat gradf = gradient_operator(f, sv, basis);
        CMat LD = operator_of(D.apply(v), basis);
        double align = hs_inner(gradf, LD).real();
        double scale = gradf.norm() * (D.R.norm() * v.norm() + D.c.norm());
        if (std::abs(align) <= tol * scale) return ControlField::from_matrix(CMat::Zero(D.dim, D.dim));
        return synthesize_general(gradf, LD, rho, tol);
      };
    }
    case PolicyMode::FixedP: {
      if (!qubit || !f.reference) throw Error(ErrorCode::InvalidArgument, "fixed-p control needs a qubit fidelity");
      Vec3 w = to_vec3(*f.reference);
      return [w, D](double, const Vec& v) { return fixed_p_control(w, to_vec3(v), D); };
    }
    case PolicyMode::Alpha2Steering: {
      Vec x = v0.as(Convention::Bloch).coords;
      Alpha2Steering s = alpha2_steering(v0, D, x(0) * x(0) + x(1) * x(1));
      return [s](double, const Vec& v) { return s.field(to_vec3(v)); };
    }
    case PolicyMode::TrajectoryPrescribed: {
      if (!policy.path) throw Error(ErrorCode::InvalidArgument, "prescribed policy needs a path");
      const TimedTrajectory& p = *policy.path;
      std::vector<ControlField> fields = trajectory_control(p, D);
      // Feedforward from the cubic Hermite reference (state, velocity) in t.
      return [p, fields, D](double t, const Vec&) {
        const auto& ts = p.t;
        if (t <= ts.front()) return fields.front();
        if (t >= ts.back()) return fields.back();
        auto it = std::upper_bound(ts.begin(), ts.end(), t);
        std::size_t i = static_cast<std::size_t>(it - ts.begin()) - 1;
        double h = ts[i + 1] - ts[i], s = (t - ts[i]) / h;
        const Vec &y0 = p.states[i], &y1 = p.states[i + 1];
        const Vec &m0 = p.velocities[i], &m1 = p.velocities[i + 1];
        Vec v = (2 * s * s * s - 3 * s * s + 1) * y0 + (s * s * s - 2 * s * s + s) * h * m0 +
                (-2 * s * s * s + 3 * s * s) * y1 + (s * s * s - s * s) * h * m1;
        Vec vd = (6 * s * s - 6 * s) / h * (y0 - y1) + (3 * s * s - 4 * s + 1) * m0 + (3 * s * s - 2 * s) * m1;
        Vec3 x = to_vec3(v);
        double n2 = x.squaredNorm();
        if (n2 == 0.0) return ControlField::from_h(Vec3::Zero());
        Vec3 B = to_vec3(vd) - to_vec3(D.apply(v));
        return ControlField::from_h(x.cross(B) / (2.0 * n2));
      };
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown policy");
}

/// Tracked simulation: the control is re-synthesized at every stage.
inline SimulationResult simulate_tracked(const TargetProperty& f, const Dissipator& D, const StateVector& v0,
                                         const SynthesisPolicy& policy, IntegratorConfig cfg) {
  if (policy.h_max > 0) cfg.h_max = policy.h_max;
  StateVector s = v0.as(D.convention);
  ControlLaw law = make_control_law(f, D, s, policy);
  RunOptions opt;
  opt.property = &f;
  return integrate_controlled(D, s.coords, law, cfg, opt);
}

/// Uncontrolled evolution vdot = Rv + c.
inline SimulationResult simulate_free(const Dissipator& D, const StateVector& v0, IntegratorConfig cfg) {
  StateVector s = v0.as(D.convention);
  RunOptions opt;
  opt.detect_breakdown = false;
  const int d = D.dim;
  ControlLaw zero = [d](double, const Vec&) {
    return d == 2 ? ControlField::from_h(Vec3::Zero()) : ControlField::from_matrix(CMat::Zero(d, d));
  };
  return integrate_controlled(D, s.coords, zero, cfg, opt);
}

/// Recorded run as a parametrized path u = t / t_end with exact velocities.
inline ParamTrajectory to_param_trajectory(const SimulationResult& r, const Dissipator& D) {
  ParamTrajectory l;
  l.dim = r.dim;
  l.convention = r.convention;
  std::optional<OperatorBasis> basis;
  if (!(D.dim == 2 && D.convention == Convention::Bloch)) basis = build_nice_basis(D.dim);
  double T = r.samples.back().t;
  if (!(T > 0)) throw Error(ErrorCode::InvalidTrajectory, "run has zero duration");
  for (const auto& s : r.samples) {
    l.u.push_back(s.t / T);
    l.states.push_back(s.v);
    l.derivs.push_back(T * controlled_velocity(D, basis ? &*basis : nullptr, s.control, s.v));
  }
  return l;
}

}  // namespace qpp
