#pragma once

#include <algorithm>
#include <cmath>

#include "qpp/core.hpp"

namespace qpp {

/// Dormand-Prince 5(4) step with FSAL and the 4th-order continuous extension.
class DormandPrince {
 public:
  struct Result {
    bool finite = false;
    double err = 0.0;  // scaled RMS error estimate, accept if <= 1
  };

  template <class F>
  Result attempt(F&& f, double t, const Vec& y, const Vec& k1, double h, double rtol, double atol) {
    t0_ = t;
    h_ = h;
    y0_ = y;
    k1_ = k1;
    k2_ = f(t + c2 * h, Vec(y + h * (a21 * k1)));
    k3_ = f(t + c3 * h, Vec(y + h * (a31 * k1 + a32 * k2_)));
    k4_ = f(t + c4 * h, Vec(y + h * (a41 * k1 + a42 * k2_ + a43 * k3_)));
    k5_ = f(t + c5 * h, Vec(y + h * (a51 * k1 + a52 * k2_ + a53 * k3_ + a54 * k4_)));
    k6_ = f(t + h, Vec(y + h * (a61 * k1 + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_)));
    y1_ = y + h * (a71 * k1 + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
    Result r;
    if (!y1_.allFinite()) return r;
    k7_ = f(t + h, y1_);
    if (!k7_.allFinite()) return r;
    Vec e = h * (e1 * k1 + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    double s = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double sc = atol + rtol * std::max(std::abs(y(i)), std::abs(y1_(i)));
      s += (e(i) / sc) * (e(i) / sc);
    }
    r.err = std::sqrt(s / static_cast<double>(y.size()));
    r.finite = std::isfinite(r.err);
    return r;
  }

  const Vec& y1() const { return y1_; }
  const Vec& k7() const { return k7_; }
  double t0() const { return t0_; }
  double h() const { return h_; }

  /// Interpolated state at t0 + theta h, theta in [0, 1].
  Vec dense(double theta) const {
    Vec r2 = y1_ - y0_;
    Vec r3 = h_ * k1_ - r2;
    Vec r4 = r2 - h_ * k7_ - r3;
    Vec r5 = h_ * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
    double t1 = 1.0 - theta;
    return y0_ + theta * (r2 + t1 * (r3 + theta * (r4 + t1 * r5)));
  }

 private:
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  double t0_ = 0, h_ = 0;
  Vec y0_, y1_, k1_, k2_, k3_, k4_, k5_, k6_, k7_;
};

/// Step-size update from the scaled error (order 5 pair).
inline double next_step(double h, double err) {
  double fac = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
  return h * std::clamp(fac, 0.2, 5.0);
}

/// Starting step from the initial slope.
inline double initial_step(const Vec& y, const Vec& f0, double rtol, double atol, double t_span) {
  double d0 = 0, d1 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double sc = atol + rtol * std::abs(y(i));
    d0 += (y(i) / sc) * (y(i) / sc);
    d1 += (f0(i) / sc) * (f0(i) / sc);
  }
  d0 = std::sqrt(d0 / y.size());
  d1 = std::sqrt(d1 / y.size());
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  return std::min(h, 0.01 * t_span);
}

}  // namespace qpp
