#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "qpp/qpp.hpp"

namespace qtest {

using namespace qpp;

inline std::mt19937_64& rng() {
  static std::mt19937_64 g(20240611);
  return g;
}

inline double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng()); }

/// Uniform point in the ball of the given radius.
inline Vec3 random_ball(double radius = 1.0) {
  for (;;) {
    Vec3 v(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    if (v.norm() <= 1.0) return radius * v;
  }
}

inline Vec3 random_unit() {
  std::normal_distribution<double> n;
  Vec3 v(n(rng()), n(rng()), n(rng()));
  return v.normalized();
}

inline CMat random_density(int d) {
  std::normal_distribution<double> n;
  CMat g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = cplx(n(rng()), n(rng()));
  CMat rho = g * g.adjoint();
  return rho / rho.trace().real();
}

inline CMat random_hermitian(int d) {
  std::normal_distribution<double> n;
  CMat g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = cplx(n(rng()), n(rng()));
  return 0.5 * (g + g.adjoint());
}

inline std::vector<ChannelSpec> builtin_channels() {
  return {ChannelSpec::dephasing(0.7),         ChannelSpec::bit_flip(1.0),
          ChannelSpec::bit_phase_flip(0.4),    ChannelSpec::depolarizing(1.3),
          ChannelSpec::relaxation(1.0, 2.0),   ChannelSpec::relaxation_dephasing(1.0, 0.3, 2.0)};
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace qtest
