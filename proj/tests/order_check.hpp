#pragma once

// Convergence order of the truncated Lie series against a reference integration.
// Both sides run in 113-bit floating point: at t = 1e-4 a degree-4 truncation error
// is ~1e-20, far below double resolution.

#include <array>
#include <cmath>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "crnsynth/liealg.hpp"
#include "crnsynth/lieseries.hpp"

namespace ordercheck {

using Q = boost::multiprecision::cpp_bin_float_quad;
using QS = crnsynth::BasicSeries<Q>;
using Z6 = std::array<Q, 6>;

template <class FF, class GG>
Z6 extremal_rhs_q(const FF& F, const GG& G, const Z6& z, double u) {
  using crnsynth::Vec3;
  const Vec3<Q> q{z[0], z[1], z[2]}, p{z[3], z[4], z[5]};
  const Vec3<Q> f = F(q), g = G(q);
  const Vec3<Q> pf = crnsynth::covector_jacobian_at(F, q, p);
  const Vec3<Q> pg = crnsynth::covector_jacobian_at(G, q, p);
  Z6 d;
  for (int i = 0; i < 3; ++i) {
    d[i] = f[i] + u * g[i];
    d[3 + i] = -(pf[i] + u * pg[i]);
  }
  return d;
}

// classical RK4 with n fixed steps on [0, t]
template <class FF, class GG>
Z6 rk4_q(const FF& F, const GG& G, Z6 z, double u, const Q& t, int n) {
  const Q h = t / n;
  auto axpy = [](const Z6& a, const Q& s, const Z6& b) {
    Z6 r;
    for (int i = 0; i < 6; ++i) r[i] = a[i] + s * b[i];
    return r;
  };
  for (int k = 0; k < n; ++k) {
    const Z6 k1 = extremal_rhs_q(F, G, z, u);
    const Z6 k2 = extremal_rhs_q(F, G, axpy(z, h / 2, k1), u);
    const Z6 k3 = extremal_rhs_q(F, G, axpy(z, h / 2, k2), u);
    const Z6 k4 = extremal_rhs_q(F, G, axpy(z, h, k3), u);
    for (int i = 0; i < 6; ++i) z[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return z;
}

struct OrderFit {
  double slope = 0;
  std::vector<double> t, err;
};

// Least-squares slope of log|series - reference| against log t on n_t log-spaced times in [t_lo, t_hi].
template <class FF, class GG>
OrderFit fit_order(const FF& F, const GG& G, const std::array<double, 6>& z0, double eps, int order,
                   double t_lo = 1e-4, double t_hi = 1e-2, int n_t = 9) {
  const crnsynth::BasisPtr b = crnsynth::MonomialBasis::get({"t"}, order);
  std::array<QS, 6> s0;
  for (int i = 0; i < 6; ++i) s0[i] = QS::constant(b, Q(z0[i]));
  const auto flow = crnsynth::lie_series_flow_generic<Q>(F, G, crnsynth::SeriesControl::bang(eps), s0);
  Z6 zq;
  for (int i = 0; i < 6; ++i) zq[i] = Q(z0[i]);
  OrderFit fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 0; k < n_t; ++k) {
    const double t = t_lo * std::pow(t_hi / t_lo, double(k) / (n_t - 1));
    const Z6 ref = rk4_q(F, G, zq, eps, Q(t), 200);
    Q e = 0;
    for (int i = 0; i < 6; ++i) {
      const Q d = abs(flow.z[i].template evaluate<Q>({Q(t)}) - ref[i]);
      if (d > e) e = d;
    }
    const double ed = static_cast<double>(e);
    fit.t.push_back(t);
    fit.err.push_back(ed);
    const double x = std::log(t), y = std::log(ed);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.slope = (n_t * sxy - sx * sy) / (n_t * sxx - sx * sx);
  return fit;
}

}  // namespace ordercheck
