#pragma once

// Small-time expansion of the extremal flow and the objects built from it:
// the bang surfaces Gamma, the switching surfaces K, the crossing determinant,
// the splitting loci C1 / C12 and the singular leaf.

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crnsynth/liealg.hpp"
#include "crnsynth/series.hpp"

namespace crnsynth {

class SeriesSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SeriesControl {
  bool singular = false;
  double eps = 1.0;
  static SeriesControl bang(double e) { return {false, e}; }
  static SeriesControl feedback() { return {true, 0.0}; }
};

template <class C>
struct BasicFlowExpansion {
  std::array<BasicSeries<C>, 6> z;  // x, y, z, p1, p2, p3
  SeriesControl control;
  std::string time_var = "t";
  int order() const { return z[0].basis()->order(); }
  Vec3<BasicSeries<C>> q() const { return {z[0], z[1], z[2]}; }
  Vec3<BasicSeries<C>> p() const { return {z[3], z[4], z[5]}; }
};
using FlowExpansion = BasicFlowExpansion<double>;

// Picard iteration of q' = F + uG, p' = -p.(DF + u DG) in the truncated algebra.
// Every iteration fixes one more power of the time variable; after `order`
// iterations the result is the truncated Lie series. F and G are callables
// templated over the scalar type (model functors or SmoothField).
template <class C, class FF, class GG>
BasicFlowExpansion<C> lie_series_flow_generic(const FF& F, const GG& G, const SeriesControl& u,
                                               std::array<BasicSeries<C>, 6> z0, const std::string& tvar = "t") {
  using S = BasicSeries<C>;
  BasisPtr basis;
  for (const auto& s : z0)
    if (s.has_basis()) basis = s.basis();
  if (!basis) throw std::invalid_argument("lie_series_flow: initial state carries no basis");
  if (!basis->has_var(tvar)) throw std::invalid_argument("lie_series_flow: basis lacks time variable " + tvar);
  for (auto& s : z0)
    if (!s.has_basis()) s = S::constant(basis, s.constant_term());
  const int tv = basis->var(tvar);
  auto integ = [&](const S& s) { return (s.has_basis() ? s : S::constant(basis, s.constant_term())).integral(tv); };

  auto GF = [&](const auto& q) { return lie_bracket_at(G, F, q); };
  auto control_at = [&](const Vec3<S>& q, const Vec3<S>& p) -> S {
    if (!u.singular) return S(u.eps);
    const Vec3<S> gfg = lie_bracket_at(GF, G, q);
    const Vec3<S> gff = lie_bracket_at(GF, F, q);
    return -dot(p, gff) / dot(p, gfg);  // PoleError when p.[[G,F],G] vanishes at the base point
  };

  auto z = z0;
  for (int it = 0; it < basis->order(); ++it) {
    const Vec3<S> q{z[0], z[1], z[2]};
    const Vec3<S> p{z[3], z[4], z[5]};
    const S uu = control_at(q, p);
    const Vec3<S> f = F(q);
    const Vec3<S> g = G(q);
    const Vec3<S> pf = covector_jacobian_at(F, q, p);
    const Vec3<S> pg = covector_jacobian_at(G, q, p);
    std::array<S, 6> next;
    for (int i = 0; i < 3; ++i) {
      next[i] = z0[i] + integ(f[i] + uu * g[i]);
      next[3 + i] = z0[3 + i] - integ(pf[i] + uu * pg[i]);
    }
    z = std::move(next);
  }
  BasicFlowExpansion<C> out;
  out.z = std::move(z);
  out.control = u;
  out.time_var = tvar;
  return out;
}

FlowExpansion lie_series_flow(const ControlAffineSystem& sys, const SeriesControl& u,
                              const std::array<TruncatedSeries, 6>& z0, const std::string& tvar = "t");

// Basis (t, w0, s0) and the symbolic start (d, w0 + w_base, s0 + s_base, n) on the target x = d.
BasisPtr target_basis(int order);
std::array<TruncatedSeries, 6> target_start(const ControlAffineSystem& sys, const BasisPtr& b, double w_base = 0.0,
                                            double s_base = 0.0);

// (x, y, z) of the bang flow from the target point (d, w0, s0) with p(0) = n.
std::array<TruncatedSeries, 3> gamma_surface(const ControlAffineSystem& sys, double eps, int order);

struct SwitchingSurface {
  double eps = 1.0;
  int order = 0;
  std::array<TruncatedSeries, 3> K;  // in the (t, s0) basis
  TruncatedSeries w0;                // w0(t, s0) solving Phi = 0
  TruncatedSeries residual;          // Phi composed with w0(t, s0), (t, s0) basis
  FlowExpansion flow;                // bang flow in (t, w0, s0), one order higher
};

// Solves Phi(t; w0, s0) / t = 0 for w0 by Newton in the series algebra.
SwitchingSurface switching_surface_series(const ControlAffineSystem& sys, double eps, int order);

// det(dK/dt, dK/ds0, dGamma/dt) at t = 0.
double crossing_test(const SwitchingSurface& K, double s0);

enum class SplitKind { C1, C12 };
const char* to_string(SplitKind k);

struct SplitOptions {
  int order = 5;
  std::vector<double> w0_grid;
  std::vector<double> s0_grid;
  std::vector<double> t_seeds{-0.05, -0.1, -0.2, 0.05, 0.1, 0.2};
  double t_min = 1e-4;  // rejects the trivial root t = 0
  double t_max = 0.5;
  bool backward_only = true;  // keep t < 0 (extremals traced back from the target)
  int max_iter = 50;
  double tol = 1e-12;
  int phi_checks = 64;  // samples used to check that each arc is switch-free
  std::vector<double> c12_fractions{0.25, 0.5, 0.75};  // seeds for t1 / t
  // C12 chain arcs counted backward from the target: the single arc uses c12_single,
  // the broken one starts with c12_first and switches to -c12_first. Defaults give
  // sigma_- against sigma_+ sigma_- in forward order.
  double c12_single = -1.0;
  double c12_first = -1.0;
};

struct SplitSample {
  int iw = 0, is = 0;
  double w0 = 0, s0 = 0;
  double t = 0;            // common time
  double t1 = 0;           // C12: switch time on the second chain
  double w0p = 0, s0p = 0;  // the other target point
  Vec3d q{};               // common endpoint
  double residual = 0;
  bool switch_free = false;  // no premature zero of Phi on any arc
};

// C1: Gamma_-(t; w0, s0) = Gamma_+(t; w0', s0').
// C12: Gamma_a(t; w0, s0) = endpoint of sigma_b on [0, t1] (Phi(t1) = 0, t1 != 0) then sigma_-b on [t1, t].
std::vector<SplitSample> splitting_locus(const ControlAffineSystem& sys, SplitKind kind, const SplitOptions& opt);
std::vector<SplitSample> splitting_locus_serial(const ControlAffineSystem& sys, SplitKind kind,
                                                const SplitOptions& opt);

struct LeafSample {
  double z0 = 0, z = 0;
  double x = 0, y = 0;
  double x_printed = 0;  // closed form printed for the tutorial leaf
};

// Tutorial leaf through (0, z0^2, z0): y in closed form, x by quadrature of dx/dz = (1+f)/u_s.
std::vector<LeafSample> singular_leaf_tutorial(double a, double c, double z0, const std::vector<double>& zs);
double tutorial_leaf_g_printed(double a, double c, double z0, double z);
// Generic fallback: integrates dq/dz = X_s / (X_s)_z from q0 numerically.
std::vector<LeafSample> singular_leaf_numeric(const ControlAffineSystem& sys, const Vec3d& q0,
                                              const std::vector<double>& zs);

// CSV of the coefficients: component, one exponent column per variable, order, coefficient.
void write_series_csv(std::ostream& os, const std::vector<std::pair<std::string, TruncatedSeries>>& comps);

}  // namespace crnsynth
