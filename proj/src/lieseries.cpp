#include "crnsynth/lieseries.hpp"

#include <cmath>
#include <ostream>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <spdlog/spdlog.h>

#include "crnsynth/ode.hpp"
#include "crnsynth/singular.hpp"

namespace crnsynth {

FlowExpansion lie_series_flow(const ControlAffineSystem& sys, const SeriesControl& u,
                              const std::array<TruncatedSeries, 6>& z0, const std::string& tvar) {
  return lie_series_flow_generic<double>(sys.drift(), sys.control(), u, z0, tvar);
}

BasisPtr target_basis(int order) {
  if (order < 1) throw std::invalid_argument("series order must be >= 1");
  return MonomialBasis::get({"t", "w0", "s0"}, order);
}

std::array<TruncatedSeries, 6> target_start(const ControlAffineSystem& sys, const BasisPtr& b, double w_base,
                                            double s_base) {
  const Vec3d n = sys.target().normal;
  if (std::abs(n[0] - 1.0) > 1e-12) throw std::invalid_argument("series engine expects the target x = d");
  using S = TruncatedSeries;
  return {S::constant(b, sys.target().level), S::variable(b, "w0", w_base), S::variable(b, "s0", s_base),
          S::constant(b, n[0]),               S::constant(b, n[1]),          S::constant(b, n[2])};
}

std::array<TruncatedSeries, 3> gamma_surface(const ControlAffineSystem& sys, double eps, int order) {
  const BasisPtr b = target_basis(order);
  const FlowExpansion f = lie_series_flow(sys, SeriesControl::bang(eps), target_start(sys, b));
  return {f.z[0], f.z[1], f.z[2]};
}

namespace {

TruncatedSeries switching_function(const ControlAffineSystem& sys, const FlowExpansion& f) {
  const Vec3<TruncatedSeries> g = sys.control()(f.q());
  return dot(f.p(), g);
}

}  // namespace

SwitchingSurface switching_surface_series(const ControlAffineSystem& sys, double eps, int order) {
  using S = TruncatedSeries;
  const BasisPtr b = target_basis(order + 1);
  SwitchingSurface out;
  out.eps = eps;
  out.order = order;
  out.flow = lie_series_flow(sys, SeriesControl::bang(eps), target_start(sys, b));
  const S phi = switching_function(sys, out.flow);
  S Q;
  try {
    Q = phi.divide_by_var(b->var("t"), 1e-10);
  } catch (const std::domain_error&) {
    throw SeriesSolveError("Phi does not vanish on the target; no switching surface through it");
  }
  const S Qw = Q.derivative("w0");

  // constant term: Q(0, w, 0) = 0
  double w = 0.0;
  for (int it = 0; it < 50; ++it) {
    const D1 r = Q.evaluate<D1>({D1(0.0), D1(w, 1.0), D1(0.0)});
    if (std::abs(r.d) < 1e-14) throw SeriesSolveError("linear coefficient of Phi/t in w0 vanishes");
    const double step = r.v / r.d;
    w -= step;
    if (std::abs(step) < 1e-15) break;
  }
  const S tS = S::variable(b, "t");
  const S sS = S::variable(b, "s0");
  S W = S::constant(b, w);
  for (int it = 0; it < order + 3; ++it) {
    const S qc = Q.compose({tS, W, sS});
    const S qwc = Qw.compose({tS, W, sS});
    if (std::abs(qwc.constant_term()) < 1e-14) throw SeriesSolveError("linear coefficient of Phi/t in w0 vanishes");
    W = W - qc / qwc;
  }
  const BasisPtr bts = MonomialBasis::get({"t", "s0"}, order);
  for (int i = 0; i < 3; ++i) out.K[i] = out.flow.z[i].compose({tS, W, sS}).rebase(bts);
  out.w0 = W.rebase(bts);
  out.residual = phi.compose({tS, W, sS}).rebase(bts);
  return out;
}

double crossing_test(const SwitchingSurface& K, double s0) {
  Vec3d kt, ks, gt;
  const double w = K.w0.evaluate<double>({0.0, s0});
  for (int i = 0; i < 3; ++i) {
    kt[i] = K.K[i].derivative("t").evaluate<double>({0.0, s0});
    ks[i] = K.K[i].derivative("s0").evaluate<double>({0.0, s0});
    gt[i] = K.flow.z[i].derivative("t").evaluate<double>({0.0, w, s0});
  }
  return det3(kt, ks, gt);
}

const char* to_string(SplitKind k) { return k == SplitKind::C1 ? "C1" : "C12"; }

namespace {

// Flows shared by all grid nodes.
struct SplitContext {
  const ControlAffineSystem* sys = nullptr;
  FlowExpansion plus, minus;  // from the target, (t, w0, s0)
  FlowExpansion general;      // second C12 arc from a free (q, p) near (d, 0, 0, n)
  TruncatedSeries q_first;    // Phi along the first C12 arc divided by t: zeros are the nontrivial switches
  double eps_a = -1.0, eps_b = -1.0;
  std::array<double, 6> base{};
  bool has_general = false;

  template <class T>
  std::array<T, 6> eval(const FlowExpansion& f, const std::vector<T>& args) const {
    const std::vector<T> mono = TruncatedSeries::monomials<T>(*f.z[0].basis(), args);
    std::array<T, 6> r;
    for (int i = 0; i < 6; ++i) r[i] = f.z[i].evaluate_monomials<T>(mono);
    return r;
  }
  template <class T>
  std::array<T, 6> target_flow(double eps, const T& t, const T& w, const T& s) const {
    return eval<T>(eps > 0 ? plus : minus, {t, w, s});
  }
  template <class T>
  std::array<T, 6> free_flow(const T& tau, const std::array<T, 6>& z) const {
    std::vector<T> args{tau};
    for (int i = 0; i < 6; ++i) args.push_back(z[i] - T(base[i]));
    return eval<T>(general, args);
  }
  template <class T>
  T phi(const std::array<T, 6>& z) const {
    const Vec3<T> q{z[0], z[1], z[2]};
    const Vec3<T> g = sys->control()(q);
    return z[3] * g[0] + z[4] * g[1] + z[5] * g[2];
  }
};

SplitContext make_split_context(const ControlAffineSystem& sys, SplitKind kind, const SplitOptions& opt) {
  const int order = opt.order;
  SplitContext ctx;
  ctx.sys = &sys;
  if (kind == SplitKind::C12) {
    ctx.eps_a = opt.c12_single > 0 ? 1.0 : -1.0;
    ctx.eps_b = opt.c12_first > 0 ? 1.0 : -1.0;
  }
  const BasisPtr b = target_basis(order);
  ctx.plus = lie_series_flow(sys, SeriesControl::bang(1.0), target_start(sys, b));
  ctx.minus = lie_series_flow(sys, SeriesControl::bang(-1.0), target_start(sys, b));
  if (kind == SplitKind::C12) {
    const BasisPtr g = MonomialBasis::get({"t", "dx", "dy", "dz", "dp1", "dp2", "dp3"}, order);
    const Vec3d n = sys.target().normal;
    ctx.base = {sys.target().level, 0.0, 0.0, n[0], n[1], n[2]};
    const char* names[6] = {"dx", "dy", "dz", "dp1", "dp2", "dp3"};
    std::array<TruncatedSeries, 6> z0;
    for (int i = 0; i < 6; ++i) z0[i] = TruncatedSeries::variable(g, names[i], ctx.base[i]);
    ctx.general = lie_series_flow(sys, SeriesControl::bang(-ctx.eps_b), z0);
    ctx.q_first =
        switching_function(sys, ctx.eps_b > 0 ? ctx.plus : ctx.minus).divide_by_var(b->var("t"), 1e-10);
    ctx.has_general = true;
  }
  return ctx;
}

template <class T>
std::vector<T> split_residual(const SplitContext& ctx, SplitKind kind, double w0, double s0, const std::vector<T>& u) {
  if (kind == SplitKind::C1) {
    const auto a = ctx.target_flow<T>(-1.0, u[0], T(w0), T(s0));
    const auto b = ctx.target_flow<T>(1.0, u[0], u[1], u[2]);
    return {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  }
  // u = (t, t1, w0', s0')
  const auto a = ctx.target_flow<T>(ctx.eps_a, u[0], T(w0), T(s0));
  const auto b1 = ctx.target_flow<T>(ctx.eps_b, u[1], u[2], u[3]);
  const auto b2 = ctx.free_flow<T>(u[0] - u[1], b1);
  return {b2[0] - a[0], b2[1] - a[1], b2[2] - a[2], ctx.q_first.evaluate<T>({u[1], u[2], u[3]})};
}

bool newton_solve(const SplitContext& ctx, SplitKind kind, double w0, double s0, std::vector<double>& u,
                  const SplitOptions& opt, double& res_norm) {
  const int n = static_cast<int>(u.size());
  auto resid = [&](const std::vector<double>& x) {
    const auto r = split_residual<double>(ctx, kind, w0, s0, x);
    return Eigen::Map<const Eigen::VectorXd>(r.data(), n).eval();
  };
  Eigen::VectorXd r = resid(u);
  for (int it = 0; it < opt.max_iter; ++it) {
    if (!r.allFinite()) return false;
    Eigen::MatrixXd J(n, n);
    for (int j = 0; j < n; ++j) {
      std::vector<D1> ud(n);
      for (int k = 0; k < n; ++k) ud[k] = D1(u[k], k == j ? 1.0 : 0.0);
      const auto rd = split_residual<D1>(ctx, kind, w0, s0, ud);
      for (int i = 0; i < n; ++i) J(i, j) = rd[i].d;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) return false;
    const Eigen::VectorXd delta = lu.solve(-r);
    // halve the step until the residual decreases
    double lambda = 1.0;
    std::vector<double> trial(n);
    Eigen::VectorXd rt;
    for (int h = 0; h < 10; ++h) {
      for (int k = 0; k < n; ++k) trial[k] = u[k] + lambda * delta[k];
      rt = resid(trial);
      if (rt.allFinite() && rt.norm() <= r.norm()) break;
      lambda *= 0.5;
    }
    u = trial;
    r = rt;
    // left the region where the truncated maps mean anything
    if (std::abs(u[0]) > 4.0 * opt.t_max) return false;
    if (lambda * delta.norm() < opt.tol || r.norm() < opt.tol) {
      res_norm = r.norm();
      return r.allFinite() && r.norm() < 1e-9;
    }
  }
  res_norm = r.norm();
  return false;
}

bool no_sign_change(const std::vector<double>& v) {
  int s = 0;
  for (double x : v) {
    const int sx = (x > 0) - (x < 0);
    if (sx == 0) continue;
    if (s != 0 && sx != s) return false;
    s = sx;
  }
  return true;
}

bool check_switch_free(const SplitContext& ctx, SplitKind kind, const SplitSample& sm, int m) {
  std::vector<double> pa, pb, pc;
  for (int k = 1; k < m; ++k) {
    const double f = static_cast<double>(k) / m;
    if (kind == SplitKind::C1) {
      pa.push_back(ctx.phi(ctx.target_flow<double>(-1.0, f * sm.t, sm.w0, sm.s0)));
      pb.push_back(ctx.phi(ctx.target_flow<double>(1.0, f * sm.t, sm.w0p, sm.s0p)));
    } else {
      pa.push_back(ctx.phi(ctx.target_flow<double>(ctx.eps_a, f * sm.t, sm.w0, sm.s0)));
      pb.push_back(ctx.phi(ctx.target_flow<double>(ctx.eps_b, f * sm.t1, sm.w0p, sm.s0p)));
      const auto z1 = ctx.target_flow<double>(ctx.eps_b, sm.t1, sm.w0p, sm.s0p);
      pc.push_back(ctx.phi(ctx.free_flow<double>(f * (sm.t - sm.t1), z1)));
    }
  }
  return no_sign_change(pa) && no_sign_change(pb) && no_sign_change(pc);
}

std::optional<SplitSample> solve_node(const SplitContext& ctx, SplitKind kind, int iw, int is, const SplitOptions& opt) {
  const double w0 = opt.w0_grid[iw], s0 = opt.s0_grid[is];
  const Vec3d q{ctx.sys->target().level, w0, s0};
  const Vec3d g = ctx.sys->control().eval(q);
  // first-order seeds: match q + (F + eps G) dt along both chains
  std::vector<std::vector<double>> seeds;
  for (double ts : opt.t_seeds) {
    if (kind == SplitKind::C1) {
      seeds.push_back({ts, w0 - 2.0 * g[1] * ts, s0 - 2.0 * g[2] * ts});
      continue;
    }
    for (double fr : opt.c12_fractions) {
      const double t1 = fr * ts;
      const double shift = ctx.eps_a * ts - ctx.eps_b * t1 + ctx.eps_b * (ts - t1);
      seeds.push_back({ts, t1, w0 + g[1] * shift, s0 + g[2] * shift});
    }
  }
  for (auto u : seeds) {
    double rn = 0;
    if (!newton_solve(ctx, kind, w0, s0, u, opt, rn)) continue;
    const double t = u[0];
    if (std::abs(t) < opt.t_min || std::abs(t) > opt.t_max) continue;
    if (opt.backward_only && t > 0) continue;
    SplitSample sm;
    sm.iw = iw;
    sm.is = is;
    sm.w0 = w0;
    sm.s0 = s0;
    sm.t = t;
    sm.residual = rn;
    if (kind == SplitKind::C1) {
      sm.w0p = u[1];
      sm.s0p = u[2];
    } else {
      sm.t1 = u[1];
      const double f = sm.t1 / t;
      if (!(f > 0 && f < 1) || std::abs(sm.t1) < opt.t_min || std::abs(t - sm.t1) < opt.t_min) continue;
      sm.w0p = u[2];
      sm.s0p = u[3];
    }
    const auto a = ctx.target_flow<double>(kind == SplitKind::C1 ? -1.0 : ctx.eps_a, t, w0, s0);
    sm.q = {a[0], a[1], a[2]};
    sm.switch_free = check_switch_free(ctx, kind, sm, opt.phi_checks);
    return sm;
  }
  return std::nullopt;
}

std::vector<SplitSample> run_split(const ControlAffineSystem& sys, SplitKind kind, const SplitOptions& opt,
                                   bool parallel) {
  if (opt.w0_grid.empty() || opt.s0_grid.empty()) throw std::invalid_argument("splitting_locus: empty grid");
  const SplitContext ctx = make_split_context(sys, kind, opt);
  const int nw = static_cast<int>(opt.w0_grid.size()), ns = static_cast<int>(opt.s0_grid.size());
  const int total = nw * ns;
  std::vector<std::optional<SplitSample>> found(total);
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < total; ++k) found[k] = solve_node(ctx, kind, k / ns, k % ns, opt);
  } else {
    for (int k = 0; k < total; ++k) found[k] = solve_node(ctx, kind, k / ns, k % ns, opt);
  }
  std::vector<SplitSample> out;
  int skipped = 0;
  for (auto& f : found) {
    if (f)
      out.push_back(*f);
    else
      ++skipped;
  }
  if (skipped) spdlog::debug("{}: {} of {} grid nodes without a nontrivial root", to_string(kind), skipped, total);
  return out;
}

}  // namespace

std::vector<SplitSample> splitting_locus(const ControlAffineSystem& sys, SplitKind kind, const SplitOptions& opt) {
  return run_split(sys, kind, opt, true);
}

std::vector<SplitSample> splitting_locus_serial(const ControlAffineSystem& sys, SplitKind kind,
                                                const SplitOptions& opt) {
  return run_split(sys, kind, opt, false);
}

double tutorial_leaf_g_printed(double a, double c, double z0, double z) {
  return 3.0 * c * z * z / (5.0 * a * a) *
         (2.0 * a * (2.0 * c + 1.0) * z * z * z + 30.0 * c * z0 * z0 * (a - 2.0 * c * z0) * z +
          30.0 * c * c * z * z * z * z + 5.0 * a * (a * z0 * z0 - 2.0 * c * z0 * z0 * z0 + 1.0));
}

std::vector<LeafSample> singular_leaf_tutorial(double a, double c, double z0, const std::vector<double>& zs) {
  if (a == 0.0 || c == 0.0) throw std::invalid_argument("tutorial leaf needs a, c != 0");
  auto y_of = [&](double z) { return 2.0 * c * (z * z * z - z0 * z0 * z0) / a + z0 * z0; };
  // dx/dz = (1 + f) / u_s with u_s = a / (6 c z)
  auto dxdz = [&](double z) {
    const double y = y_of(z);
    return (1.0 + a * y - 3.0 * c * y * z + c * z * z * z) * 6.0 * c * z / a;
  };
  std::vector<LeafSample> out;
  for (double z : zs) {
    LeafSample s;
    s.z0 = z0;
    s.z = z;
    s.y = y_of(z);
    s.x = z == z0 ? 0.0 : boost::math::quadrature::gauss_kronrod<double, 31>::integrate(dxdz, z0, z, 0, 1e-14);
    s.x_printed = tutorial_leaf_g_printed(a, c, z0, z) - tutorial_leaf_g_printed(a, c, z0, z0);
    out.push_back(s);
  }
  return out;
}

std::vector<LeafSample> singular_leaf_numeric(const ControlAffineSystem& sys, const Vec3d& q0,
                                              const std::vector<double>& zs) {
  using State = std::array<double, 3>;
  auto rhs = [&](const State& q, State& dq, double) {
    const Vec3d xs = singular_field(sys, q);
    if (std::abs(xs[2]) < 1e-300) throw std::domain_error("singular flow tangent to z = const");
    for (int i = 0; i < 3; ++i) dq[i] = xs[i] / xs[2];
  };
  OdeOptions o;
  o.abs_tol = o.rel_tol = 1e-12;
  std::vector<LeafSample> out;
  for (double z : zs) {
    LeafSample s;
    s.z0 = q0[2];
    s.z = z;
    State q{q0[0], q0[1], q0[2]};
    if (z != q0[2]) q = integrate_ode<State>(rhs, q, q0[2], z, o).x;
    s.x = q[0];
    s.y = q[1];
    s.x_printed = std::nan("");
    out.push_back(s);
  }
  return out;
}

void write_series_csv(std::ostream& os, const std::vector<std::pair<std::string, TruncatedSeries>>& comps) {
  if (comps.empty()) return;
  BasisPtr b;
  for (const auto& [n, s] : comps)
    if (s.has_basis()) b = s.basis();
  if (!b) throw std::invalid_argument("write_series_csv: no basis");
  os << "component";
  for (const auto& v : b->names()) os << ",e_" << v;
  os << ",order,coefficient\n";
  os.precision(17);
  for (const auto& [name, s0] : comps) {
    const TruncatedSeries s = s0.has_basis() ? s0 : TruncatedSeries::constant(b, s0.constant_term());
    if (s.basis() != b) throw std::invalid_argument("write_series_csv: mixed bases");
    for (int k = 0; k < b->size(); ++k) {
      const double c = s.coefficients()[k];
      if (c == 0.0) continue;
      os << name;
      for (int v = 0; v < b->nvars(); ++v) os << ',' << b->exponents(k)[v];
      os << ',' << b->order() << ',' << c << '\n';
    }
  }
}

}  // namespace crnsynth
