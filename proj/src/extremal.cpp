#include "crnsynth/extremal.hpp"

#include <cmath>
#include <limits>

#include <omp.h>

namespace crnsynth {

const char* to_string(ArcLabel l) {
  switch (l) {
    case ArcLabel::Plus: return "+";
    case ArcLabel::Minus: return "-";
    case ArcLabel::Singular: return "s";
  }
  return "?";
}

const char* to_string(SwitchKind k) {
  switch (k) {
    case SwitchKind::Ordinary: return "ordinary";
    case SwitchKind::FoldParabolic: return "fold_parabolic";
    case SwitchKind::FoldHyperbolic: return "fold_hyperbolic";
    case SwitchKind::FoldElliptic: return "fold_elliptic";
  }
  return "?";
}

ExtremalPoint make_extremal_point(const ControlAffineSystem& sys, const Vec3d& q, const Vec3d& p, double u,
                                  bool singular) {
  ExtremalPoint e;
  e.q = q;
  e.p = p;
  e.u = u;
  e.singular = singular;
  const double hf = dot(p, sys.drift().eval(q));
  const double hg = dot(p, sys.control().eval(q));
  e.H = hf + u * hg;
  e.M = hf + std::abs(hg);
  return e;
}

SwitchingRecord switching_record(const ControlAffineSystem& sys, double t, const Vec3d& q, const Vec3d& p,
                                 const SwitchTolerances& tol) {
  const BracketFrame f = bracket_frame(sys, q);
  SwitchingRecord r;
  r.t = t;
  r.q = q;
  r.p = p;
  r.phi = dot(p, f.G);
  r.phidot = dot(p, f.GF);
  r.phiddot_plus = dot(p, f.GFF) + dot(p, f.GFG);
  r.phiddot_minus = dot(p, f.GFF) - dot(p, f.GFG);
  const double scale_dot = norm(p) * std::max(norm(f.GF), 1e-300);
  if (std::abs(r.phidot) > tol.rel * scale_dot) {
    r.kind = SwitchKind::Ordinary;
  } else {
    const double s2 = norm(p) * std::max({norm(f.GFF), norm(f.GFG), 1e-300});
    try {
      r.kind = classify_fold(r, tol.rel * s2);
    } catch (const DegenerateFoldError&) {
      r.kind = SwitchKind::FoldParabolic;
    }
  }
  return r;
}

SwitchKind classify_fold(const SwitchingRecord& rec, double tol) {
  const double a = rec.phiddot_plus, b = rec.phiddot_minus;
  if (std::abs(a) <= tol || std::abs(b) <= tol) throw DegenerateFoldError("second derivative of Phi vanishes at fold");
  if (a * b > 0) return SwitchKind::FoldParabolic;
  return a > 0 ? SwitchKind::FoldHyperbolic : SwitchKind::FoldElliptic;
}

ZState extremal_rhs(const ControlAffineSystem& sys, const ZState& z, double u) {
  const Vec3d q = zq(z), p = zp(z);
  const Vec3d qd = axpy(sys.drift().eval(q), u, sys.control().eval(q));
  const Vec3d pf = covector_jacobian_at(sys.drift(), q, p);
  const Vec3d pg = covector_jacobian_at(sys.control(), q, p);
  return {qd[0], qd[1], qd[2], -(pf[0] + u * pg[0]), -(pf[1] + u * pg[1]), -(pf[2] + u * pg[2])};
}

double costate_singular_control(const ControlAffineSystem& sys, const Vec3d& q, const Vec3d& p) {
  const double den = dot(p, sys.gfg().eval(q));
  if (den == 0.0) throw DegenerateSingularError("p.[[G,F],G] vanishes");
  return -dot(p, sys.gff().eval(q)) / den;
}

namespace {

double validity_margin(const ValidityBox& box, const Vec3d& q) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) m = std::min({m, q[i] - box.lo[i], box.hi[i] - q[i]});
  return m;
}

bool has_finite_box(const ValidityBox& box) {
  for (int i = 0; i < 3; ++i)
    if (box.lo[i] > -1e299 || box.hi[i] < 1e299) return true;
  return false;
}

}  // namespace

BangResult integrate_bang(const ControlAffineSystem& sys, const ZState& z0, double eps,
                          const std::array<double, 2>& t_span, const BangOptions& opt) {
  BangResult res;
  res.arc.label = bang_label(eps);
  res.arc.t0 = t_span[0];
  res.arc.entry = make_extremal_point(sys, zq(z0), zp(z0), eps);
  auto rhs = [&](const ZState& z, ZState& dz, double) { dz = extremal_rhs(sys, z, eps); };
  auto observe = [&](double t, const ZState& z) {
    if (!res.arc.t.empty() && res.arc.t.back() == t) return;
    res.arc.t.push_back(t);
    res.arc.z.push_back(z);
  };
  std::vector<Event<ZState>> events;
  events.push_back({[&](double, const ZState& z) { return dot(zp(z), sys.control().eval(zq(z))); },
                    !opt.continue_past_switches, eps > 0 ? -1 : 1, "switch"});
  const bool box = opt.stop_outside_validity && has_finite_box(sys.validity);
  if (box)
    events.push_back({[&](double, const ZState& z) { return validity_margin(sys.validity, zq(z)); }, true, -1,
                      "validity"});
  const double dir = t_span[1] >= t_span[0] ? 1.0 : -1.0;
  ZState z = z0;
  double t = t_span[0];
  try {
    if (opt.exclusion > 0) {
      const double te = t + dir * std::min(opt.exclusion, std::abs(t_span[1] - t_span[0]));
      auto r0 = integrate_ode<ZState>(rhs, z, t, te, opt.ode, {}, observe);
      z = r0.x;
      t = te;
    }
    auto r = integrate_ode<ZState>(rhs, z, t, t_span[1], opt.ode, events, observe);
    res.arc.t1 = r.t;
    res.arc.exit = make_extremal_point(sys, zq(r.x), zp(r.x), eps);
    for (const auto& h : r.hits) {
      if (events[h.index].name != "switch") continue;
      res.records.push_back(switching_record(sys, h.t, zq(h.x), zp(h.x), opt.tol));
    }
    if (r.status == OdeStatus::EventStop && events[r.hits.back().index].name == "validity") {
      res.message = "left validity box";
    } else if (r.status == OdeStatus::Failed) {
      res.error = true;
      res.message = r.message;
    }
  } catch (const IntegrationFailure& e) {
    res.error = true;
    res.message = e.what();
    res.arc.t1 = e.t_last;
    if (!res.arc.z.empty()) res.arc.exit = make_extremal_point(sys, zq(res.arc.z.back()), zp(res.arc.z.back()), eps);
  } catch (const std::domain_error& e) {
    res.error = true;
    res.message = e.what();
    res.arc.t1 = res.arc.t.empty() ? t : res.arc.t.back();
    if (!res.arc.z.empty()) res.arc.exit = make_extremal_point(sys, zq(res.arc.z.back()), zp(res.arc.z.back()), eps);
  }
  return res;
}

std::string ExtremalArcChain::pattern() const {
  std::string s;
  for (auto it = arcs.rbegin(); it != arcs.rend(); ++it) s += to_string(it->label);
  return s;
}

namespace {

struct SingularRun {
  ExtremalArc arc;
  bool saturated = false;
  double u_exit = 0;
  std::string reason;
};

SingularRun integrate_singular_costate(const ControlAffineSystem& sys, const ZState& z0, double t0, double t1,
                                       const SweepOptions& opt) {
  SingularRun run;
  run.arc.label = ArcLabel::Singular;
  run.arc.t0 = t0;
  auto us = [&](const ZState& z) { return costate_singular_control(sys, zq(z), zp(z)); };
  run.arc.entry = make_extremal_point(sys, zq(z0), zp(z0), us(z0), true);
  auto rhs = [&](const ZState& z, ZState& dz, double) { dz = extremal_rhs(sys, z, us(z)); };
  auto observe = [&](double t, const ZState& z) {
    run.arc.t.push_back(t);
    run.arc.z.push_back(z);
  };
  std::vector<Event<ZState>> events;
  events.push_back({[&](double, const ZState& z) { return std::abs(us(z)) - 1.0; }, true, 1, "saturation"});
  events.push_back({[&](double, const ZState& z) {
                      const Vec3d q = zq(z), p = zp(z);
                      return std::abs(dot(p, sys.gfg().eval(q))) -
                             1e-9 * norm(p) * std::max(norm(sys.gfg().eval(q)), norm(sys.gff().eval(q)));
                    },
                    true, -1, "degenerate"});
  if (opt.stop_outside_validity && has_finite_box(sys.validity))
    events.push_back({[&](double, const ZState& z) { return validity_margin(sys.validity, zq(z)); }, true, -1,
                      "validity"});
  OdeOptions ode = opt.ode;
  ode.event_time_tol = std::min(ode.event_time_tol, 1e-10);
  try {
    auto r = integrate_ode<ZState>(rhs, z0, t0, t1, ode, events, observe);
    run.arc.t1 = r.t;
    run.u_exit = us(r.x);
    run.arc.exit = make_extremal_point(sys, zq(r.x), zp(r.x), run.u_exit, true);
    if (r.status == OdeStatus::EventStop) {
      run.reason = events[r.hits.back().index].name;
      run.saturated = run.reason == "saturation";
    } else {
      run.reason = r.status == OdeStatus::Failed ? r.message : "horizon";
    }
  } catch (const std::exception& e) {
    run.reason = e.what();
    run.arc.t1 = run.arc.t.empty() ? t0 : run.arc.t.back();
    if (!run.arc.z.empty())
      run.arc.exit = make_extremal_point(sys, zq(run.arc.z.back()), zp(run.arc.z.back()), 0.0, true);
  }
  return run;
}

}  // namespace

ExtremalArcChain extend_chain(const ControlAffineSystem& sys, ExtremalArcChain chain, ArcLabel label,
                              const ZState& z0, double t0, const SweepOptions& opt,
                              std::vector<ExtremalArcChain>* branches) {
  ZState z = z0;
  double t = t0;
  const double t_end = -std::abs(opt.horizon);
  double exclusion =
      !chain.arcs.empty() && chain.arcs.back().label == ArcLabel::Singular ? opt.singular_exit_exclusion : 0.0;
  while (static_cast<int>(chain.arcs.size()) < opt.max_arcs && t > t_end) {
    if (label == ArcLabel::Singular) {
      SingularRun run = integrate_singular_costate(sys, z, t, t_end, opt);
      if (run.arc.z.empty()) {
        chain.truncated = true;
        chain.stop_reason = run.reason;
        break;
      }
      z = run.arc.z.back();
      t = run.arc.t1;
      chain.arcs.push_back(std::move(run.arc));
      if (!run.saturated) {
        chain.stop_reason = run.reason;
        chain.truncated = run.reason != "horizon";
        break;
      }
      label = bang_label(run.u_exit);
      exclusion = opt.singular_exit_exclusion;
      continue;
    }
    const double eps = label == ArcLabel::Plus ? 1.0 : -1.0;
    BangOptions bo;
    bo.ode = opt.ode;
    bo.tol = opt.tol;
    bo.exclusion = exclusion;
    bo.stop_outside_validity = opt.stop_outside_validity;
    BangResult br = integrate_bang(sys, z, eps, {t, t_end}, bo);
    exclusion = 0.0;
    if (br.arc.z.empty()) {
      chain.truncated = true;
      chain.stop_reason = br.message;
      break;
    }
    z = br.arc.z.back();
    t = br.arc.t1;
    chain.arcs.push_back(std::move(br.arc));
    if (br.error) {
      chain.truncated = true;
      chain.stop_reason = br.message;
      break;
    }
    if (br.records.empty()) {
      chain.stop_reason = br.message.empty() ? "horizon" : br.message;
      break;
    }
    const SwitchingRecord rec = br.records.back();
    chain.switches.push_back(rec);
    if (rec.kind == SwitchKind::FoldHyperbolic && opt.branch_at_folds && branches) {
      ExtremalArcChain b = chain;
      branches->push_back(extend_chain(sys, b, ArcLabel::Singular, z, t, opt, nullptr));
    }
    label = bang_label(-eps);
  }
  chain.total_time = std::abs(t);
  return chain;
}

ExtremalArcChain singular_exit_chain(const ControlAffineSystem& sys, const Vec3d& q0, double tau_s, double eps,
                                     const SweepOptions& opt) {
  ExtremalArcChain chain;
  chain.target = q0;
  const Vec3d p0 = sys.target().normal;
  const SwitchingRecord rec = switching_record(sys, 0.0, q0, p0, opt.tol);
  if (rec.kind == SwitchKind::Ordinary) throw std::invalid_argument("singular_exit_chain: start is not a fold point");
  chain.switches.push_back(rec);
  SingularRun run = integrate_singular_costate(sys, make_z(q0, p0), 0.0, -std::abs(tau_s), opt);
  if (run.arc.z.empty()) {
    chain.truncated = true;
    chain.stop_reason = run.reason;
    return chain;
  }
  const ZState z = run.arc.z.back();
  const double t = run.arc.t1;
  chain.arcs.push_back(std::move(run.arc));
  if (run.reason != "horizon") {
    chain.truncated = true;
    chain.stop_reason = "singular arc stopped early: " + run.reason;
    chain.total_time = std::abs(t);
    return chain;
  }
  SweepOptions o = opt;
  return extend_chain(sys, chain, bang_label(eps), z, t, o);
}

std::vector<ExtremalArcChain> bc_chains_from(const ControlAffineSystem& sys, const Vec3d& q0, int sample_index,
                                             const SweepOptions& opt) {
  std::vector<ExtremalArcChain> out;
  const Vec3d p0 = sys.target().normal;
  const ZState z0 = make_z(q0, p0);
  ExtremalArcChain base;
  base.sample = sample_index;
  base.target = q0;
  const SwitchingRecord rec = switching_record(sys, 0.0, q0, p0, opt.tol);
  if (rec.kind == SwitchKind::Ordinary) {
    const double eps = rec.phidot < 0 ? 1.0 : -1.0;
    std::vector<ExtremalArcChain> branches;
    out.push_back(extend_chain(sys, base, bang_label(eps), z0, 0.0, opt, &branches));
    for (auto& b : branches) out.push_back(std::move(b));
    return out;
  }
  base.switches.push_back(rec);
  switch (rec.kind) {
    case SwitchKind::FoldHyperbolic:
      out.push_back(extend_chain(sys, base, ArcLabel::Singular, z0, 0.0, opt));
      if (opt.branch_at_folds) {
        out.push_back(extend_chain(sys, base, ArcLabel::Plus, z0, 0.0, opt));
        out.push_back(extend_chain(sys, base, ArcLabel::Minus, z0, 0.0, opt));
      }
      break;
    case SwitchKind::FoldElliptic:
      out.push_back(extend_chain(sys, base, ArcLabel::Singular, z0, 0.0, opt));
      break;
    case SwitchKind::FoldParabolic: {
      const double eps = rec.phiddot_plus > 0 ? 1.0 : -1.0;
      out.push_back(extend_chain(sys, base, bang_label(eps), z0, 0.0, opt));
      break;
    }
    default:
      break;
  }
  return out;
}

std::vector<ExtremalArcChain> backward_bc_sweep_serial(const ControlAffineSystem& sys,
                                                       const std::vector<Vec3d>& samples, const SweepOptions& opt) {
  std::vector<ExtremalArcChain> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    auto c = bc_chains_from(sys, samples[i], static_cast<int>(i), opt);
    for (auto& x : c) out.push_back(std::move(x));
  }
  return out;
}

std::vector<ExtremalArcChain> backward_bc_sweep(const ControlAffineSystem& sys, const std::vector<Vec3d>& samples,
                                                const SweepOptions& opt) {
  const long n = static_cast<long>(samples.size());
  std::vector<std::vector<ExtremalArcChain>> per(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) per[i] = bc_chains_from(sys, samples[i], static_cast<int>(i), opt);
  std::vector<ExtremalArcChain> out;
  for (auto& v : per)
    for (auto& c : v) out.push_back(std::move(c));
  return out;
}

nlohmann::json to_json(const SwitchingRecord& r) {
  return {{"t", r.t},
          {"q", r.q},
          {"p", r.p},
          {"phi", r.phi},
          {"phidot", r.phidot},
          {"phiddot_plus", r.phiddot_plus},
          {"phiddot_minus", r.phiddot_minus},
          {"kind", to_string(r.kind)}};
}

nlohmann::json to_json(const ExtremalArcChain& c, int point_stride) {
  nlohmann::json arcs = nlohmann::json::array();
  for (const auto& a : c.arcs) {
    nlohmann::json pts = nlohmann::json::array();
    for (size_t i = 0; i < a.t.size(); i += std::max(1, point_stride)) {
      std::vector<double> row{a.t[i]};
      row.insert(row.end(), a.z[i].begin(), a.z[i].end());
      pts.push_back(row);
    }
    if (!a.t.empty() && (a.t.size() - 1) % std::max(1, point_stride) != 0) {
      std::vector<double> row{a.t.back()};
      row.insert(row.end(), a.z.back().begin(), a.z.back().end());
      pts.push_back(row);
    }
    arcs.push_back({{"label", to_string(a.label)}, {"t0", a.t0}, {"t1", a.t1}, {"points", pts}});
  }
  nlohmann::json sw = nlohmann::json::array();
  for (const auto& s : c.switches) sw.push_back(to_json(s));
  return {{"sample", c.sample},   {"target", c.target},         {"pattern", c.pattern()},
          {"arcs", arcs},         {"switches", sw},             {"total_time", c.total_time},
          {"truncated", c.truncated}, {"stop_reason", c.stop_reason}};
}

}  // namespace crnsynth
