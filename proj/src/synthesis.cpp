#include "crnsynth/synthesis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <regex>
#include <stdexcept>

#include <boost/math/tools/toms748_solve.hpp>
#include <spdlog/spdlog.h>

namespace crnsynth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double rel_scale(double a, double b = 1.0) { return std::max({1.0, std::abs(a), std::abs(b)}); }

// Bracketed root to (near) machine precision.
double refine_root(const std::function<double(double)>& f, double a, double b, double fa, double fb) {
  if (fa == 0) return a;
  if (fb == 0) return b;
  boost::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(52), it);
  const double m = 0.5 * (r.first + r.second);
  return std::abs(f(r.first)) <= std::abs(f(m)) ? r.first : m;
}

double safe_eval(const std::function<double(double)>& f, double x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : kNaN;
  } catch (const std::exception&) {
    return kNaN;
  }
}

TargetGrid clip_to_validity(const ControlAffineSystem& sys, TargetGrid g) {
  const auto& v = sys.validity;
  g.y_lo = std::max(g.y_lo, v.lo[1]);
  g.y_hi = std::min(g.y_hi, v.hi[1]);
  g.z_lo = std::max(g.z_lo, v.lo[2]);
  g.z_hi = std::min(g.z_hi, v.hi[2]);
  if (!(g.y_lo <= g.y_hi) || !(g.z_lo <= g.z_hi)) throw std::invalid_argument("stratify_target: grid outside validity box");
  return g;
}

Vec3d on_target(const ControlAffineSystem& sys, double y, double z) { return {sys.target().level, y, z}; }

double nGF_at(const ControlAffineSystem& sys, const Vec3d& q) { return dot(sys.target().normal, sys.gf().eval(q)); }
double nF_at(const ControlAffineSystem& sys, const Vec3d& q) { return dot(sys.target().normal, sys.drift().eval(q)); }

struct LineRoots {
  std::vector<StratumSample> S, E;
};

// The curve {S or E} crossed along one grid line: `along_y` fixes z and searches y.
LineRoots line_roots(const ControlAffineSystem& sys, const TargetGrid& g, bool along_y, double fixed,
                     const StrataTolerances& tol) {
  LineRoots out;
  const double lo = along_y ? g.y_lo : g.z_lo, hi = along_y ? g.y_hi : g.z_hi;
  const int n = std::max(2, (along_y ? g.ny : g.nz) - 1);
  auto point = [&](double s) { return along_y ? on_target(sys, s, fixed) : on_target(sys, fixed, s); };
  for (double r : roots_on_segment([&](double s) { return nGF_at(sys, point(s)); }, lo, hi, n)) {
    StratumSample t = tag_point(sys, point(r), tol);
    t.on_S = true;
    t.eps = 0;
    out.S.push_back(t);
  }
  for (double r : roots_on_segment([&](double s) { return nF_at(sys, point(s)); }, lo, hi, n)) {
    StratumSample t = tag_point(sys, point(r), tol);
    t.on_E = true;
    out.E.push_back(t);
  }
  return out;
}

// y of the S-point on the z-line at z, searched in [ya, yb].
std::optional<double> s_root_near(const ControlAffineSystem& sys, double z, double ya, double yb) {
  auto f = [&](double y) { return nGF_at(sys, on_target(sys, y, z)); };
  const double fa = safe_eval(f, ya), fb = safe_eval(f, yb);
  if (!std::isfinite(fa) || !std::isfinite(fb) || fa * fb > 0) return std::nullopt;
  return refine_root(f, ya, yb, fa, fb);
}

// Events on S located between two matched S samples of neighbouring z-lines.
void segment_events(const ControlAffineSystem& sys, const TargetGrid& g, const StratumSample& a,
                    const StratumSample& b, const StrataTolerances& tol, Stratification& out) {
  const double dy = (g.y_hi - g.y_lo) / std::max(1, g.ny - 1);
  const double za = a.q[2], zb = b.q[2];
  const double pad = std::abs(b.q[1] - a.q[1]) + dy;
  auto locate = [&](double z) -> std::optional<Vec3d> {
    const double w = (z - za) / (zb - za);
    const double ym = a.q[1] + w * (b.q[1] - a.q[1]);
    const auto y = s_root_near(sys, z, std::max(g.y_lo, ym - pad), std::min(g.y_hi, ym + pad));
    if (!y) return std::nullopt;
    return on_target(sys, *y, z);
  };
  struct Ev {
    std::function<double(const StratumSample&)> h;
    std::vector<StratumSample>* sink;
  };
  const Ev evs[3] = {
      {[](const StratumSample& s) { return std::isfinite(s.us) ? std::abs(s.us) - 1.0 : kNaN; }, &out.saturation},
      {[](const StratumSample& s) { return std::isfinite(s.us) ? std::abs(s.us) - 3.0 : kNaN; }, &out.bifurcation},
      {[](const StratumSample& s) { return s.nGFG; }, &out.semi_bridge},
  };
  for (const auto& ev : evs) {
    const double ha = ev.h(a), hb = ev.h(b);
    if (!std::isfinite(ha) || !std::isfinite(hb) || ha * hb > 0) continue;
    // a zero of the u_s-based functions next to a pole of u_s is spurious
    if (ev.sink != &out.semi_bridge && a.nGFG * b.nGFG < 0) continue;
    if (ha == 0 || hb == 0) {  // event sits on a grid line
      StratumSample s = ha == 0 ? a : b;
      if (ev.sink == &out.semi_bridge) s.semi_bridge = true;
      ev.sink->push_back(s);
      continue;
    }
    double lo = za, hi = zb, hlo = ha;
    std::optional<Vec3d> best;
    bool ok = true;
    for (int it = 0; it < 80 && std::abs(hi - lo) > 1e-14 * rel_scale(lo); ++it) {
      const double zm = 0.5 * (lo + hi);
      const auto q = locate(zm);
      if (!q) {
        ok = false;
        break;
      }
      const StratumSample s = tag_point(sys, *q, tol);
      const double hm = ev.h(s);
      if (!std::isfinite(hm)) {
        ok = false;
        break;
      }
      best = q;
      if (hm == 0) break;
      if ((hm > 0) == (hlo > 0)) {
        lo = zm;
        hlo = hm;
      } else {
        hi = zm;
      }
    }
    if (!ok || !best) continue;
    StratumSample s = tag_point(sys, *best, tol);
    s.on_S = true;
    s.eps = 0;
    if (ev.sink == &out.semi_bridge) s.semi_bridge = true;
    ev.sink->push_back(s);
  }
}

Stratification run_stratify(const ControlAffineSystem& sys, const TargetGrid& grid_in, const StrataTolerances& tol,
                            bool parallel) {
  if (grid_in.ny < 1 || grid_in.nz < 1) throw std::invalid_argument("stratify_target: empty grid");
  const TargetGrid g = clip_to_validity(sys, grid_in);
  Stratification out;
  out.grid.resize(static_cast<size_t>(g.ny) * g.nz);
  std::vector<LineRoots> zlines(g.nz), ylines(g.ny);

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int j = 0; j < g.nz; ++j) {
    for (int i = 0; i < g.ny; ++i) out.grid[static_cast<size_t>(j) * g.ny + i] = tag_point(sys, on_target(sys, g.y(i), g.z(j)), tol);
    zlines[j] = line_roots(sys, g, true, g.z(j), tol);
  }
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < g.ny; ++i) ylines[i] = line_roots(sys, g, false, g.y(i), tol);

  for (const auto& l : zlines) {
    out.S.insert(out.S.end(), l.S.begin(), l.S.end());
    out.E.insert(out.E.end(), l.E.begin(), l.E.end());
  }
  for (const auto& l : ylines) {
    out.S.insert(out.S.end(), l.S.begin(), l.S.end());
    out.E.insert(out.E.end(), l.E.begin(), l.E.end());
  }

  // branch matching between neighbouring z-lines, then events on each matched segment
  const double dy = (g.y_hi - g.y_lo) / std::max(1, g.ny - 1);
  const double dz = (g.z_hi - g.z_lo) / std::max(1, g.nz - 1);
  const double match = 10.0 * std::max(dy, dz);
  std::vector<std::pair<StratumSample, StratumSample>> segs;
  for (int j = 0; j + 1 < g.nz; ++j) {
    for (const auto& a : zlines[j].S) {
      const StratumSample* best = nullptr;
      for (const auto& b : zlines[j + 1].S)
        if (!best || std::abs(b.q[1] - a.q[1]) < std::abs(best->q[1] - a.q[1])) best = &b;
      if (best && std::abs(best->q[1] - a.q[1]) < match) segs.emplace_back(a, *best);
    }
  }
  std::vector<Stratification> local(segs.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int k = 0; k < static_cast<int>(segs.size()); ++k)
    segment_events(sys, g, segs[k].first, segs[k].second, tol, local[k]);
  // an event on a grid line is seen by both adjacent segments
  auto add = [](std::vector<StratumSample>& dst, const std::vector<StratumSample>& src) {
    for (const auto& s : src) {
      bool dup = false;
      for (const auto& d : dst) dup = dup || norm(axpy(s.q, -1.0, d.q)) < 1e-9;
      if (!dup) dst.push_back(s);
    }
  };
  for (const auto& l : local) {
    add(out.saturation, l.saturation);
    add(out.bifurcation, l.bifurcation);
    add(out.semi_bridge, l.semi_bridge);
  }
  return out;
}

double us_rate_along_singular_flow(const ControlAffineSystem& sys, const Vec3d& q, const SingularTolerances& tol) {
  const Vec3d X = singular_field(sys, q, tol);
  const double h = 1e-6 / std::max(1.0, norm(X));
  const double up = singular_control(sys, axpy(q, h, X), tol);
  const double um = singular_control(sys, axpy(q, -h, X), tol);
  return (up - um) / (2 * h);
}

bool is_elliptic_family(CatalogLabel l) {
  return l == CatalogLabel::EllipticFold || l == CatalogLabel::EllipticBifurcation ||
         l == CatalogLabel::ParabolicNonAdmissibleElliptic;
}

std::string policy_for(CatalogLabel l, int eps) {
  switch (l) {
    case CatalogLabel::Generic: return eps > 0 ? "^\\+$" : "^-$";
    case CatalogLabel::HyperbolicFold: return "^[+-]s[+-]?$";
    case CatalogLabel::EllipticFold:
    case CatalogLabel::ParabolicNonAdmissibleHyperbolic:
    case CatalogLabel::ParabolicNonAdmissibleElliptic: return "^[+-]{1,2}$";
    case CatalogLabel::SaturatingCase1:
    case CatalogLabel::SaturatingCase2: return "^[+-]{0,2}s?[+-]?$";
    case CatalogLabel::EllipticBifurcation: return "^[+-]{1,3}$";
    case CatalogLabel::SemiBridge: return "^[-+s]{1,3}$";
    default: return "";
  }
}

nlohmann::json points_json(const std::vector<Vec3d>& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& q : pts) a.push_back({q[0], q[1], q[2]});
  return a;
}

}  // namespace

// ---------------------------------------------------------------- stratification

std::vector<double> roots_on_segment(const std::function<double(double)>& f, double lo, double hi, int n) {
  std::vector<double> roots;
  if (n < 1 || !(hi > lo)) return roots;
  std::vector<double> xs(n + 1), fs(n + 1);
  for (int k = 0; k <= n; ++k) {
    xs[k] = k == n ? hi : lo + (hi - lo) * k / n;
    fs[k] = safe_eval(f, xs[k]);
  }
  for (int k = 0; k < n; ++k) {
    const double fa = fs[k], fb = fs[k + 1];
    if (!std::isfinite(fa) || !std::isfinite(fb)) continue;
    if (fa == 0) {
      roots.push_back(xs[k]);
      continue;
    }
    if (fa * fb < 0) roots.push_back(refine_root(f, xs[k], xs[k + 1], fa, fb));
  }
  if (std::isfinite(fs[n]) && fs[n] == 0) roots.push_back(xs[n]);
  return roots;
}

StratumSample tag_point(const ControlAffineSystem& sys, const Vec3d& q, const StrataTolerances& tol) {
  StratumSample s;
  s.q = q;
  const Vec3d n = sys.target().normal;
  const BracketFrame f = bracket_frame(sys, q);
  s.nGF = dot(n, f.GF);
  s.nF = dot(n, f.F);
  s.nGFG = dot(n, f.GFG);
  s.nGFF = dot(n, f.GFF);
  s.on_S = std::abs(s.nGF) <= tol.on_locus * rel_scale(norm(f.GF));
  s.on_E = std::abs(s.nF) <= tol.on_locus * rel_scale(norm(f.F));
  s.cls = classify_with_costate(sys, q, n, tol.singular);
  s.us = s.cls.us;
  if (sys.singular_feedback_override && s.cls.type != SingularType::Degenerate) {
    const double u = sys.singular_feedback_override(q);
    if (std::isfinite(u)) s.us = u;
  }
  s.admissible = std::isfinite(s.us) && std::abs(s.us) <= 1.0 + tol.saturation;
  s.saturated = std::isfinite(s.us) && std::abs(std::abs(s.us) - 1.0) <= tol.saturation;
  s.semi_bridge = s.on_S && std::abs(s.nGFG) <= tol.semi_bridge * rel_scale(norm(f.GFG));
  s.eps = s.on_S ? 0 : (s.nGF > 0 ? -1 : 1);
  return s;
}

Stratification stratify_target(const ControlAffineSystem& sys, const TargetGrid& grid, const StrataTolerances& tol) {
  return run_stratify(sys, grid, tol, true);
}
Stratification stratify_target_serial(const ControlAffineSystem& sys, const TargetGrid& grid,
                                      const StrataTolerances& tol) {
  return run_stratify(sys, grid, tol, false);
}

// ---------------------------------------------------------------- McKeithan closed forms

double mckeithan_S_residual(const McKeithanParams& p, double d, double v, double y) {
  const double C = p.alpha2 * p.beta2 * d * std::pow(v, p.alpha2 - 1) + p.alpha3 * p.beta3 * d * std::pow(v, p.alpha3 - 1) +
                   d * p.delta3() - p.delta4() - d * d;
  return C + y * (p.delta3() - 2 * d) - y * y;
}

double mckeithan_E_residual(const McKeithanParams& p, double d, double v, double y) {
  return -p.beta2 * d * std::pow(v, p.alpha2) - p.beta3 * d * std::pow(v, p.alpha3) + d * d * v - d * p.delta3() * v +
         y * (2 * d * v - p.delta3() * v) + p.delta4() * v + v * y * y;
}

McKeithanLocus mckeithan_singular_locus(const McKeithanParams& p, double d, const std::vector<double>& vs) {
  if (!(d > 0)) throw std::invalid_argument("mckeithan_singular_locus: d must be positive");
  McKeithanLocus out;
  out.min_discriminant = std::numeric_limits<double>::infinity();
  const double b = p.delta3() - 2 * d;
  for (double v : vs) {
    if (!(v > 0)) throw std::invalid_argument("mckeithan_singular_locus: v must be positive");
    const double disc = std::pow(p.delta1 - p.delta2, 2) +
                        4 * d * (p.alpha2 * p.beta2 * std::pow(v, p.alpha2 - 1) + p.alpha3 * p.beta3 * std::pow(v, p.alpha3 - 1));
    out.min_discriminant = std::min(out.min_discriminant, disc);
    if (!(disc > 0)) out.discriminant_positive = false;
    if (disc < 0) continue;
    const double r = std::sqrt(disc);
    // -y^2 + b y + C = 0  ->  y = (b -+ r) / 2
    const double ys[2] = {0.5 * (b - r), 0.5 * (b + r)};
    for (int k = 0; k < 2; ++k) {
      if (ys[k] < 0 || ys[k] > p.delta2) continue;
      out.points.push_back({v, ys[k], k, disc, mckeithan_S_residual(p, d, v, ys[k])});
    }
  }
  return out;
}

McKeithanLocus mckeithan_exceptional_locus(const McKeithanParams& p, double d, const std::vector<double>& vs) {
  if (!(d > 0)) throw std::invalid_argument("mckeithan_exceptional_locus: d must be positive");
  McKeithanLocus out;
  out.min_discriminant = std::numeric_limits<double>::infinity();
  for (double v : vs) {
    if (!(v > 0)) throw std::invalid_argument("mckeithan_exceptional_locus: v must be positive");
    const double disc = v * (4 * d * (p.beta2 * std::pow(v, p.alpha2) + p.beta3 * std::pow(v, p.alpha3)) +
                             v * std::pow(p.delta1 - p.delta2, 2));
    out.min_discriminant = std::min(out.min_discriminant, disc);
    if (!(disc > 0)) out.discriminant_positive = false;
    if (disc < 0) continue;
    const double B = 2 * d * v - p.delta3() * v;
    const double r = std::sqrt(disc);
    const double ys[2] = {(-B - r) / (2 * v), (-B + r) / (2 * v)};
    for (int k = 0; k < 2; ++k) {
      if (ys[k] < 0 || ys[k] > p.delta2) continue;
      out.points.push_back({v, ys[k], k, disc, mckeithan_E_residual(p, d, v, ys[k])});
    }
  }
  return out;
}

double locus_min_distance(const McKeithanLocus& a, const McKeithanLocus& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : a.points)
    for (const auto& e : b.points) best = std::min(best, std::hypot(s.v - e.v, s.y - e.y));
  return best;
}

SemiBridgeResult semi_bridge_points(const McKeithanParams& p, double d) {
  SemiBridgeResult out;
  if (p.alpha2 == p.alpha3) {
    out.reason = "alpha2 equals alpha3";
    return out;
  }
  const double den = (p.alpha3 - 1) * p.alpha3 * p.beta3;
  if (den == 0) {
    out.reason = "no positive solution";
    return out;
  }
  const double rhs = -((p.alpha2 - 1) * p.alpha2 * p.beta2) / den;
  if (!(rhs > 0)) {
    out.reason = "no positive solution";
    return out;
  }
  const double v = std::pow(rhs, 1.0 / (p.alpha3 - p.alpha2));
  const ControlAffineSystem sys = mckeithan_lift(p, d);
  // n.[[G,F],G] does not depend on y; evaluate on an S branch when there is one
  const auto S = mckeithan_singular_locus(p, d, {v});
  const double y = S.points.empty() ? 0.0 : S.points.front().y;
  out.v.push_back(v);
  out.ad_residual.push_back(std::abs(dot(sys.target().normal, sys.gfg().eval(Vec3d{d, y, v}))));
  return out;
}

// ---------------------------------------------------------------- local synthesis

const char* to_string(CatalogLabel l) {
  switch (l) {
    case CatalogLabel::Generic: return "Generic";
    case CatalogLabel::HyperbolicFold: return "HyperbolicFold";
    case CatalogLabel::EllipticFold: return "EllipticFold";
    case CatalogLabel::ParabolicNonAdmissibleHyperbolic: return "ParabolicNonAdmissibleHyperbolic";
    case CatalogLabel::ParabolicNonAdmissibleElliptic: return "ParabolicNonAdmissibleElliptic";
    case CatalogLabel::SaturatingCase1: return "SaturatingCase1";
    case CatalogLabel::SaturatingCase2: return "SaturatingCase2";
    case CatalogLabel::EllipticBifurcation: return "EllipticBifurcation";
    case CatalogLabel::SemiBridge: return "SemiBridge";
    case CatalogLabel::Unclassified: return "Unclassified";
  }
  return "?";
}

CatalogLabel catalog_label(const ControlAffineSystem& sys, const StratumSample& a, const SynthesisOptions& opt,
                           std::vector<std::string>* diag) {
  auto note = [&](const std::string& s) {
    if (diag) diag->push_back(s);
  };
  if (!a.on_S) return CatalogLabel::Generic;
  if (a.semi_bridge) return CatalogLabel::SemiBridge;
  if (a.on_E || a.cls.type == SingularType::Exceptional) {
    note("anchor lies on S and E (n.F = 0): outside the catalog");
    return CatalogLabel::Unclassified;
  }
  if (a.cls.type == SingularType::Degenerate || !std::isfinite(a.us)) {
    note("n.[[G,F],G] vanishes without the semi-bridge tag");
    return CatalogLabel::Unclassified;
  }
  const bool hyp = a.cls.type == SingularType::Hyperbolic;
  if (a.saturated) {
    try {
      const double rate = us_rate_along_singular_flow(sys, a.q, opt.tol.singular);
      note("d(u_s)/dt along X_s = " + std::to_string(rate));
      if (rate == 0) {
        note("u_s stationary along X_s at the saturation point");
        return CatalogLabel::Unclassified;
      }
      return rate > 0 ? CatalogLabel::SaturatingCase1 : CatalogLabel::SaturatingCase2;
    } catch (const std::exception& e) {
      note(std::string("saturation rate unavailable: ") + e.what());
      return CatalogLabel::Unclassified;
    }
  }
  if (!hyp && std::abs(std::abs(a.us) - 3.0) <= opt.tol.bifurcation) return CatalogLabel::EllipticBifurcation;
  if (a.admissible) return hyp ? CatalogLabel::HyperbolicFold : CatalogLabel::EllipticFold;

  // |u_s| > 1 at the anchor: the fold label is kept when the local model (box) holds
  // admissible S points of the same type.
  TargetGrid g;
  g.y_lo = a.q[1] - opt.box;
  g.y_hi = a.q[1] + opt.box;
  g.z_lo = a.q[2] - opt.box;
  g.z_hi = a.q[2] + opt.box;
  g.ny = g.nz = std::max(3, opt.box_samples);
  bool found = false;
  try {
    const TargetGrid c = clip_to_validity(sys, g);
    for (int j = 0; j < c.nz && !found; ++j) {
      const LineRoots l = line_roots(sys, c, true, c.z(j), opt.tol);
      for (const auto& s : l.S)
        if (s.admissible && s.cls.type == a.cls.type && !s.on_E) found = true;
    }
  } catch (const std::exception& e) {
    note(std::string("box scan failed: ") + e.what());
  }
  if (found) {
    note("|u_s| > 1 at the anchor; admissible S points of the same type inside the local box");
    return hyp ? CatalogLabel::HyperbolicFold : CatalogLabel::EllipticFold;
  }
  return hyp ? CatalogLabel::ParabolicNonAdmissibleHyperbolic : CatalogLabel::ParabolicNonAdmissibleElliptic;
}

SynthesisReport local_synthesis(const ControlAffineSystem& sys, const Vec3d& q0, const SynthesisOptions& opt) {
  SynthesisReport r;
  r.parameters = sys.parameters;
  r.anchor = tag_point(sys, q0, opt.tol);
  r.label = catalog_label(sys, r.anchor, opt, &r.diagnostics);
  r.eps = r.label == CatalogLabel::Generic ? r.anchor.eps : 0;
  r.policy = policy_for(r.label, r.eps);
  r.parameters.emplace_back("u_s", r.anchor.us);
  r.parameters.emplace_back("n.[G,F]", r.anchor.nGF);
  r.parameters.emplace_back("n.F", r.anchor.nF);
  r.parameters.emplace_back("n.[[G,F],G]", r.anchor.nGFG);
  r.parameters.emplace_back("n.[[G,F],F]", r.anchor.nGFF);
  for (const char* k : {"Wp", "Wm", "Ws", "Gs", "C1", "C12"}) r.loci[k];
  if (!opt.loci) return r;

  // target samples around the anchor plus the S points crossing the same window
  TargetGrid g;
  g.y_lo = q0[1] - opt.loci_radius;
  g.y_hi = q0[1] + opt.loci_radius;
  g.z_lo = q0[2] - opt.loci_radius;
  g.z_hi = q0[2] + opt.loci_radius;
  g.ny = g.nz = std::max(2, opt.loci_samples);
  std::vector<Vec3d> samples;
  try {
    g = clip_to_validity(sys, g);
    for (int j = 0; j < g.nz; ++j)
      for (int i = 0; i < g.ny; ++i) samples.push_back(on_target(sys, g.y(i), g.z(j)));
    TargetGrid fine = g;
    fine.ny = fine.nz = 4 * g.ny;
    for (int j = 0; j < fine.nz; ++j)
      for (const auto& s : line_roots(sys, fine, true, fine.z(j), opt.tol).S) samples.push_back(s.q);
  } catch (const std::exception& e) {
    r.diagnostics.push_back(std::string("loci window: ") + e.what());
  }
  r.chains = backward_bc_sweep(sys, samples, opt.sweep);

  bool switches[2] = {false, false};
  for (const auto& c : r.chains) {
    for (size_t k = 0; k < c.arcs.size(); ++k) {
      const auto& arc = c.arcs[k];
      const bool followed = k + 1 < c.arcs.size();
      if (arc.label == ArcLabel::Singular) {
        for (const auto& z : arc.z) r.loci["Gs"].push_back(zq(z));
        if (followed) r.loci["Ws"].push_back(zq(arc.z.back()));
        continue;
      }
      if (!followed) continue;
      const bool plus = arc.label == ArcLabel::Plus;
      r.loci[plus ? "Wp" : "Wm"].push_back(zq(arc.z.back()));
      if (k == 0) switches[plus ? 0 : 1] = true;
    }
  }
  if (switches[0]) r.switching_controls.push_back("+");
  if (switches[1]) r.switching_controls.push_back("-");

  if (opt.cut && is_elliptic_family(r.label)) {
    SplitOptions so = opt.split;
    if (so.w0_grid.empty() || so.s0_grid.empty()) {
      const int n = 5;
      const double h = opt.cut_radius;
      so.w0_grid.clear();
      so.s0_grid.clear();
      for (int k = 0; k < n; ++k) {
        so.w0_grid.push_back(q0[1] - h + 2 * h * k / (n - 1));
        so.s0_grid.push_back(q0[2] - h + 2 * h * k / (n - 1));
      }
    }
    for (SplitKind kind : {SplitKind::C1, SplitKind::C12}) {
      try {
        for (const auto& s : splitting_locus(sys, kind, so))
          if (s.switch_free) r.loci[to_string(kind)].push_back(s.q);
      } catch (const std::exception& e) {
        r.diagnostics.push_back(std::string(to_string(kind)) + " locus failed: " + e.what());
      }
    }
  }
  return r;
}

nlohmann::json to_json(const StratumSample& s) {
  return {{"q", {s.q[0], s.q[1], s.q[2]}},
          {"on_S", s.on_S},
          {"on_E", s.on_E},
          {"classification", to_string(s.cls.type)},
          {"u_s", std::isfinite(s.us) ? nlohmann::json(s.us) : nlohmann::json(nullptr)},
          {"admissible", s.admissible},
          {"saturated", s.saturated},
          {"semi_bridge", s.semi_bridge},
          {"eps", s.eps},
          {"n_GF", s.nGF},
          {"n_F", s.nF},
          {"n_GFG", s.nGFG},
          {"n_GFF", s.nGFF}};
}

nlohmann::json to_json(const SynthesisReport& r, bool with_chains) {
  nlohmann::json j;
  j["label"] = to_string(r.label);
  if (r.label == CatalogLabel::Generic) j["eps"] = r.eps;
  j["policy"] = r.policy;
  j["anchor"] = to_json(r.anchor);
  nlohmann::json loci = nlohmann::json::object();
  for (const auto& [k, v] : r.loci) loci[k] = {{"count", v.size()}, {"points", points_json(v)}};
  j["loci"] = loci;
  j["switching_controls"] = r.switching_controls;
  nlohmann::json par = nlohmann::json::object();
  for (const auto& [k, v] : r.parameters) par[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  j["parameters"] = par;
  j["diagnostics"] = r.diagnostics;
  if (with_chains) {
    j["chains"] = nlohmann::json::array();
    for (const auto& c : r.chains) j["chains"].push_back(to_json(c, 10));
  }
  return j;
}

// ---------------------------------------------------------------- brute-force oracle

namespace {

struct OracleCtx {
  const ControlAffineSystem* sys;
  OracleOptions opt;
  Vec3d n;
  double level;
  double side;  // sign of n.q - level at the start
};

bool finite_state(const Vec3d& q) { return std::isfinite(q[0]) && std::isfinite(q[1]) && std::isfinite(q[2]); }

// u for a label; NaN when the singular feedback is undefined or not admissible
double oracle_control(const OracleCtx& c, char label, const Vec3d& q) {
  if (label == '+') return 1.0;
  if (label == '-') return -1.0;
  try {
    const double u = singular_control(*c.sys, q);
    return std::abs(u) <= 1.0 + 1e-12 ? u : kNaN;
  } catch (const std::exception&) {
    return kNaN;
  }
}

// One RK4 step; false if the control becomes undefined inside the step.
bool rk4_step(const OracleCtx& c, char label, Vec3d& q, double h) {
  auto f = [&](const Vec3d& x, bool& ok) {
    const double u = oracle_control(c, label, x);
    if (!std::isfinite(u)) {
      ok = false;
      return Vec3d{};
    }
    return axpy(c.sys->drift().eval(x), u, c.sys->control().eval(x));
  };
  bool ok = true;
  const Vec3d k1 = f(q, ok);
  const Vec3d k2 = f(axpy(q, 0.5 * h, k1), ok);
  const Vec3d k3 = f(axpy(q, 0.5 * h, k2), ok);
  const Vec3d k4 = f(axpy(q, h, k3), ok);
  if (!ok) return false;
  for (int i = 0; i < 3; ++i) q[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return finite_state(q) && c.sys->validity.contains(q);
}

double level_fn(const OracleCtx& c, const Vec3d& q) { return c.side * (dot(c.n, q) - c.level); }

// lexicographic order: time, then number of arcs, then pattern
bool better(const OracleCandidate& a, const OracleCandidate& b) {
  if (!b.valid()) return a.valid();
  if (!a.valid()) return false;
  if (std::abs(a.time - b.time) > 1e-12) return a.time < b.time;
  if (a.pattern.size() != b.pattern.size()) return a.pattern.size() < b.pattern.size();
  return a.pattern < b.pattern;
}

struct Search {
  OracleCandidate best, best_bb;
  long long steps = 0;
  void offer(const OracleCandidate& c) {
    if (better(c, best)) best = c;
    if (c.pattern.find('s') == std::string::npos && better(c, best_bb)) best_bb = c;
  }
};

// Final arc: run `label` from q (elapsed time t0) until the target is crossed.
void final_arc(const OracleCtx& c, const std::string& prefix, std::vector<double> durs, Vec3d q, double t0,
               std::atomic<double>& bound, Search& s) {
  const std::string pat = prefix;
  const char label = pat.back();
  const double dt = c.opt.dt;
  double g0 = level_fn(c, q);
  double t = t0;
  const double limit = std::min(c.opt.horizon, bound.load(std::memory_order_relaxed) + 1e-12);
  while (t < limit) {
    Vec3d q1 = q;
    ++s.steps;
    if (!rk4_step(c, label, q1, dt)) return;
    const double g1 = level_fn(c, q1);
    if (g1 <= 0) {
      const double frac = g0 / (g0 - g1);
      OracleCandidate cand;
      cand.pattern = pat;
      durs.push_back(t + frac * dt - t0);
      cand.durations = durs;
      cand.time = t + frac * dt;
      s.offer(cand);
      // a shorter time tightens the shared bound (monotone)
      double cur = bound.load(std::memory_order_relaxed);
      while (cand.time < cur && !bound.compare_exchange_weak(cur, cand.time, std::memory_order_relaxed)) {
      }
      return;
    }
    q = q1;
    g0 = g1;
    t += dt;
  }
}

// Prefix arcs of the pattern with gridded durations; the last arc is handled by final_arc.
void enumerate(const OracleCtx& c, const std::string& pat, size_t k, std::vector<double>& durs, Vec3d q, double t,
               std::atomic<double>& bound, Search& s) {
  if (k + 1 == pat.size()) {
    final_arc(c, pat, durs, q, t, bound, s);
    return;
  }
  const double dt = c.opt.dt;
  for (int j = 1;; ++j) {
    if (t + j * dt >= std::min(c.opt.horizon, bound.load(std::memory_order_relaxed) + 1e-12)) return;
    ++s.steps;
    if (!rk4_step(c, pat[k], q, dt)) return;
    if (level_fn(c, q) <= 0) return;  // reaching the target here is a shorter pattern
    durs.push_back(j * dt);
    enumerate(c, pat, k + 1, durs, q, t + j * dt, bound, s);
    durs.pop_back();
  }
}

std::vector<std::string> oracle_patterns(const OracleOptions& opt, int n_arcs) {
  std::string labels = opt.allow_singular ? "+-s" : "+-";
  std::vector<std::string> out{""};
  for (int k = 0; k < n_arcs; ++k) {
    std::vector<std::string> next;
    for (const auto& p : out)
      for (char l : labels)
        if (p.empty() || p.back() != l) next.push_back(p + l);
    out = std::move(next);
  }
  return out;
}

OracleResult run_oracle(const ControlAffineSystem& sys, const Vec3d& q_start, const OracleOptions& opt, bool parallel) {
  if (!(opt.dt > 0) || opt.max_arcs < 1 || !(opt.horizon > 0)) throw std::invalid_argument("oracle: bad options");
  OracleCtx c{&sys, opt, sys.target().normal, sys.target().level, 1.0};
  const double g0 = dot(c.n, q_start) - c.level;
  if (g0 == 0) throw std::invalid_argument("oracle: start lies on the target");
  c.side = g0 > 0 ? 1.0 : -1.0;
  std::atomic<double> bound{opt.horizon};
  Search total;

  // short patterns first: they give the bound that prunes the three-arc enumeration
  for (int n = 1; n <= std::min(2, opt.max_arcs); ++n) {
    for (const auto& pat : oracle_patterns(opt, n)) {
      std::vector<double> durs;
      enumerate(c, pat, 0, durs, q_start, 0.0, bound, total);
    }
  }
  for (int n = 3; n <= opt.max_arcs; ++n) {
    // tasks: (pattern, first switch index j1); the prefix state is recomputed per task
    const auto pats = oracle_patterns(opt, n);
    const int jmax = static_cast<int>(std::ceil(opt.horizon / opt.dt));
    const int ntask = static_cast<int>(pats.size()) * jmax;
    std::vector<Search> local(parallel ? ntask : 1);
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
    for (int k = 0; k < ntask; ++k) {
      Search& s = local[parallel ? k : 0];
      const std::string& pat = pats[k / jmax];
      const int j1 = k % jmax + 1;
      if (j1 * opt.dt >= bound.load(std::memory_order_relaxed) + 1e-12) continue;
      Vec3d q = q_start;
      bool ok = true;
      for (int j = 0; j < j1 && ok; ++j) {
        ++s.steps;
        ok = rk4_step(c, pat[0], q, opt.dt) && level_fn(c, q) > 0;
      }
      if (!ok) continue;
      std::vector<double> durs{j1 * opt.dt};
      enumerate(c, pat, 1, durs, q, j1 * opt.dt, bound, s);
    }
    for (const auto& s : local) {
      total.steps += s.steps;
      if (better(s.best, total.best)) total.best = s.best;
      if (better(s.best_bb, total.best_bb)) total.best_bb = s.best_bb;
    }
  }
  OracleResult r;
  r.reachable = total.best.valid();
  r.best = total.best;
  r.best_bang_bang = total.best_bb;
  r.steps = total.steps;
  return r;
}

}  // namespace

OracleResult brute_force_oracle(const ControlAffineSystem& sys, const Vec3d& q_start, const OracleOptions& opt) {
  return run_oracle(sys, q_start, opt, true);
}
OracleResult brute_force_oracle_serial(const ControlAffineSystem& sys, const Vec3d& q_start, const OracleOptions& opt) {
  return run_oracle(sys, q_start, opt, false);
}

std::string reduced_pattern(const OracleCandidate& c, double min_duration) {
  std::string out;
  for (size_t k = 0; k < c.pattern.size(); ++k) {
    if (k < c.durations.size() && c.durations[k] < min_duration) continue;
    if (out.empty() || out.back() != c.pattern[k]) out.push_back(c.pattern[k]);
  }
  return out;
}

std::optional<ExtremalArcChain> oracle_probe_chain(const ControlAffineSystem& sys, const SynthesisReport& r,
                                                   double tau_s, double eps, const SynthesisOptions& opt,
                                                   const SweepOptions& chain_opt, double min_time) {
  const bool fold = r.label == CatalogLabel::HyperbolicFold || r.label == CatalogLabel::SaturatingCase1 ||
                    r.label == CatalogLabel::SaturatingCase2;
  if (fold) {
    std::vector<StratumSample> cand;
    if (r.anchor.admissible) cand.push_back(r.anchor);
    TargetGrid g;
    g.y_lo = r.anchor.q[1] - opt.box;
    g.y_hi = r.anchor.q[1] + opt.box;
    g.z_lo = r.anchor.q[2] - opt.box;
    g.z_hi = r.anchor.q[2] + opt.box;
    g.ny = g.nz = std::max(3, opt.box_samples);
    try {
      g = clip_to_validity(sys, g);
      std::vector<StratumSample> box;
      for (int j = 0; j < g.nz; ++j)
        for (const auto& s : line_roots(sys, g, true, g.z(j), opt.tol).S)
          if (s.admissible && !s.saturated && s.cls.type == r.anchor.cls.type) box.push_back(s);
      std::stable_sort(box.begin(), box.end(), [&](const StratumSample& a, const StratumSample& b) {
        return norm(axpy(a.q, -1.0, r.anchor.q)) < norm(axpy(b.q, -1.0, r.anchor.q));
      });
      cand.insert(cand.end(), box.begin(), box.end());
    } catch (const std::exception&) {
    }
    for (const auto& s : cand) {
      try {
        auto c = singular_exit_chain(sys, s.q, tau_s, eps, chain_opt);
        if (!c.arcs.empty() && !c.truncated && c.total_time > min_time) return c;
      } catch (const std::exception&) {
      }
    }
  }
  for (auto& c : bc_chains_from(sys, r.anchor.q, 0, chain_opt))
    if (!c.arcs.empty() && !c.arcs.back().z.empty() && c.total_time > min_time) return c;
  return std::nullopt;
}

OracleVerdict oracle_check(const ControlAffineSystem& sys, const ExtremalArcChain& chain, const std::string& policy,
                           const OracleOptions& opt_in) {
  if (chain.arcs.empty() || chain.arcs.back().z.empty()) throw std::invalid_argument("oracle_check: empty chain");
  OracleVerdict v;
  v.chain_time = chain.total_time;
  v.predicted_pattern = chain.pattern();
  OracleOptions opt = opt_in;
  opt.horizon = std::min(opt.horizon, v.chain_time + 20 * opt.dt);
  v.oracle = brute_force_oracle(sys, zq(chain.arcs.back().z.back()), opt);
  if (!v.oracle.reachable) return v;
  v.pattern_match = std::regex_match(reduced_pattern(v.oracle.best, 2 * opt.dt), std::regex(policy));
  v.time_match = std::abs(v.oracle.best.time - v.chain_time) <= 2 * opt.dt;
  return v;
}

}  // namespace crnsynth
