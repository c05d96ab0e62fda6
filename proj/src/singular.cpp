#include "crnsynth/singular.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace crnsynth {

const char* to_string(SingularType t) {
  switch (t) {
    case SingularType::Hyperbolic: return "hyperbolic";
    case SingularType::Elliptic: return "elliptic";
    case SingularType::Exceptional: return "exceptional";
    case SingularType::Degenerate: return "degenerate";
  }
  return "?";
}

double degeneracy_scale(const BracketFrame& f) {
  const double m = std::max({norm(f.F), norm(f.GFF), norm(f.GFG)});
  return norm(f.G) * norm(f.GF) * m;
}

double exceptional_scale(const BracketFrame& f) { return norm(f.G) * norm(f.GF) * norm(f.F); }

namespace {

bool degenerate(const Determinants& d, const BracketFrame& f, const SingularTolerances& tol) {
  return std::abs(d.D) <= tol.deg_rel * degeneracy_scale(f);
}

}  // namespace

double singular_control(const ControlAffineSystem& sys, const Vec3d& q, const SingularTolerances& tol) {
  if (sys.singular_feedback_override) {
    const double u = sys.singular_feedback_override(q);
    if (!std::isfinite(u)) throw DegenerateSingularError("singular feedback undefined at this point");
    return u;
  }
  const BracketFrame f = bracket_frame(sys, q);
  const Determinants d = determinants(f);
  if (degenerate(d, f, tol)) throw DegenerateSingularError("D vanishes: singular control undefined");
  return -d.Dp / d.D;
}

SingularClassification classify(const ControlAffineSystem& sys, const Vec3d& q, const SingularTolerances& tol) {
  const BracketFrame f = bracket_frame(sys, q);
  const Determinants d = determinants(f);
  SingularClassification c;
  c.D = d.D;
  c.Dp = d.Dp;
  c.Dpp = d.Dpp;
  c.us = std::numeric_limits<double>::quiet_NaN();
  if (degenerate(d, f, tol)) {
    c.type = SingularType::Degenerate;
    if (sys.singular_feedback_override) {
      const double u = sys.singular_feedback_override(q);
      if (std::isfinite(u)) c.us = u;
    }
    return c;
  }
  c.us = sys.singular_feedback_override ? sys.singular_feedback_override(q) : -d.Dp / d.D;
  if (std::abs(d.Dpp) <= tol.exc_rel * exceptional_scale(f)) {
    c.type = SingularType::Exceptional;
  } else {
    c.type = d.D * d.Dpp > 0 ? SingularType::Hyperbolic : SingularType::Elliptic;
  }
  return c;
}

SingularClassification classify_with_costate(const ControlAffineSystem& sys, const Vec3d& q, const Vec3d& p_in,
                                             const SingularTolerances& tol) {
  const BracketFrame f = bracket_frame(sys, q);
  Vec3d p = p_in;
  if (dot(p, f.F) < 0) p = scale(-1.0, p);
  SingularClassification c;
  c.D = dot(p, f.GFG);
  c.Dp = dot(p, f.GFF);
  c.Dpp = dot(p, f.F);
  const double np = norm(p);
  const double sD = np * std::max({norm(f.F), norm(f.GFF), norm(f.GFG)});
  if (std::abs(c.D) <= tol.deg_rel * sD) {
    c.type = SingularType::Degenerate;
    c.us = std::numeric_limits<double>::quiet_NaN();
    if (sys.singular_feedback_override) c.us = sys.singular_feedback_override(q);
    return c;
  }
  c.us = -c.Dp / c.D;
  if (std::abs(c.Dpp) <= tol.exc_rel * np * norm(f.F)) {
    c.type = SingularType::Exceptional;
  } else {
    c.type = c.D > 0 ? SingularType::Hyperbolic : SingularType::Elliptic;
  }
  return c;
}

Vec3d singular_field(const ControlAffineSystem& sys, const Vec3d& q, const SingularTolerances& tol) {
  const double u = singular_control(sys, q, tol);
  return axpy(sys.drift().eval(q), u, sys.control().eval(q));
}

Vec3d desingularized_field(const ControlAffineSystem& sys, const Vec3d& q) {
  const BracketFrame f = bracket_frame(sys, q);
  const Determinants d = determinants(f);
  return sub(scale(d.D, f.F), scale(d.Dp, f.G));
}

SmoothField singular_field_smooth(const ControlAffineSystem& sys) {
  SmoothField F = sys.drift(), G = sys.control(), GF = sys.gf(), GFG = sys.gfg(), GFF = sys.gff();
  auto fn = [F, G, GF, GFG, GFF](const auto& q) {
    using V = std::decay_t<decltype(q)>;
    using T = typename V::value_type;
    if constexpr (is_ladder_v<Dual<Dual<T>>>) {
      const V g = G(q), gf = GF(q);
      const T D = det3(g, gf, GFG(q));
      const T Dp = det3(g, gf, GFF(q));
      const T u = -(Dp / D);
      return axpy(F(q), u, g);
    } else {
      throw DerivativeDepthError();
      return V{};
    }
  };
  return SmoothField(fn, "Xs");
}

Vec3d reconstruct_costate(const ControlAffineSystem& sys, const Vec3d& q) {
  const BracketFrame f = bracket_frame(sys, q);
  Vec3d p = cross(f.G, f.GF);
  const double n = norm(p);
  if (!(n > 0)) throw DegenerateSingularError("G and [G,F] are collinear");
  p = scale(1.0 / n, p);
  if (dot(p, f.F) < 0) p = scale(-1.0, p);
  return p;
}

SingularArc integrate_singular(const ControlAffineSystem& sys, const Vec3d& q0, double horizon, bool admissibility,
                               const SingularOptions& opt) {
  SingularArc arc;
  double u0;
  try {
    u0 = singular_control(sys, q0, opt.tol);
  } catch (const DegenerateSingularError& e) {
    arc.stop_reason = std::string("degenerate at start: ") + e.what();
    arc.degenerate_stop = true;
    return arc;
  }
  if (admissibility && std::abs(u0) >= 1.0 - opt.start_saturation_tol) {
    arc.stop_reason = "saturated at start";
    arc.saturated = true;
    return arc;
  }
  using State = std::array<double, 3>;
  auto rhs = [&](const State& x, State& dx, double) {
    const Vec3d q{x[0], x[1], x[2]};
    const double u = singular_control(sys, q, SingularTolerances{0.0, 0.0});
    const Vec3d v = axpy(sys.drift().eval(q), u, sys.control().eval(q));
    dx = {v[0], v[1], v[2]};
  };
  std::vector<Event<State>> events;
  if (admissibility) {
    events.push_back({[&](double, const State& x) {
                        return std::abs(singular_control(sys, {x[0], x[1], x[2]}, SingularTolerances{0.0, 0.0})) - 1.0;
                      },
                      true, 0, "saturation"});
  }
  events.push_back({[&](double, const State& x) {
                      const BracketFrame f = bracket_frame(sys, {x[0], x[1], x[2]});
                      const Determinants d = determinants(f);
                      return std::abs(d.D) - opt.tol.deg_rel * degeneracy_scale(f);
                    },
                    true, 0, "degenerate"});
  auto observe = [&](double t, const State& x) {
    const Vec3d q{x[0], x[1], x[2]};
    arc.t.push_back(t);
    arc.q.push_back(q);
    const auto c = classify(sys, q, opt.tol);
    arc.us.push_back(c.us);
    arc.type.push_back(c.type);
    arc.admissible.push_back(std::abs(c.us) <= 1.0);
  };
  OdeOptions ode = opt.ode;
  ode.event_time_tol = std::min(ode.event_time_tol, 1e-10);
  // a degenerate frame at the start (override models) disables the degeneracy event
  const BracketFrame f0 = bracket_frame(sys, q0);
  if (std::abs(determinants(f0).D) <= opt.tol.deg_rel * degeneracy_scale(f0)) events.pop_back();
  auto res = integrate_ode<State>(rhs, {q0[0], q0[1], q0[2]}, 0.0, horizon, ode, events, observe);
  if (res.status == OdeStatus::EventStop) {
    const auto& hit = res.hits.back();
    const std::string& name = events[hit.index].name;
    if (name == "saturation") {
      arc.saturated = true;
      arc.t_saturation = hit.t;
      arc.stop_reason = "saturation";
    } else {
      arc.degenerate_stop = true;
      arc.stop_reason = "degenerate";
    }
  } else {
    arc.stop_reason = "horizon";
  }
  return arc;
}

FocalInit make_focal_init(const ControlAffineSystem& sys, const Vec3d& q0, double lambda1, double lambda2) {
  if (lambda1 == 0.0) throw std::invalid_argument("focal initialisation needs lambda1 != 0");
  if (lambda2 == 0.0)
    throw std::invalid_argument("focal initialisation along G alone gives a structural zero at t = 0");
  FocalInit fi;
  fi.lambda1 = lambda1;
  fi.lambda2 = lambda2;
  fi.W0 = add(scale(lambda1, sys.control().eval(q0)), scale(lambda2, sys.gf().eval(q0)));
  return fi;
}

FocalInit focal_init_from_direction(const ControlAffineSystem& sys, const Vec3d& q0, const Vec3d& W) {
  const Vec3d g = sys.control().eval(q0), gf = sys.gf().eval(q0);
  Eigen::Matrix<double, 3, 2> A;
  A << g[0], gf[0], g[1], gf[1], g[2], gf[2];
  Eigen::Vector3d w(W[0], W[1], W[2]);
  Eigen::Vector2d l = A.colPivHouseholderQr().solve(w);
  const double res = (A * l - w).norm();
  if (res > 1e-8 * std::max(1.0, w.norm())) throw std::invalid_argument("direction not in span{G,[G,F]}");
  return make_focal_init(sys, q0, l[0], l[1]);
}

std::optional<double> variational_first_zero(const SmoothField& X, const SmoothField& G, const SmoothField& F,
                                             const Vec3d& q0, const Vec3d& V0, double horizon,
                                             const VariationalOptions& opt) {
  using State = std::array<double, 6>;
  auto rhs = [&](const State& s, State& ds, double) {
    const Vec3d q{s[0], s[1], s[2]}, V{s[3], s[4], s[5]};
    const Vec3d xq = X.eval(q);
    const Vec3d dv = directional_at(X, q, V);
    ds = {xq[0], xq[1], xq[2], dv[0], dv[1], dv[2]};
  };
  auto cdet = [&](double, const State& s) {
    const Vec3d q{s[0], s[1], s[2]}, V{s[3], s[4], s[5]};
    return det3(V, G.eval(q), F.eval(q));
  };
  OdeOptions ode;
  ode.abs_tol = 1e-12;
  ode.rel_tol = 1e-12;
  ode.max_step = opt.step;
  ode.initial_step = opt.step;
  ode.event_time_tol = opt.time_tol;
  const double dir = horizon >= 0 ? 1.0 : -1.0;
  const double excl = dir * std::min(opt.exclusion_steps * opt.step, std::abs(horizon));
  State s0{q0[0], q0[1], q0[2], V0[0], V0[1], V0[2]};
  auto r1 = integrate_ode<State>(rhs, s0, 0.0, excl, ode);
  if (excl == horizon) return std::nullopt;
  std::vector<Event<State>> ev{{cdet, true, 0, "collinear"}};
  auto r2 = integrate_ode<State>(rhs, r1.x, excl, horizon, ode, ev);
  if (r2.status == OdeStatus::EventStop) return r2.t;
  return std::nullopt;
}

namespace {
void require_non_exceptional(const SingularArc& arc) {
  if (arc.empty()) throw std::invalid_argument("empty singular arc");
  for (auto t : arc.type)
    if (t == SingularType::Exceptional) throw std::runtime_error("classification changes along the arc (D'' = 0)");
  for (size_t i = 1; i < arc.type.size(); ++i)
    if (arc.type[i] != arc.type[0] && arc.type[i] != SingularType::Degenerate)
      throw std::runtime_error("classification changes along the arc");
}
}  // namespace

std::optional<double> conjugate_time(const ControlAffineSystem& sys, const SingularArc& arc,
                                     const VariationalOptions& opt) {
  require_non_exceptional(arc);
  const Vec3d q0 = arc.q.front();
  return variational_first_zero(singular_field_smooth(sys), sys.control(), sys.drift(), q0, sys.control().eval(q0),
                                arc.t_end(), opt);
}

std::optional<double> focal_time(const ControlAffineSystem& sys, const SingularArc& arc, const FocalInit& init,
                                 const VariationalOptions& opt) {
  require_non_exceptional(arc);
  if (init.lambda1 == 0.0) throw std::invalid_argument("focal initialisation needs lambda1 != 0");
  return variational_first_zero(singular_field_smooth(sys), sys.control(), sys.drift(), arc.q.front(), init.W0,
                                arc.t_end(), opt);
}

}  // namespace crnsynth
