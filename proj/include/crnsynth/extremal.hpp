#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crnsynth/liealg.hpp"
#include "crnsynth/ode.hpp"
#include "crnsynth/singular.hpp"

namespace crnsynth {

using ZState = std::array<double, 6>;  // (q, p)

inline Vec3d zq(const ZState& z) { return {z[0], z[1], z[2]}; }
inline Vec3d zp(const ZState& z) { return {z[3], z[4], z[5]}; }
inline ZState make_z(const Vec3d& q, const Vec3d& p) { return {q[0], q[1], q[2], p[0], p[1], p[2]}; }

enum class ArcLabel { Plus, Minus, Singular };
const char* to_string(ArcLabel l);
inline ArcLabel bang_label(double eps) { return eps > 0 ? ArcLabel::Plus : ArcLabel::Minus; }

struct ExtremalPoint {
  Vec3d q{};
  Vec3d p{};
  double u = 0;
  bool singular = false;
  double H = 0;  // p.(F + uG)
  double M = 0;  // max over |u| <= 1
};
ExtremalPoint make_extremal_point(const ControlAffineSystem& sys, const Vec3d& q, const Vec3d& p, double u,
                                  bool singular = false);

enum class SwitchKind { Ordinary, FoldParabolic, FoldHyperbolic, FoldElliptic };
const char* to_string(SwitchKind k);

class DegenerateFoldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SwitchingRecord {
  double t = 0;
  Vec3d q{}, p{};
  double phi = 0, phidot = 0, phiddot_plus = 0, phiddot_minus = 0;
  SwitchKind kind = SwitchKind::Ordinary;
};

struct SwitchTolerances {
  double rel = 1e-9;  // Phi and Phi' measured relative to |p| |G| and |p| |[G,F]|
};

// Evaluates Phi and its derivatives at (q, p) and labels the point.
SwitchingRecord switching_record(const ControlAffineSystem& sys, double t, const Vec3d& q, const Vec3d& p,
                                 const SwitchTolerances& tol = {});
// Parabolic / hyperbolic / elliptic from the signs of Phi''+ and Phi''-.
SwitchKind classify_fold(const SwitchingRecord& rec, double tol = 1e-12);

// (dH/dp, -dH/dq) with H = p.(F + uG)
ZState extremal_rhs(const ControlAffineSystem& sys, const ZState& z, double u);
// singular control written with the costate: -p.[[G,F],F] / p.[[G,F],G]
double costate_singular_control(const ControlAffineSystem& sys, const Vec3d& q, const Vec3d& p);

struct ExtremalArc {
  ArcLabel label = ArcLabel::Plus;
  double t0 = 0, t1 = 0;
  std::vector<double> t;
  std::vector<ZState> z;
  ExtremalPoint entry, exit;
};

struct BangOptions {
  OdeOptions ode;
  SwitchTolerances tol;
  bool continue_past_switches = false;
  double exclusion = 0.0;  // no switch detection during the first |exclusion| of time
  bool stop_outside_validity = true;
};

struct BangResult {
  ExtremalArc arc;
  std::vector<SwitchingRecord> records;
  bool error = false;
  std::string message;
};

// Integrates u = eps from z0 over [t_span[0], t_span[1]], stopping at the first zero of Phi
// unless continue_past_switches.
BangResult integrate_bang(const ControlAffineSystem& sys, const ZState& z0, double eps,
                          const std::array<double, 2>& t_span, const BangOptions& opt = {});

struct ExtremalArcChain {
  int sample = -1;
  Vec3d target{};
  std::vector<ExtremalArc> arcs;
  std::vector<SwitchingRecord> switches;
  double total_time = 0;
  bool truncated = false;
  std::string stop_reason;
  // forward-time pattern, e.g. "+-" or "+s-"
  std::string pattern() const;
};

struct SweepOptions {
  double horizon = 0.5;
  int max_arcs = 4;
  bool branch_at_folds = true;
  SwitchTolerances tol;
  OdeOptions ode;
  double singular_exit_exclusion = 1e-6;
  bool stop_outside_validity = true;
};

ExtremalArcChain extend_chain(const ControlAffineSystem& sys, ExtremalArcChain chain, ArcLabel label,
                              const ZState& z0, double t0, const SweepOptions& opt,
                              std::vector<ExtremalArcChain>* branches = nullptr);

// Singular arc from a fold point q0 of the target for backward time tau_s, then the bang
// eps up to opt.horizon (switches handled as in extend_chain).
ExtremalArcChain singular_exit_chain(const ControlAffineSystem& sys, const Vec3d& q0, double tau_s, double eps,
                                     const SweepOptions& opt);

// Chains for one target sample (several when the sample is a fold point).
std::vector<ExtremalArcChain> bc_chains_from(const ControlAffineSystem& sys, const Vec3d& q0, int sample_index,
                                             const SweepOptions& opt);

std::vector<ExtremalArcChain> backward_bc_sweep(const ControlAffineSystem& sys, const std::vector<Vec3d>& samples,
                                                const SweepOptions& opt);
std::vector<ExtremalArcChain> backward_bc_sweep_serial(const ControlAffineSystem& sys,
                                                       const std::vector<Vec3d>& samples, const SweepOptions& opt);

nlohmann::json to_json(const SwitchingRecord& r);
nlohmann::json to_json(const ExtremalArcChain& c, int point_stride = 1);

}  // namespace crnsynth
