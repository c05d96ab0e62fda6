#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crnsynth/liealg.hpp"
#include "crnsynth/ode.hpp"

namespace crnsynth {

struct SingularTolerances {
  double deg_rel = 1e-9;  // |D| below deg_rel * scale -> degenerate
  double exc_rel = 1e-9;  // |D''| below exc_rel * scale -> exceptional
};

class DegenerateSingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SingularType { Hyperbolic, Elliptic, Exceptional, Degenerate };
const char* to_string(SingularType t);

struct SingularClassification {
  SingularType type = SingularType::Degenerate;
  double D = 0, Dp = 0, Dpp = 0;
  double us = 0;  // NaN when degenerate and no closed-form feedback exists
};

// Scale used for the dimensionless degeneracy threshold.
double degeneracy_scale(const BracketFrame& f);
double exceptional_scale(const BracketFrame& f);

// u_s = -D'/D, or the model's closed-form feedback when it carries one.
double singular_control(const ControlAffineSystem& sys, const Vec3d& q, const SingularTolerances& tol = {});
SingularClassification classify(const ControlAffineSystem& sys, const Vec3d& q, const SingularTolerances& tol = {});
// Same classification written with an explicit costate (p.F > 0 orientation is applied here):
// D -> p.[[G,F],G], D' -> p.[[G,F],F], D'' -> p.F.
SingularClassification classify_with_costate(const ControlAffineSystem& sys, const Vec3d& q, const Vec3d& p,
                                             const SingularTolerances& tol = {});

Vec3d singular_field(const ControlAffineSystem& sys, const Vec3d& q, const SingularTolerances& tol = {});
Vec3d desingularized_field(const ControlAffineSystem& sys, const Vec3d& q);
// X_s as a differentiable field (u_s from -D'/D through AD).
SmoothField singular_field_smooth(const ControlAffineSystem& sys);

// p with p.G = p.[G,F] = 0, |p| = 1, p.F >= 0.
Vec3d reconstruct_costate(const ControlAffineSystem& sys, const Vec3d& q);

struct SingularArc {
  std::vector<double> t;
  std::vector<Vec3d> q;
  std::vector<double> us;
  std::vector<SingularType> type;
  std::vector<bool> admissible;
  bool saturated = false;
  double t_saturation = 0.0;
  bool degenerate_stop = false;
  std::string stop_reason;
  bool empty() const { return t.size() < 2; }
  double t_end() const { return t.empty() ? 0.0 : t.back(); }
};

struct SingularOptions {
  SingularTolerances tol;
  OdeOptions ode;
  double start_saturation_tol = 1e-12;
};

// Integrates q' = X_s(q) on [0, horizon] (horizon may be negative).
SingularArc integrate_singular(const ControlAffineSystem& sys, const Vec3d& q0, double horizon, bool admissibility,
                               const SingularOptions& opt = {});

struct FocalInit {
  Vec3d W0{};
  double lambda1 = 0, lambda2 = 0;
};
FocalInit make_focal_init(const ControlAffineSystem& sys, const Vec3d& q0, double lambda1, double lambda2);
// Decompose a direction in the (G, [G,F]) frame by least squares; residual must be below 1e-8 relative.
FocalInit focal_init_from_direction(const ControlAffineSystem& sys, const Vec3d& q0, const Vec3d& W);

struct VariationalOptions {
  double step = 1e-4;          // max step of the variational integration
  double exclusion_steps = 10;  // zeros closer than exclusion_steps*step to t=0 are ignored
  double time_tol = 1e-10;
};

// First zero of det(V(t), G(q(t)), F(q(t))) along q' = X(q), V' = DX(q) V.
std::optional<double> variational_first_zero(const SmoothField& X, const SmoothField& G, const SmoothField& F,
                                             const Vec3d& q0, const Vec3d& V0, double horizon,
                                             const VariationalOptions& opt = {});

std::optional<double> conjugate_time(const ControlAffineSystem& sys, const SingularArc& arc,
                                     const VariationalOptions& opt = {});
std::optional<double> focal_time(const ControlAffineSystem& sys, const SingularArc& arc, const FocalInit& init,
                                 const VariationalOptions& opt = {});

}  // namespace crnsynth
