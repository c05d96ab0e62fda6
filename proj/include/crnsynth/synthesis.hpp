#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crnsynth/crn.hpp"
#include "crnsynth/extremal.hpp"
#include "crnsynth/liealg.hpp"
#include "crnsynth/lieseries.hpp"
#include "crnsynth/singular.hpp"

namespace crnsynth {

// ---------------------------------------------------------------- stratification

// Rectangle on the target {x = d}, in the (y, z) coordinates (z is v for McKeithan).
struct TargetGrid {
  double y_lo = -0.3, y_hi = 0.3;
  double z_lo = -0.3, z_hi = 0.3;
  int ny = 61, nz = 61;
  double y(int i) const { return ny == 1 ? y_lo : y_lo + (y_hi - y_lo) * i / (ny - 1); }
  double z(int j) const { return nz == 1 ? z_lo : z_lo + (z_hi - z_lo) * j / (nz - 1); }
};

struct StrataTolerances {
  double on_locus = 1e-9;     // |n.[G,F]| or |n.F| below this (relative to the field size) tags the locus
  double saturation = 1e-6;   // ||u_s| - 1|
  double bifurcation = 1e-6;  // ||u_s| - 3|
  double semi_bridge = 1e-9;  // |n.[[G,F],G]| relative
  SingularTolerances singular;
};

struct StratumSample {
  Vec3d q{};
  bool on_S = false;
  bool on_E = false;
  SingularClassification cls;
  double us = 0;
  bool admissible = false;
  bool saturated = false;
  bool semi_bridge = false;
  int eps = 0;  // ordinary terminal control -sign(n.[G,F]); 0 on S
  double nGF = 0, nF = 0, nGFG = 0, nGFF = 0;
};

StratumSample tag_point(const ControlAffineSystem& sys, const Vec3d& q, const StrataTolerances& tol = {});

struct Stratification {
  std::vector<StratumSample> grid;         // row-major over (z, y)
  std::vector<StratumSample> S, E;         // refined curve samples
  std::vector<StratumSample> saturation;   // |u_s| = 1 on S
  std::vector<StratumSample> bifurcation;  // |u_s| = 3 on S
  std::vector<StratumSample> semi_bridge;  // n.[[G,F],G] = 0 on S
};

Stratification stratify_target(const ControlAffineSystem& sys, const TargetGrid& grid, const StrataTolerances& tol = {});
Stratification stratify_target_serial(const ControlAffineSystem& sys, const TargetGrid& grid,
                                      const StrataTolerances& tol = {});

// Roots of f on [lo, hi] from sign changes on n equal cells, refined to machine precision.
std::vector<double> roots_on_segment(const std::function<double(double)>& f, double lo, double hi, int n);

// ---------------------------------------------------------------- McKeithan closed forms

struct LocusPoint {
  double v = 0, y = 0;
  int branch = 0;  // 0: minus root, 1: plus root
  double discriminant = 0;
  double residual = 0;
};
struct McKeithanLocus {
  std::vector<LocusPoint> points;
  double min_discriminant = 0;
  bool discriminant_positive = true;
};

double mckeithan_S_residual(const McKeithanParams& p, double d, double v, double y);
double mckeithan_E_residual(const McKeithanParams& p, double d, double v, double y);
// Roots in y of the quadratic for each v, kept when 0 <= y <= delta2.
McKeithanLocus mckeithan_singular_locus(const McKeithanParams& p, double d, const std::vector<double>& v);
McKeithanLocus mckeithan_exceptional_locus(const McKeithanParams& p, double d, const std::vector<double>& v);
// Smallest (y, v) distance between the two sample sets; +inf if either is empty.
double locus_min_distance(const McKeithanLocus& a, const McKeithanLocus& b);

struct SemiBridgeResult {
  std::vector<double> v;
  std::vector<double> ad_residual;  // |n.[[G,F],G]| at (d, y, v)
  std::string reason;
};
// v^(a3 - a2) = -((a2 - 1) a2 b2) / ((a3 - 1) a3 b3)
SemiBridgeResult semi_bridge_points(const McKeithanParams& p, double d);

// ---------------------------------------------------------------- local synthesis

enum class CatalogLabel {
  Generic,
  HyperbolicFold,
  EllipticFold,
  ParabolicNonAdmissibleHyperbolic,
  ParabolicNonAdmissibleElliptic,
  SaturatingCase1,
  SaturatingCase2,
  EllipticBifurcation,
  SemiBridge,
  Unclassified
};
const char* to_string(CatalogLabel l);

struct SynthesisOptions {
  StrataTolerances tol;
  double box = 0.3;  // half-width of the neighbourhood in which the local model is trusted
  int box_samples = 41;
  bool loci = true;
  double loci_radius = 0.3;  // window of target samples feeding the backward sweep
  int loci_samples = 7;
  double cut_radius = 0.05;  // half-width of the C1 / C12 grid (series about the origin of the target)
  SweepOptions sweep;
  bool cut = true;  // C1 / C12 through the series engine for elliptic labels
  SplitOptions split;
};

struct SynthesisReport {
  CatalogLabel label = CatalogLabel::Unclassified;
  int eps = 0;               // Generic only
  std::string policy;        // regex over forward patterns, e.g. "^[+-]s[+-]?$"
  StratumSample anchor;
  std::map<std::string, std::vector<Vec3d>> loci;  // Wp, Wm, Ws, Gs, C1, C12
  std::vector<std::string> switching_controls;     // bang labels whose BC extremals near the anchor switch
  std::vector<std::pair<std::string, double>> parameters;
  std::vector<std::string> diagnostics;
  std::vector<ExtremalArcChain> chains;
};

// Label from the anchor tags alone (no sweeps).
CatalogLabel catalog_label(const ControlAffineSystem& sys, const StratumSample& anchor, const SynthesisOptions& opt,
                           std::vector<std::string>* diagnostics = nullptr);
SynthesisReport local_synthesis(const ControlAffineSystem& sys, const Vec3d& q0, const SynthesisOptions& opt = {});

nlohmann::json to_json(const StratumSample& s);
nlohmann::json to_json(const SynthesisReport& r, bool with_chains = false);

// ---------------------------------------------------------------- brute-force oracle

struct OracleOptions {
  double dt = 1e-3;
  int max_arcs = 3;
  double horizon = 1.0;
  bool allow_singular = true;
};

struct OracleCandidate {
  std::string pattern;  // forward order
  std::vector<double> durations;
  double time = 0;
  bool valid() const { return !pattern.empty(); }
};

struct OracleResult {
  bool reachable = false;
  OracleCandidate best;
  OracleCandidate best_bang_bang;
  long long steps = 0;
};

OracleResult brute_force_oracle(const ControlAffineSystem& sys, const Vec3d& q_start, const OracleOptions& opt = {});
OracleResult brute_force_oracle_serial(const ControlAffineSystem& sys, const Vec3d& q_start,
                                       const OracleOptions& opt = {});

// Pattern with arcs shorter than min_duration dropped and equal neighbours merged.
std::string reduced_pattern(const OracleCandidate& c, double min_duration);

struct OracleVerdict {
  bool pattern_match = false;
  bool time_match = false;
  double chain_time = 0;
  OracleResult oracle;
  std::string predicted_pattern;
};
// Starts the oracle at the far end of `chain` and compares pattern and time (within 2 dt).
OracleVerdict oracle_check(const ControlAffineSystem& sys, const ExtremalArcChain& chain, const std::string& policy,
                           const OracleOptions& opt = {});

// Chain used to probe a report with the oracle. For fold and saturating labels: the singular exit
// (singular for tau_s, then the bang eps) from the nearest admissible S point of the anchor's type
// inside the local box; otherwise the first BC chain from the anchor longer than min_time.
std::optional<ExtremalArcChain> oracle_probe_chain(const ControlAffineSystem& sys, const SynthesisReport& r,
                                                   double tau_s, double eps, const SynthesisOptions& opt,
                                                   const SweepOptions& chain_opt, double min_time = 0.0);

}  // namespace crnsynth
