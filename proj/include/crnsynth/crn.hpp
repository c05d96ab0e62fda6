#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "crnsynth/liealg.hpp"
#include "crnsynth/ode.hpp"

namespace crnsynth {

struct RateLaw {
  double A = 1.0;  // prefactor
  double E = 0.0;  // activation energy
  double R = 8.314;
};

// complex indices are 0-based here; the JSON format uses 1-based indices
struct Reaction {
  int source = 0;
  int target = 0;
  RateLaw rate;
};

class ReactionNetwork {
 public:
  ReactionNetwork(std::vector<std::string> species, Eigen::MatrixXi complexes, std::vector<Reaction> reactions);

  static ReactionNetwork from_json(const nlohmann::json& j);

  int num_species() const { return static_cast<int>(species_.size()); }
  int num_complexes() const { return static_cast<int>(Y_.cols()); }
  const std::vector<std::string>& species() const { return species_; }
  const Eigen::MatrixXi& complexes() const { return Y_; }
  const std::vector<Reaction>& reactions() const { return reactions_; }

 private:
  std::vector<std::string> species_;
  Eigen::MatrixXi Y_;  // m x n
  std::vector<Reaction> reactions_;
};

double arrhenius(const RateLaw& rate, double T);
Eigen::MatrixXd laplacian(const ReactionNetwork& net, double T);
Eigen::VectorXd mass_action_rhs(const ReactionNetwork& net, const Eigen::VectorXd& c, double T);
// d rhs / d c
Eigen::MatrixXd mass_action_jacobian(const ReactionNetwork& net, const Eigen::VectorXd& c, double T);

struct DeficiencyInfo {
  int n = 0;  // complexes
  int l = 0;  // linkage classes
  int s = 0;  // rank of the stoichiometric span
  int delta = 0;
};
DeficiencyInfo deficiency(const ReactionNetwork& net);
bool strongly_connected(const ReactionNetwork& net);

// Rows span the left kernel of the stoichiometric vectors (reduced echelon form).
Eigen::MatrixXd conservation_basis(const ReactionNetwork& net);
// Rows: orthonormal basis of the stoichiometric span.
Eigen::MatrixXd stoichiometric_basis(const ReactionNetwork& net);

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> c;
  int clamp_events = 0;
  double max_conservation_drift = 0.0;
};

// Samples at n_samples+1 equally spaced times in [0, t_end].
Trajectory simulate(const ReactionNetwork& net, const Eigen::VectorXd& c0, double T, double t_end, double tol,
                    int n_samples = 100);

struct EquilibriumResult {
  Eigen::VectorXd c;
  double residual = 0.0;
  int newton_iterations = 0;
};
EquilibriumResult equilibrium(const ReactionNetwork& net, const Eigen::VectorXd& c0, double T, double tol = 1e-12);

// McKeithan scheme with n_bound bound complexes C1..Cn: T+M -> C1 (k1),
// C_i -> C_{i+1} (kp[i]), C_i -> T+M (km[i]).  Species order (T, M, C1..Cn).
ReactionNetwork mckeithan_network(int n_bound, double k1, const std::vector<double>& kp,
                                  const std::vector<double>& km);
// Two bound complexes A, B with rates k1 (T+M->A), k2 (A->B), k3 (A->T+M), k4 (B->T+M).
ReactionNetwork mckeithan_network2(double k1, double k2, double k3, double k4);

struct McKeithanParams {
  double alpha2 = 1.0, alpha3 = 1.0, alpha4 = 1.0;
  double beta2 = 1.0, beta3 = 1.0, beta4 = 1.0;
  double delta1 = 1.0, delta2 = 1.0;
  double delta3() const { return delta1 + delta2; }
  double delta4() const { return delta1 * delta2; }
  void validate() const;
};

void mckeithan_domain_check(const McKeithanParams& p, double v);

struct McKeithanDrift {
  McKeithanParams p;
  template <class T>
  Vec3<T> operator()(const Vec3<T>& q) const {
    mckeithan_domain_check(p, primal(q[2]));
    const T& x = q[0];
    const T& y = q[1];
    const T& v = q[2];
    const T k2 = p.beta2 * real_pow(v, p.alpha2);
    const T k3 = p.beta3 * real_pow(v, p.alpha3);
    const T k4 = p.beta4 * real_pow(v, p.alpha4);
    const T s = x + y;
    return {-(k2 * x) - k3 * x - p.delta3() * v * s + p.delta4() * v + v * s * s, k2 * x - k4 * y, T(0.0)};
  }
};

// Goh-lifted system q = (x, y, v) with v' = u and target {x = d}.
ControlAffineSystem mckeithan_lift(const McKeithanParams& p, double d = 0.0);

// (A_i, E_i), i = 1..4  ->  alpha_i = E_i/E_1, beta_i = A_i / A_1^alpha_i for i = 2..4
McKeithanParams mckeithan_params_from_arrhenius(const std::array<RateLaw, 4>& rates, double delta1, double delta2);

}  // namespace crnsynth
