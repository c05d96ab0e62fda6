#include "crnsynth/crn.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace crnsynth {

ReactionNetwork::ReactionNetwork(std::vector<std::string> species, Eigen::MatrixXi complexes,
                                 std::vector<Reaction> reactions)
    : species_(std::move(species)), Y_(std::move(complexes)), reactions_(std::move(reactions)) {
  if (static_cast<int>(species_.size()) != Y_.rows())
    throw std::invalid_argument("complex matrix must have one row per species");
  if ((Y_.array() < 0).any()) throw std::invalid_argument("complexes must have nonnegative coefficients");
  const int n = static_cast<int>(Y_.cols());
  for (const auto& r : reactions_) {
    if (r.source < 0 || r.source >= n || r.target < 0 || r.target >= n)
      throw std::invalid_argument("reaction references an unknown complex");
    if (r.source == r.target) throw std::invalid_argument("reaction source equals target");
    if (!(r.rate.A > 0)) throw std::invalid_argument("Arrhenius prefactor must be positive");
    if (!(r.rate.R > 0)) throw std::invalid_argument("gas constant must be positive");
    if (r.rate.E < 0) throw std::invalid_argument("activation energy must be nonnegative");
  }
}

ReactionNetwork ReactionNetwork::from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "species" && k != "complexes" && k != "reactions" && k != "R" && k != "T" && k != "c0" &&
        k != "t_end" && k != "samples" && k != "model")
      throw std::invalid_argument("unknown network key '" + k + "'");
  }
  auto species = j.at("species").get<std::vector<std::string>>();
  auto cx = j.at("complexes").get<std::vector<std::vector<int>>>();
  const double R = j.value("R", 8.314);
  Eigen::MatrixXi Y(species.size(), cx.size());
  for (size_t c = 0; c < cx.size(); ++c) {
    if (cx[c].size() != species.size())
      throw std::invalid_argument("complex " + std::to_string(c + 1) + " has wrong length");
    for (size_t s = 0; s < species.size(); ++s) Y(s, c) = cx[c][s];
  }
  std::vector<Reaction> rx;
  for (const auto& r : j.at("reactions")) {
    for (auto it = r.begin(); it != r.end(); ++it)
      if (it.key() != "from" && it.key() != "to" && it.key() != "A" && it.key() != "E")
        throw std::invalid_argument("unknown reaction key '" + it.key() + "'");
    Reaction re;
    re.source = r.at("from").get<int>() - 1;
    re.target = r.at("to").get<int>() - 1;
    re.rate = {r.at("A").get<double>(), r.value("E", 0.0), R};
    rx.push_back(re);
  }
  return ReactionNetwork(std::move(species), std::move(Y), std::move(rx));
}

double arrhenius(const RateLaw& rate, double T) {
  if (!(T > 0)) throw std::domain_error("temperature must be positive");
  return rate.A * std::exp(-rate.E / (rate.R * T));
}

Eigen::MatrixXd laplacian(const ReactionNetwork& net, double T) {
  const int n = net.num_complexes();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (const auto& r : net.reactions()) A(r.target, r.source) += arrhenius(r.rate, T);
  Eigen::MatrixXd L = A;
  for (int j = 0; j < n; ++j) L(j, j) -= A.col(j).sum();
  return L;
}

namespace {

Eigen::VectorXd monomials(const Eigen::MatrixXi& Y, const Eigen::VectorXd& c) {
  Eigen::VectorXd m(Y.cols());
  for (int j = 0; j < Y.cols(); ++j) {
    double v = 1.0;
    for (int i = 0; i < Y.rows(); ++i)
      if (Y(i, j) != 0) v *= std::pow(c[i], Y(i, j));
    m[j] = v;
  }
  return m;
}

Eigen::MatrixXd stoichiometric_vectors(const ReactionNetwork& net) {
  const auto& Y = net.complexes();
  Eigen::MatrixXd S(net.num_species(), net.reactions().size());
  for (size_t k = 0; k < net.reactions().size(); ++k) {
    const auto& r = net.reactions()[k];
    S.col(k) = (Y.col(r.target) - Y.col(r.source)).cast<double>();
  }
  return S;
}

// reduced row echelon form in place; returns rank
int rref(Eigen::MatrixXd& M, double tol = 1e-10) {
  int row = 0;
  for (int col = 0; col < M.cols() && row < M.rows(); ++col) {
    Eigen::Index piv;
    const double mx = M.col(col).segment(row, M.rows() - row).cwiseAbs().maxCoeff(&piv);
    if (mx < tol) continue;
    piv += row;
    M.row(row).swap(M.row(piv));
    M.row(row) /= M(row, col);
    for (int r = 0; r < M.rows(); ++r)
      if (r != row && M(r, col) != 0.0) M.row(r) -= M(r, col) * M.row(row);
    ++row;
  }
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) {
      if (std::abs(M(i, j)) < tol) M(i, j) = 0.0;
      const double rnd = std::round(M(i, j));
      if (std::abs(M(i, j) - rnd) < tol) M(i, j) = rnd;
    }
  return row;
}

}  // namespace

Eigen::VectorXd mass_action_rhs(const ReactionNetwork& net, const Eigen::VectorXd& c, double T) {
  if (c.size() != net.num_species()) throw std::invalid_argument("state dimension mismatch");
  if ((c.array() < 0).any()) throw std::domain_error("negative concentration");
  const Eigen::MatrixXd Yd = net.complexes().cast<double>();
  return Yd * (laplacian(net, T) * monomials(net.complexes(), c));
}

Eigen::MatrixXd mass_action_jacobian(const ReactionNetwork& net, const Eigen::VectorXd& c, double T) {
  const auto& Y = net.complexes();
  const int m = net.num_species(), n = net.num_complexes();
  Eigen::MatrixXd dm = Eigen::MatrixXd::Zero(n, m);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) {
      if (Y(i, j) == 0) continue;
      double v = Y(i, j) * std::pow(c[i], Y(i, j) - 1);
      for (int k = 0; k < m; ++k)
        if (k != i && Y(k, j) != 0) v *= std::pow(c[k], Y(k, j));
      dm(j, i) = v;
    }
  return Y.cast<double>() * laplacian(net, T) * dm;
}

DeficiencyInfo deficiency(const ReactionNetwork& net) {
  const int n = net.num_complexes();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& r : net.reactions()) parent[find(r.source)] = find(r.target);
  int l = 0;
  for (int i = 0; i < n; ++i)
    if (find(i) == i) ++l;
  int s = 0;
  if (!net.reactions().empty()) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(stoichiometric_vectors(net));
    lu.setThreshold(1e-10);
    s = static_cast<int>(lu.rank());
  }
  return {n, l, s, n - l - s};
}

bool strongly_connected(const ReactionNetwork& net) {
  const int n = net.num_complexes();
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int i = 0; i < n; ++i) reach[i][i] = 1;
  for (const auto& r : net.reactions()) reach[r.source][r.target] = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      if (reach[i][k])
        for (int j = 0; j < n; ++j)
          if (reach[k][j]) reach[i][j] = 1;
  for (const auto& r : net.reactions())
    if (!reach[r.target][r.source]) return false;
  return true;
}

Eigen::MatrixXd conservation_basis(const ReactionNetwork& net) {
  const int m = net.num_species();
  if (net.reactions().empty()) return Eigen::MatrixXd::Identity(m, m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(stoichiometric_vectors(net).transpose());
  lu.setThreshold(1e-10);
  Eigen::MatrixXd K = lu.kernel();
  if (K.cols() == 1 && K.norm() == 0.0) return Eigen::MatrixXd(0, m);
  Eigen::MatrixXd rows = K.transpose();
  int rank = rref(rows);
  return rows.topRows(rank);
}

Eigen::MatrixXd stoichiometric_basis(const ReactionNetwork& net) {
  const int m = net.num_species();
  if (net.reactions().empty()) return Eigen::MatrixXd(0, m);
  Eigen::MatrixXd S = stoichiometric_vectors(net);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinU);
  int r = 0;
  const auto& sv = svd.singularValues();
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * sv[0]) ++r;
  return svd.matrixU().leftCols(r).transpose();
}

Trajectory simulate(const ReactionNetwork& net, const Eigen::VectorXd& c0, double T, double t_end, double tol,
                    int n_samples) {
  if (!(t_end > 0)) throw std::invalid_argument("t_end must be positive");
  if (!(tol > 0)) throw std::invalid_argument("tolerance must be positive");
  if (n_samples < 1) throw std::invalid_argument("need at least one sample interval");
  if ((c0.array() < 0).any()) throw std::domain_error("negative initial concentration");
  const int m = net.num_species();
  const Eigen::MatrixXd L = laplacian(net, T);
  const Eigen::MatrixXd Yd = net.complexes().cast<double>();
  const Eigen::MatrixXd W = conservation_basis(net);
  const Eigen::VectorXd w0 = W * c0;

  using State = std::vector<double>;
  auto rhs = [&](const State& x, State& dx, double) {
    Eigen::Map<const Eigen::VectorXd> c(x.data(), m);
    Eigen::VectorXd cc = c.cwiseMax(0.0);
    Eigen::VectorXd r = Yd * (L * monomials(net.complexes(), cc));
    dx.assign(r.data(), r.data() + m);
  };
  Trajectory out;
  bool warned = false;
  auto clamp = [&](State& x) {
    bool changed = false;
    for (auto& v : x) {
      if (v < 0) {
        if (v < -tol && !warned) {
          spdlog::warn("concentration {:.3e} below -tol clamped to 0", v);
          warned = true;
        }
        v = 0.0;
        changed = true;
      }
    }
    if (changed) ++out.clamp_events;
    return changed;
  };
  OdeOptions opt;
  opt.abs_tol = tol;
  opt.rel_tol = tol;
  opt.initial_step = std::min(1e-3, t_end / n_samples);

  State x(c0.data(), c0.data() + m);
  out.t.push_back(0.0);
  out.c.push_back(c0);
  for (int k = 1; k <= n_samples; ++k) {
    const double ta = t_end * (k - 1) / n_samples;
    const double tb = t_end * k / n_samples;
    auto res = integrate_ode<State>(rhs, x, ta, tb, opt, {}, {}, clamp);
    x = res.x;
    clamp(x);
    Eigen::Map<const Eigen::VectorXd> c(x.data(), m);
    out.t.push_back(tb);
    out.c.push_back(c);
    if (W.rows() > 0) out.max_conservation_drift = std::max(out.max_conservation_drift, (W * c - w0).cwiseAbs().maxCoeff());
  }
  return out;
}

EquilibriumResult equilibrium(const ReactionNetwork& net, const Eigen::VectorXd& c0, double T, double tol) {
  const Eigen::MatrixXd W = conservation_basis(net);
  const Eigen::MatrixXd P = stoichiometric_basis(net);
  const Eigen::VectorXd w0 = W * c0;
  Eigen::VectorXd c = c0;
  double t_end = 10.0;
  for (int round = 0; round < 12; ++round) {
    auto tr = simulate(net, c, T, t_end, 1e-10, 10);
    c = tr.c.back();
    if (mass_action_rhs(net, c, T).norm() < 1e-6) break;
    t_end *= 4;
  }
  EquilibriumResult res;
  const int m = net.num_species();
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd Fv(P.rows() + W.rows());
    Fv << P * mass_action_rhs(net, c.cwiseMax(0.0), T), W * c - w0;
    res.residual = Fv.norm();
    res.newton_iterations = it;
    if (res.residual < tol) break;
    Eigen::MatrixXd J(P.rows() + W.rows(), m);
    J << P * mass_action_jacobian(net, c.cwiseMax(0.0), T), W;
    Eigen::VectorXd step = J.colPivHouseholderQr().solve(-Fv);
    c += step;
    if (step.norm() < 1e-15 * (1.0 + c.norm())) break;
  }
  res.c = c;
  res.residual = mass_action_rhs(net, c.cwiseMax(0.0), T).norm();
  return res;
}

ReactionNetwork mckeithan_network(int n_bound, double k1, const std::vector<double>& kp,
                                  const std::vector<double>& km) {
  if (n_bound < 1) throw std::invalid_argument("McKeithan scheme needs at least one bound complex");
  if (static_cast<int>(km.size()) != n_bound || static_cast<int>(kp.size()) != n_bound - 1)
    throw std::invalid_argument("McKeithan rate vectors have wrong length");
  std::vector<std::string> species{"T", "M"};
  for (int i = 1; i <= n_bound; ++i) species.push_back("C" + std::to_string(i));
  const int m = n_bound + 2, n = n_bound + 1;
  Eigen::MatrixXi Y = Eigen::MatrixXi::Zero(m, n);
  Y(0, 0) = 1;
  Y(1, 0) = 1;
  for (int i = 1; i <= n_bound; ++i) Y(i + 1, i) = 1;
  std::vector<Reaction> rx;
  auto rl = [](double k) { return RateLaw{k, 0.0, 8.314}; };
  rx.push_back({0, 1, rl(k1)});
  for (int i = 1; i < n_bound; ++i) rx.push_back({i, i + 1, rl(kp[i - 1])});
  for (int i = 1; i <= n_bound; ++i) rx.push_back({i, 0, rl(km[i - 1])});
  return ReactionNetwork(std::move(species), std::move(Y), std::move(rx));
}

ReactionNetwork mckeithan_network2(double k1, double k2, double k3, double k4) {
  ReactionNetwork net = mckeithan_network(2, k1, {k2}, {k3, k4});
  auto sp = net.species();
  sp[2] = "A";
  sp[3] = "B";
  return ReactionNetwork(sp, net.complexes(), net.reactions());
}

void McKeithanParams::validate() const {
  if (!(beta2 > 0 && beta3 > 0 && beta4 > 0)) throw std::invalid_argument("beta coefficients must be positive");
  if (!(delta1 > 0 && delta2 > 0)) throw std::invalid_argument("delta constants must be positive");
}

void mckeithan_domain_check(const McKeithanParams& p, double v) {
  const double al[3] = {p.alpha2, p.alpha3, p.alpha4};
  for (double a : al) {
    if (v <= 0 && a < 1) throw std::domain_error("v must be positive when an exponent is below one");
    if (v < 0 && !is_small_integer(a)) throw std::domain_error("negative v with a fractional exponent");
  }
}

ControlAffineSystem mckeithan_lift(const McKeithanParams& p, double d) {
  p.validate();
  ControlAffineSystem sys("mckeithan", SmoothField(McKeithanDrift{p}, "F"), SmoothField(ConstantAxis{2}, "G"),
                          TargetManifold{{1.0, 0.0, 0.0}, d});
  sys.parameters = {{"alpha2", p.alpha2}, {"alpha3", p.alpha3}, {"alpha4", p.alpha4}, {"beta2", p.beta2},
                    {"beta3", p.beta3},   {"beta4", p.beta4},   {"delta1", p.delta1}, {"delta2", p.delta2},
                    {"d", d}};
  sys.validity.lo = {0.0, 0.0, 1e-12};
  sys.validity.hi = {p.delta1, p.delta2, 1e300};
  return sys;
}

McKeithanParams mckeithan_params_from_arrhenius(const std::array<RateLaw, 4>& r, double delta1, double delta2) {
  if (!(r[0].E > 0)) throw std::invalid_argument("first activation energy must be positive");
  McKeithanParams p;
  double* al[3] = {&p.alpha2, &p.alpha3, &p.alpha4};
  double* be[3] = {&p.beta2, &p.beta3, &p.beta4};
  for (int i = 1; i < 4; ++i) {
    *al[i - 1] = r[i].E / r[0].E;
    *be[i - 1] = r[i].A / std::pow(r[0].A, *al[i - 1]);
  }
  p.delta1 = delta1;
  p.delta2 = delta2;
  p.validate();
  return p;
}

}  // namespace crnsynth
