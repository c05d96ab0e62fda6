#include "doctest.h"

#include <cmath>
#include <random>

#include "crnsynth/crn.hpp"

using namespace crnsynth;

namespace {

ReactionNetwork a_to_b(double k, bool reverse = false) {
  Eigen::MatrixXi Y(2, 2);
  Y << 1, 0, 0, 1;
  std::vector<Reaction> r{{0, 1, {k, 0.0, 8.314}}};
  if (reverse) r.push_back({1, 0, {k, 0.0, 8.314}});
  return ReactionNetwork({"A", "B"}, Y, r);
}

}  // namespace

TEST_CASE("arrhenius rate") {
  CHECK(arrhenius({2.0, 0.0, 8.314}, 300.0) == doctest::Approx(2.0));
  CHECK(arrhenius({1.0, 8.314, 8.314}, 1.0) == doctest::Approx(std::exp(-1.0)));
  CHECK_THROWS_AS(arrhenius({1.0, 0.0, 8.314}, 0.0), std::domain_error);
}

TEST_CASE("laplacian of a single reaction and of the empty network") {
  const Eigen::MatrixXd L = laplacian(a_to_b(3.0), 300.0);
  Eigen::MatrixXd expect(2, 2);
  expect << -3, 0, 3, 0;
  CHECK((L - expect).norm() < 1e-14);

  Eigen::MatrixXi Y(2, 2);
  Y << 1, 0, 0, 1;
  ReactionNetwork empty({"A", "B"}, Y, {});
  CHECK(laplacian(empty, 300.0).norm() == 0.0);
}

TEST_CASE("McKeithan N=2 laplacian and column sums") {
  const double k1 = 1.5, k2 = 0.7, k3 = 0.4, k4 = 2.0;
  const auto net = mckeithan_network2(k1, k2, k3, k4);
  const Eigen::MatrixXd L = laplacian(net, 300.0);
  Eigen::MatrixXd expect(3, 3);
  expect << -k1, k3, k4, k1, -(k2 + k3), 0, 0, k2, -k4;
  CHECK((L - expect).norm() < 1e-14);
  CHECK(L.colwise().sum().cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("mass action right-hand side") {
  const Eigen::VectorXd r = mass_action_rhs(a_to_b(1.0), Eigen::Vector2d(2.0, 0.0), 300.0);
  CHECK(r[0] == doctest::Approx(-2.0));
  CHECK(r[1] == doctest::Approx(2.0));
  const auto net = mckeithan_network2(1, 1, 1, 1);
  CHECK(mass_action_rhs(net, Eigen::VectorXd::Zero(4), 300.0).norm() == 0.0);
  CHECK_THROWS_AS(mass_action_rhs(net, Eigen::Vector4d(1, -1, 0, 0), 300.0), std::domain_error);
}

TEST_CASE("McKeithan rhs is orthogonal to both conservation laws") {
  const auto net = mckeithan_network2(1.3, 0.6, 0.9, 0.5);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 2.0);
  const Eigen::Vector4d l1(1, 0, 1, 1), l2(0, 1, 1, 1);  // (T, M, A, B)
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector4d c(U(rng), U(rng), U(rng), U(rng));
    const Eigen::VectorXd r = mass_action_rhs(net, c, 300.0);
    CHECK(std::abs(l1.dot(r)) < 1e-13);
    CHECK(std::abs(l2.dot(r)) < 1e-13);
  }
  const Eigen::MatrixXd C = conservation_basis(net);
  CHECK(C.rows() == 2);
}

TEST_CASE("jacobian matches finite differences") {
  const auto net = mckeithan_network2(1.3, 0.6, 0.9, 0.5);
  const Eigen::Vector4d c(0.4, 0.8, 0.3, 0.2);
  const Eigen::MatrixXd J = mass_action_jacobian(net, c, 300.0);
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    Eigen::Vector4d cp = c, cm = c;
    cp[j] += h;
    cm[j] -= h;
    const Eigen::VectorXd fd = (mass_action_rhs(net, cp, 300.0) - mass_action_rhs(net, cm, 300.0)) / (2 * h);
    CHECK((fd - J.col(j)).norm() < 1e-8);
  }
}

TEST_CASE("deficiency counts") {
  auto d = deficiency(mckeithan_network2(1, 1, 1, 1));
  CHECK(d.n == 3);
  CHECK(d.l == 1);
  CHECK(d.s == 2);
  CHECK(d.delta == 0);

  d = deficiency(a_to_b(1.0));
  CHECK((d.n == 2 && d.l == 1 && d.s == 1 && d.delta == 0));

  Eigen::MatrixXi Y = Eigen::MatrixXi::Identity(4, 4);
  ReactionNetwork two({"A", "B", "C", "D"}, Y, {{0, 1, {1, 0, 8.314}}, {2, 3, {1, 0, 8.314}}});
  d = deficiency(two);
  CHECK((d.n == 4 && d.l == 2 && d.s == 2 && d.delta == 0));

  for (int n = 1; n <= 5; ++n) {
    std::vector<double> kp(n - 1, 0.5), km(n, 0.3);
    CHECK(deficiency(mckeithan_network(n, 1.0, kp, km)).delta == 0);
  }
}

TEST_CASE("strong connectivity") {
  CHECK(strongly_connected(mckeithan_network2(1, 1, 1, 1)));
  CHECK_FALSE(strongly_connected(a_to_b(1.0)));
  CHECK(strongly_connected(a_to_b(1.0, true)));
}

TEST_CASE("simulation keeps conservation laws and reaches a common equilibrium") {
  const auto net = mckeithan_network2(1.0, 0.5, 0.8, 0.3);
  const Eigen::Vector4d c0(1.0, 0.8, 0.0, 0.0);
  const Eigen::Vector4d c1(0.5, 0.3, 0.3, 0.2);  // same T + A + B and M + A + B
  const auto tr0 = simulate(net, c0, 300.0, 200.0, 1e-10, 50);
  const auto tr1 = simulate(net, c1, 300.0, 200.0, 1e-10, 50);
  CHECK(tr0.t.size() == 51);
  CHECK(tr0.max_conservation_drift < 1e-9);
  CHECK(tr1.max_conservation_drift < 1e-9);
  CHECK((tr0.c.back() - tr1.c.back()).norm() < 1e-6);
  const auto eq = equilibrium(net, c0, 300.0);
  CHECK(mass_action_rhs(net, eq.c, 300.0).norm() < 1e-10);
  const auto flat = simulate(net, eq.c, 300.0, 10.0, 1e-10, 10);
  CHECK((flat.c.back() - eq.c).norm() < 1e-8);
}

TEST_CASE("network JSON round trip") {
  const nlohmann::json j = {{"species", {"A", "B"}},
                            {"complexes", {{1, 0}, {0, 1}}},
                            {"reactions", {{{"from", 1}, {"to", 2}, {"A", 2.0}, {"E", 0.0}}}}};
  const auto net = ReactionNetwork::from_json(j);
  CHECK(net.num_complexes() == 2);
  CHECK(net.reactions()[0].target == 1);
  nlohmann::json bad = j;
  bad["colour"] = 1;
  CHECK_THROWS_AS(ReactionNetwork::from_json(bad), std::invalid_argument);
}

TEST_CASE("McKeithan lift") {
  McKeithanParams p;  // all exponents and betas 1, delta = (1, 1)
  const auto sys = mckeithan_lift(p);
  Vec3d f = sys.drift().eval({1, 1, 1});
  CHECK(f[0] == doctest::Approx(-1.0));
  CHECK(f[1] == doctest::Approx(0.0));
  f = sys.drift().eval({0, 0, 0.7});
  CHECK(f[0] == doctest::Approx(p.delta4() * 0.7));
  CHECK(f[1] == doctest::Approx(0.0));
  const Vec3d g = sys.control().eval({0.3, 0.2, 0.9});
  CHECK((g[0] == 0.0 && g[1] == 0.0 && g[2] == 1.0));

  McKeithanParams frac;
  frac.alpha3 = 0.5;
  const auto s2 = mckeithan_lift(frac);
  CHECK_THROWS_AS(s2.drift().eval({0.1, 0.1, 0.0}), std::domain_error);
}

TEST_CASE("Arrhenius conversion to McKeithan exponents") {
  std::array<RateLaw, 4> r{RateLaw{2.0, 10.0}, RateLaw{3.0, 20.0}, RateLaw{1.0, 5.0}, RateLaw{4.0, 10.0}};
  const auto p = mckeithan_params_from_arrhenius(r, 1.0, 2.0);
  CHECK(p.alpha2 == doctest::Approx(2.0));
  CHECK(p.alpha3 == doctest::Approx(0.5));
  CHECK(p.beta2 == doctest::Approx(3.0 / 4.0));
  CHECK(p.beta4 == doctest::Approx(2.0));
}
