#include "doctest.h"

#include <cmath>
#include <random>

#include "crnsynth/extremal.hpp"
#include "crnsynth/lieseries.hpp"
#include "order_check.hpp"

using namespace crnsynth;

namespace {

double closed_crossing(double a, double c, double eps, double s0) {
  return (a * s0 * s0 - 2 * c * s0 * s0 * s0 + 1) * (6 * c * eps * s0 - a) / (6 * c);
}

}  // namespace

TEST_CASE("series arithmetic is associative and truncates") {
  const BasisPtr b = MonomialBasis::get({"t", "s"}, 4);
  const TruncatedSeries t = TruncatedSeries::variable(b, "t"), s = TruncatedSeries::variable(b, "s", 0.5);
  const TruncatedSeries f = 1.0 + 2.0 * t + s * s, g = t * s - 3.0, h = 0.25 * t * t + s;
  const TruncatedSeries l = (f * g) * h, r = f * (g * h);
  for (std::size_t k = 0; k < l.coefficients().size(); ++k) CHECK(std::abs(l.coefficients()[k] - r.coefficients()[k]) < 1e-14);
  // t^5 is beyond the truncation order
  TruncatedSeries t5 = t * t * t * t * t;
  CHECK(t5.max_abs_coefficient() == 0.0);
  CHECK((t * t).derivative("t").coefficient({{"t", 1}}) == doctest::Approx(2.0));
}

TEST_CASE("bang flow on the tutorial: z exact, y and p3 match the closed forms") {
  const double a = 1.0, c = 1.0;
  const auto sys = make_tutorial({a, c});
  for (double eps : {1.0, -1.0}) {
    const auto g = gamma_surface(sys, eps, 5);
    CHECK(g[2].coefficient({{"s0", 1}}) == doctest::Approx(1.0));
    CHECK(g[2].coefficient({{"t", 1}}) == doctest::Approx(eps));
    CHECK(std::abs(g[2].coefficient({{"t", 2}})) < 1e-15);
    CHECK(std::abs(g[2].coefficient({{"t", 3}})) < 1e-15);
    CHECK(g[1].coefficient({{"w0", 1}}) == doctest::Approx(1.0));
    CHECK(g[1].coefficient({{"t", 1}, {"s0", 1}}) == doctest::Approx(1.0));
    CHECK(g[1].coefficient({{"t", 2}}) == doctest::Approx(eps / 2));

    const auto f = lie_series_flow(sys, SeriesControl::bang(eps), target_start(sys, target_basis(3)));
    const TruncatedSeries& p3 = f.z[5];
    CHECK(std::abs(p3.coefficient({{"t", 3}}) + c) < 1e-12);
    CHECK(std::abs(p3.coefficient({{"t", 2}}) - a / 2) < 1e-12);
    CHECK(std::abs(p3.coefficient({{"t", 2}, {"s0", 1}}) + 3 * c * eps) < 1e-12);
    CHECK(std::abs(p3.coefficient({{"t", 1}, {"s0", 2}}) + 3 * c) < 1e-12);
    CHECK(std::abs(p3.coefficient({{"t", 1}, {"w0", 1}}) - 3 * c) < 1e-12);
    CHECK(std::abs(p3.constant_term()) < 1e-15);
  }
  const auto f = lie_series_flow(sys, SeriesControl::bang(1.0), target_start(sys, target_basis(3)));
  for (double t : {0.1, 0.3}) CHECK(f.z[5].evaluate<double>({t, 0.0, 0.0}) == doctest::Approx(t * t / 2 - t * t * t));
}

TEST_CASE("x component against direct integration") {
  const auto sys = make_tutorial({1.0, 1.0});
  const auto g = gamma_surface(sys, 1.0, 6);
  const double s0 = 0.1, w0 = s0 * s0, t = 1e-3;
  BangOptions opt;
  opt.ode.abs_tol = opt.ode.rel_tol = 1e-14;
  opt.continue_past_switches = true;
  const auto r = integrate_bang(sys, make_z({0, w0, s0}, {1, 0, 0}), 1.0, {0.0, t}, opt);
  CHECK(std::abs(g[0].evaluate<double>({t, w0, s0}) - r.arc.z.back()[0]) < 1e-11);
}

TEST_CASE("pole at a degenerate point for the singular feedback") {
  auto sys = make_tutorial({1.0, 1.0});
  const BasisPtr b = MonomialBasis::get({"t"}, 3);
  std::array<TruncatedSeries, 6> z0;
  const double q[6] = {0, 0, 0, 1, 0, 0};
  for (int i = 0; i < 6; ++i) z0[i] = TruncatedSeries::constant(b, q[i]);
  CHECK_THROWS_AS(lie_series_flow(sys, SeriesControl::feedback(), z0), PoleError);
}

TEST_CASE("convergence order of the truncated flow") {
  SemiNormalFormParams p;
  p.a = -1.0;
  p.us0 = 0.3;
  const std::array<double, 6> z0{0.0, 0.05, 0.1, 1.0, 0.0, 0.0};
  const auto fit = ordercheck::fit_order(SemiNormalFormDrift{p}, ConstantAxis{2}, z0, 1.0, 2);
  CHECK(fit.slope >= 2.8);
}

TEST_CASE("switching surface coefficients") {
  for (double c : {1.0, 5.0}) {
    const double a = 1.0;
    const auto sys = make_tutorial({a, c});
    for (double eps : {1.0, -1.0}) {
      const auto K = switching_surface_series(sys, eps, 4);
      const TruncatedSeries& y = K.K[1];
      CHECK(std::abs(y.coefficient({{"t", 1}}) + a / (6 * c)) < 1e-12);
      CHECK(std::abs(y.coefficient({{"t", 1}, {"s0", 1}}) - (eps + 1)) < 1e-12);
      CHECK(std::abs(y.coefficient({{"t", 2}}) - (3 * eps + 2) / 6) < 1e-12);
      CHECK(K.residual.max_abs_coefficient() < 1e-12);
    }
  }
}

TEST_CASE("switching surface against event-detected switches") {
  const auto sys = make_tutorial({1.0, 1.0});
  const double s0 = 1.0 / 6.0;
  const auto K = switching_surface_series(sys, -1.0, 6);
  BangOptions opt;
  opt.continue_past_switches = true;
  opt.exclusion = 1e-5;
  opt.ode.abs_tol = opt.ode.rel_tol = 1e-13;
  for (double t : {2e-3, 5e-3, 1e-2}) {
    const double w0 = K.w0.evaluate<double>({t, s0});
    const auto r = integrate_bang(sys, make_z({0, w0, s0}, {1, 0, 0}), -1.0, {0.0, 2 * t}, opt);
    double best = 1.0;
    for (const auto& rec : r.records) best = std::min(best, std::abs(rec.t - t));
    CHECK(best < 1e-6);
  }
}

TEST_CASE("crossing determinant") {
  const double a = 1.0, c = 1.0;
  const auto sys = make_tutorial({a, c});
  const auto Kp = switching_surface_series(sys, 1.0, 4);
  const auto Km = switching_surface_series(sys, -1.0, 4);
  // (0.25 - 0.25 + 1)(3 - 1)/6
  CHECK(crossing_test(Kp, 0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(crossing_test(Km, 0.0) == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
  CHECK(std::abs(crossing_test(Kp, 1.0 / 6.0)) < 1e-12);
  for (int i = 0; i < 20; ++i) {
    const double s0 = -0.5 + i / 19.0;
    CHECK(std::abs(crossing_test(Kp, s0) - closed_crossing(a, c, 1.0, s0)) < 1e-10);
    CHECK(std::abs(crossing_test(Km, s0) - closed_crossing(a, c, -1.0, s0)) < 1e-10);
  }
}

TEST_CASE("tutorial singular leaf") {
  const auto leaf = singular_leaf_tutorial(1.0, 1.0, 0.1, {0.1, 0.2});
  REQUIRE(leaf.size() == 2);
  CHECK(leaf[0].y == doctest::Approx(0.01));
  CHECK(leaf[0].x == 0.0);
  CHECK(leaf[1].y == doctest::Approx(0.024).epsilon(1e-12));
  // the numeric fallback reproduces the separable leaf
  const auto sys = make_tutorial({1.0, 1.0});
  const auto num = singular_leaf_numeric(sys, {0, 0.01, 0.1}, {0.2});
  REQUIRE(num.size() == 1);
  CHECK(num[0].y == doctest::Approx(0.024).epsilon(1e-8));
  CHECK(num[0].x == doctest::Approx(leaf[1].x).epsilon(1e-8));
}

TEST_CASE("splitting loci of the elliptic bifurcation model") {
  SemiNormalFormParams p;
  p.a = 1.0;
  p.us0 = 3.0;
  const auto sys = make_semi_normal_form(p);
  SplitOptions o;
  o.w0_grid = {-0.08, -0.04, 0.0, 0.04, 0.06, 0.08};
  o.s0_grid = {-0.2, -0.1, -0.05, 0.0, 0.05};
  int n1 = 0, n12 = 0;
  for (const auto& s : splitting_locus(sys, SplitKind::C1, o)) {
    if (!s.switch_free) continue;
    ++n1;
    CHECK(std::abs(s.t) > o.t_min);  // trivial t = 0 root filtered
    CHECK(s.residual < 1e-10);
  }
  for (const auto& s : splitting_locus(sys, SplitKind::C12, o)) n12 += s.switch_free;
  CHECK(n1 > 0);
  CHECK(n12 > 0);
}

TEST_CASE("splitting locus serial and parallel agree") {
  const auto sys = make_tutorial({1.0, 1.0});
  SplitOptions o;
  o.w0_grid = {0.0, 0.02};
  o.s0_grid = {0.2, 0.3};
  const auto a = splitting_locus(sys, SplitKind::C1, o);
  const auto b = splitting_locus_serial(sys, SplitKind::C1, o);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].t == b[i].t);
}
