#include "doctest.h"

#include <cmath>

#include "crnsynth/synthesis.hpp"

using namespace crnsynth;

namespace {

McKeithanParams sample_params() {
  McKeithanParams p;
  p.alpha2 = 2.0;
  p.alpha3 = 0.5;
  p.alpha4 = 1.0;
  return p;  // betas 1, deltas (1, 1)
}

bool has_point_near(const std::vector<StratumSample>& v, double y, double z, double tol) {
  for (const auto& s : v)
    if (std::abs(s.q[1] - y) < tol && std::abs(s.q[2] - z) < tol) return true;
  return false;
}

}  // namespace

TEST_CASE("tutorial stratification") {
  const auto sys = make_tutorial({1.0, 1.0});
  TargetGrid g;
  g.ny = g.nz = 31;
  const auto st = stratify_target(sys, g);
  REQUIRE(st.S.size() > 10);
  for (const auto& s : st.S) {
    CHECK(std::abs(s.q[1] - s.q[2] * s.q[2]) < 1e-9);
    CHECK(s.on_S);
  }
  const double zs = 1.0 / 6.0;
  CHECK(has_point_near(st.saturation, zs * zs, zs, 1e-9));
  CHECK(has_point_near(st.saturation, zs * zs, -zs, 1e-9));
  const double zb = 1.0 / 18.0;
  CHECK(has_point_near(st.bifurcation, zb * zb, zb, 1e-9));
  CHECK(has_point_near(st.semi_bridge, 0.0, 0.0, 1e-9));
  for (const auto& s : st.semi_bridge) CHECK(s.on_S);
  CHECK(st.grid.size() == 31u * 31u);

  const auto ser = stratify_target_serial(sys, g);
  REQUIRE(ser.S.size() == st.S.size());
  for (std::size_t i = 0; i < st.S.size(); ++i) CHECK(norm(sub(ser.S[i].q, st.S[i].q)) == 0.0);
}

TEST_CASE("tutorial exceptional locus") {
  const auto sys = make_tutorial({1.0, 1.0});
  TargetGrid g;
  g.y_lo = -1.5;
  g.y_hi = 0.5;
  g.ny = 41;
  g.nz = 21;
  const auto st = stratify_target(sys, g);
  REQUIRE_FALSE(st.E.empty());
  for (const auto& s : st.E) {
    const double y = s.q[1], z = s.q[2];
    CHECK(std::abs(y * (1 - 3 * z) + z * z * z + 1) < 1e-9);
  }
}

TEST_CASE("grid clipped to the validity box") {
  const auto sys = mckeithan_lift(sample_params(), 0.2);
  TargetGrid g;  // v in [-0.3, 0.3] is clipped to v > 0
  const auto st = stratify_target(sys, g);
  for (const auto& s : st.grid) CHECK(s.q[2] > 0);
  g.z_lo = -0.3;
  g.z_hi = -0.1;
  CHECK_THROWS_AS(stratify_target(sys, g), std::invalid_argument);
}

TEST_CASE("tag invariants") {
  const auto sys = make_tutorial({1.0, 1.0});
  auto s = tag_point(sys, {0, 0.01, 0.1});
  CHECK(s.on_S);
  CHECK(s.eps == 0);
  CHECK(s.us == doctest::Approx(1.0 / 0.6));
  CHECK_FALSE(s.admissible);
  s = tag_point(sys, {0, 0.0, 0.3});  // n.[G,F] = 3(y - z^2) < 0
  CHECK_FALSE(s.on_S);
  CHECK(s.eps == 1);
  s = tag_point(sys, {0, 0.2, 0.3});
  CHECK(s.eps == -1);
}

TEST_CASE("McKeithan singular locus: quadratic oracle at v = 1") {
  const McKeithanParams p = sample_params();
  const double d = 0.2;
  const auto loc = mckeithan_singular_locus(p, d, {1.0});
  // -y^2 + 1.6 y - 0.14 = 0
  const double r1 = (1.6 - std::sqrt(1.6 * 1.6 - 4 * 0.14)) / 2;
  REQUIRE(loc.points.size() == 1);  // the other root exceeds delta2
  CHECK(loc.points[0].y == doctest::Approx(r1).epsilon(1e-13));
  CHECK(std::abs(mckeithan_S_residual(p, d, 1.0, loc.points[0].y)) < 1e-12);
  CHECK(loc.discriminant_positive);
  // the AD bracket vanishes there
  const auto sys = mckeithan_lift(p, d);
  const Vec3d q{d, loc.points[0].y, 1.0};
  CHECK(std::abs(sys.gf().eval(q)[0]) < 1e-12);
}

TEST_CASE("McKeithan loci: constant branches and the d -> 0 limit") {
  McKeithanParams p = sample_params();
  p.alpha2 = p.alpha3 = 1.0;
  const auto loc = mckeithan_singular_locus(p, 0.2, {0.5, 1.0, 1.5});
  REQUIRE(loc.points.size() == 3);
  CHECK(loc.points[0].y == doctest::Approx(loc.points[2].y).epsilon(1e-14));

  McKeithanParams q = sample_params();
  q.delta1 = 0.6;
  q.delta2 = 0.9;
  // d = 0: v (y^2 - delta3 y + delta4) = 0
  CHECK(std::abs(mckeithan_E_residual(q, 0.0, 0.7, 0.6)) < 1e-15);
  CHECK(std::abs(mckeithan_E_residual(q, 0.0, 0.7, 0.9)) < 1e-15);
  const auto e = mckeithan_exceptional_locus(q, 1e-12, {0.7});
  REQUIRE_FALSE(e.points.empty());
  CHECK(e.points[0].y == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(e.discriminant_positive);

  const auto e2 = mckeithan_exceptional_locus(sample_params(), 0.2, {0.3, 0.8, 1.2});
  for (const auto& pt : e2.points) CHECK(std::abs(pt.residual) < 1e-12);
}

TEST_CASE("semi-bridge points") {
  const McKeithanParams p = sample_params();
  const auto sb = semi_bridge_points(p, 0.2);
  REQUIRE(sb.v.size() == 1);
  CHECK(sb.v[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(sb.ad_residual[0] < 1e-8);

  McKeithanParams both = p;
  both.alpha2 = 2.0;
  both.alpha3 = 3.0;
  auto r = semi_bridge_points(both, 0.2);
  CHECK(r.v.empty());
  CHECK(r.reason == "no positive solution");

  McKeithanParams one = p;
  one.alpha2 = 1.0;
  r = semi_bridge_points(one, 0.2);
  CHECK(r.v.empty());
}

TEST_CASE("catalog labels of the tutorial anchors") {
  SynthesisOptions opt;
  opt.loci = false;
  const auto tut = make_tutorial({1.0, 1.0});
  const double zs = 1.0 / 6.0, zb = 1.0 / 18.0;
  CHECK(catalog_label(tut, tag_point(tut, {0, 0.0025, -0.05}), opt) == CatalogLabel::HyperbolicFold);
  CHECK(catalog_label(tut, tag_point(tut, {0, zs * zs, -zs}), opt) == CatalogLabel::SaturatingCase1);
  CHECK(catalog_label(tut, tag_point(tut, {0, zb * zb, zb}), opt) == CatalogLabel::EllipticBifurcation);
  CHECK(catalog_label(tut, tag_point(tut, {0, 0.0, 0.0}), opt) == CatalogLabel::SemiBridge);
  CHECK(catalog_label(tut, tag_point(tut, {0, 0.0, 0.2}), opt) == CatalogLabel::Generic);
  CHECK(catalog_label(tut, tag_point(tut, {0, 0.25, -0.5}), opt) == CatalogLabel::HyperbolicFold);
  const auto tut5 = make_tutorial({1.0, 5.0});
  CHECK(catalog_label(tut5, tag_point(tut5, {0, 0.0016, 0.04}), opt) == CatalogLabel::EllipticFold);
  // far from any admissible singular point: parabolic
  SynthesisOptions narrow = opt;
  narrow.box = 0.01;
  CHECK(catalog_label(tut, tag_point(tut, {0, 0.0025, -0.05}), narrow) ==
        CatalogLabel::ParabolicNonAdmissibleHyperbolic);
}

TEST_CASE("label stability along the singular locus") {
  SynthesisOptions opt;
  opt.loci = false;
  const auto tut = make_tutorial({1.0, 1.0});
  for (double z : {-0.05, -0.3, 0.1, 0.25}) {
    const auto l0 = catalog_label(tut, tag_point(tut, {0, z * z, z}), opt);
    const double zp = z + 1e-6;
    CHECK(catalog_label(tut, tag_point(tut, {0, zp * zp, zp}), opt) == l0);
  }
}

TEST_CASE("hyperbolic fold synthesis: only the minus extremals switch") {
  const auto tut = make_tutorial({1.0, 1.0});
  const auto r = local_synthesis(tut, {0, 0.0025, -0.05});
  CHECK(r.label == CatalogLabel::HyperbolicFold);
  CHECK(r.switching_controls == std::vector<std::string>{"-"});
  CHECK_FALSE(r.loci.at("Gs").empty());
  const auto j = to_json(r);
  CHECK(j.at("label") == "HyperbolicFold");
}

TEST_CASE("saturating synthesis carries W_s") {
  const auto tut = make_tutorial({1.0, 1.0});
  const double zs = 1.0 / 6.0;
  const auto r = local_synthesis(tut, {0, zs * zs, -zs});
  CHECK(r.label == CatalogLabel::SaturatingCase1);
  CHECK_FALSE(r.loci.at("Ws").empty());
}

TEST_CASE("oracle: one-arc run") {
  const auto sys = make_unfolding_2d({-1.0, 0.0});
  OracleOptions o;
  o.allow_singular = false;
  o.max_arcs = 1;
  o.horizon = 0.2;
  const auto r = brute_force_oracle(sys, {-0.05, 0.0, 0.0}, o);
  REQUIRE(r.reachable);
  // x' = 1 - t^2 under either bang: t - t^3/3 = 0.05
  double t = 0.05;
  for (int i = 0; i < 50; ++i) t -= (t - t * t * t / 3 - 0.05) / (1 - t * t);
  CHECK(r.best.pattern.size() == 1);
  CHECK(std::abs(r.best.time - t) <= o.dt);

  o.allow_singular = true;
  const auto rs = brute_force_oracle(sys, {-0.05, 0.0, 0.0}, o);
  CHECK(rs.best.pattern == "s");
  CHECK(rs.best.time == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("oracle: serial and parallel enumerations agree") {
  const auto sys = make_unfolding_2d({-1.0, 0.3});
  OracleOptions o;
  o.dt = 5e-3;
  o.horizon = 0.3;
  const auto a = brute_force_oracle(sys, {-0.15, -0.02, 0.0}, o);
  const auto b = brute_force_oracle_serial(sys, {-0.15, -0.02, 0.0}, o);
  CHECK(a.best.pattern == b.best.pattern);
  CHECK(a.best.time == b.best.time);
  CHECK(a.best.durations == b.best.durations);
}

TEST_CASE("reduced pattern") {
  OracleCandidate c{"+s+", {0.1, 0.0005, 0.2}, 0.3005};
  CHECK(reduced_pattern(c, 0.002) == "+");
  CHECK(reduced_pattern(c, 1e-4) == "+s+");
}
