#include "doctest.h"

#include <cmath>

#include "crnsynth/extremal.hpp"

using namespace crnsynth;

namespace {

double printed_p3(double a, double c, double eps, double w0, double s0, double t) {
  return 0.5 * t * (-2 * c * t * t + (a - 6 * c * eps * s0) * t - 6 * c * s0 * s0 + 6 * c * w0);
}

struct ConstDrift {
  template <class T>
  Vec3<T> operator()(const Vec3<T>&) const {
    return {T(1.0), T(2.0), T(0.0)};
  }
};

}  // namespace

TEST_CASE("extremal right-hand side") {
  const auto sys = make_tutorial({1.0, 1.0});
  const ZState dz = extremal_rhs(sys, make_z({0, 0, 0}, {1, 0, 0}), 1.0);
  CHECK(dz[0] == doctest::Approx(1.0));
  CHECK(dz[1] == doctest::Approx(0.0));
  CHECK(dz[2] == doctest::Approx(1.0));
  CHECK(dz[3] == doctest::Approx(0.0));
  CHECK(dz[4] == doctest::Approx(-1.0));
  CHECK(dz[5] == doctest::Approx(0.0));

  ControlAffineSystem flat("flat", SmoothField(ConstDrift{}), SmoothField(ConstantAxis{2}));
  const ZState d2 = extremal_rhs(flat, make_z({0.3, 0.1, 0.2}, {0.5, -1, 2}), 0.0);
  CHECK((d2[3] == 0.0 && d2[4] == 0.0 && d2[5] == 0.0));
}

TEST_CASE("switching function follows the printed cubic") {
  const double a = 1.0, c = 1.0;
  const auto sys = make_tutorial({a, c});
  BangOptions opt;
  opt.ode.abs_tol = opt.ode.rel_tol = 1e-13;
  for (double eps : {1.0, -1.0}) {
    const double w0 = 0.1, s0 = 0.2;
    const auto r = integrate_bang(sys, make_z({0, w0, s0}, {1, 0, 0}), eps, {0.0, 0.01}, opt);
    REQUIRE_FALSE(r.error);
    CHECK(r.arc.t1 == doctest::Approx(0.01));
    CHECK(std::abs(r.arc.z.back()[5] - printed_p3(a, c, eps, w0, s0, 0.01)) < 1e-10);
  }
}

TEST_CASE("first switch of the bang flow from the origin at t = a/(2c)") {
  const auto sys = make_tutorial({1.0, 1.0});
  BangOptions opt;
  opt.exclusion = 1e-3;  // the double root at t = 0
  opt.ode.abs_tol = opt.ode.rel_tol = 1e-12;
  const auto r = integrate_bang(sys, make_z({0, 0, 0}, {1, 0, 0}), 1.0, {0.0, 1.0}, opt);
  REQUIRE(r.records.size() == 1);
  CHECK(std::abs(r.records[0].t - 0.5) < 1e-9);
  CHECK(r.records[0].kind == SwitchKind::Ordinary);
  CHECK(r.records[0].phidot < 0);  // sigma+ then sigma- in forward time
}

TEST_CASE("fold classification table") {
  SwitchingRecord rec;
  rec.phiddot_plus = 2;
  rec.phiddot_minus = -1;
  CHECK(classify_fold(rec) == SwitchKind::FoldHyperbolic);
  rec.phiddot_plus = -1;
  rec.phiddot_minus = -3;
  CHECK(classify_fold(rec) == SwitchKind::FoldParabolic);
  rec.phiddot_plus = -1;
  rec.phiddot_minus = 2;
  CHECK(classify_fold(rec) == SwitchKind::FoldElliptic);
  rec.phiddot_plus = 0;
  CHECK_THROWS_AS(classify_fold(rec), DegenerateFoldError);
}

TEST_CASE("fold records agree with the singular classification") {
  const auto sys = make_tutorial({1.0, 1.0});
  for (double z : {-0.5, -0.3, 0.3, 0.5}) {
    const Vec3d q{0, z * z, z};
    const auto rec = switching_record(sys, 0.0, q, {1, 0, 0});
    const auto cls = classify(sys, q);
    if (cls.type == SingularType::Hyperbolic) CHECK(rec.kind == SwitchKind::FoldHyperbolic);
    if (cls.type == SingularType::Elliptic) CHECK(rec.kind == SwitchKind::FoldElliptic);
    CHECK((z < 0) == (cls.type == SingularType::Hyperbolic));
  }
  // immediate fold: p orthogonal to G and [G,F]
  const auto rec = switching_record(sys, 0.0, {0, 0.04, 0.2}, {1, 0, 0});
  CHECK(rec.kind != SwitchKind::Ordinary);
}

TEST_CASE("terminal control of the backward sweep follows n.[G,F]") {
  const auto sys = make_tutorial({1.0, 1.0});
  SweepOptions opt;
  opt.horizon = 0.2;
  // n.[G,F] = 3c(y - z^2)
  auto chains = bc_chains_from(sys, {0, 0.0, 0.3}, 0, opt);
  REQUIRE_FALSE(chains.empty());
  CHECK(chains[0].arcs.front().label == ArcLabel::Plus);
  chains = bc_chains_from(sys, {0, 0.2, 0.3}, 0, opt);
  REQUIRE_FALSE(chains.empty());
  CHECK(chains[0].arcs.front().label == ArcLabel::Minus);
}

TEST_CASE("hyperbolic admissible fold enters the singular arc") {
  const auto sys = make_tutorial({1.0, 1.0});
  SweepOptions opt;
  opt.horizon = 0.2;
  const auto chains = bc_chains_from(sys, {0, 0.09, -0.3}, 0, opt);
  bool singular = false;
  for (const auto& ch : chains)
    if (!ch.arcs.empty() && ch.arcs.front().label == ArcLabel::Singular) singular = true;
  CHECK(singular);
}

TEST_CASE("backward sigma+ switches for z in (z_sat, 1)") {
  const auto sys = make_tutorial({1.0, 1.0});
  SweepOptions opt;
  opt.horizon = 1.0;
  opt.max_arcs = 2;
  const auto chains = bc_chains_from(sys, {0, 0.2, 0.5}, 0, opt);
  REQUIRE_FALSE(chains.empty());
  const auto& ch = chains[0];
  CHECK(ch.arcs.front().label == ArcLabel::Plus);
  REQUIRE(ch.arcs.size() >= 2);
  CHECK(ch.arcs[1].label == ArcLabel::Minus);
  CHECK(ch.pattern().substr(ch.pattern().size() - 2) == "-+");
}

TEST_CASE("sweep invariants: M conserved, junctions continuous, serial equals parallel") {
  const auto sys = make_tutorial({1.0, 1.0});
  SweepOptions opt;
  opt.horizon = 0.4;
  std::vector<Vec3d> samples;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) samples.push_back({0, -0.1 + 0.05 * i, -0.2 + 0.1 * j});
  const auto par = backward_bc_sweep(sys, samples, opt);
  const auto ser = backward_bc_sweep_serial(sys, samples, opt);
  REQUIRE(par.size() == ser.size());
  for (std::size_t k = 0; k < par.size(); ++k) {
    CHECK(par[k].pattern() == ser[k].pattern());
    CHECK(par[k].total_time == ser[k].total_time);
    const auto& ch = par[k];
    const double M0 = ch.arcs.front().entry.M;
    for (std::size_t i = 0; i < ch.arcs.size(); ++i) {
      const auto& arc = ch.arcs[i];
      CHECK(std::abs(arc.exit.M - M0) <= 1e-8 * std::max(1.0, std::abs(M0)));
      CHECK(arc.entry.M >= -1e-12);
      if (i + 1 < ch.arcs.size()) {
        const auto& nx = ch.arcs[i + 1].entry;
        CHECK(norm(sub(arc.exit.q, nx.q)) < 1e-10);
        CHECK(norm(sub(arc.exit.p, nx.p)) < 1e-10);
        CHECK(arc.label != ch.arcs[i + 1].label);
      }
    }
    // fold records lie on y = z^2
    for (const auto& s : ch.switches)
      if (s.kind != SwitchKind::Ordinary) CHECK(std::abs(s.q[1] - s.q[2] * s.q[2]) < 1e-8);
  }
}

TEST_CASE("chain JSON") {
  const auto sys = make_tutorial({1.0, 1.0});
  SweepOptions opt;
  opt.horizon = 0.1;
  const auto ch = bc_chains_from(sys, {0, 0.0, 0.3}, 4, opt).at(0);
  const auto j = to_json(ch);
  CHECK(j.at("sample") == 4);
  CHECK(j.at("arcs").size() == ch.arcs.size());
}
