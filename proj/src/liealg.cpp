#include "crnsynth/liealg.hpp"

#include <cmath>

namespace crnsynth {

Mat3 SmoothField::jacobian(const Vec3d& q) const {
  Mat3 J{};
  for (int j = 0; j < 3; ++j) {
    Vec3<D1> qd;
    for (int i = 0; i < 3; ++i) qd[i] = D1(q[i], i == j ? 1.0 : 0.0);
    const Vec3<D1> r = (*this)(qd);
    for (int i = 0; i < 3; ++i) J[i][j] = r[i].d;
  }
  return J;
}

Hess3 SmoothField::hessian(const Vec3d& q) const {
  Hess3 H{};
  for (int j = 0; j < 3; ++j) {
    for (int k = j; k < 3; ++k) {
      Vec3<D2> qd;
      for (int i = 0; i < 3; ++i) qd[i] = D2(D1(q[i], i == j ? 1.0 : 0.0), D1(i == k ? 1.0 : 0.0, 0.0));
      const Vec3<D2> r = (*this)(qd);
      for (int i = 0; i < 3; ++i) {
        H[i][j][k] = r[i].d.d;
        H[i][k][j] = r[i].d.d;
      }
    }
  }
  return H;
}

SmoothField SmoothField::bracket(const SmoothField& X, const SmoothField& Y) {
  auto fn = [X, Y](const auto& q) {
    using V = std::decay_t<decltype(q)>;
    using T = typename V::value_type;
    if constexpr (is_ladder_v<Dual<T>>) {
      return lie_bracket_at(X, Y, q);
    } else {
      throw DerivativeDepthError();
      return V{};
    }
  };
  return SmoothField(fn, "[" + X.name() + "," + Y.name() + "]");
}

ControlAffineSystem::ControlAffineSystem(std::string name, SmoothField drift, SmoothField control,
                                         TargetManifold target)
    : name_(std::move(name)), F_(std::move(drift)), G_(std::move(control)) {
  GF_ = SmoothField::bracket(G_, F_);
  GFG_ = SmoothField::bracket(GF_, G_);
  GFF_ = SmoothField::bracket(GF_, F_);
  set_target(target);
}

void ControlAffineSystem::set_target(const TargetManifold& t) {
  const double n = norm(t.normal);
  if (!(n > 0)) throw std::invalid_argument("target normal must be nonzero");
  target_ = t;
  target_.normal = scale(1.0 / n, t.normal);
  target_.level = t.level / n;
}

double ControlAffineSystem::parameter(const std::string& key) const {
  for (const auto& [k, v] : parameters)
    if (k == key) return v;
  throw std::out_of_range("model has no parameter '" + key + "'");
}

double hamiltonian_lift(const SmoothField& X, const Vec3d& q, const Vec3d& p) { return dot(p, X.eval(q)); }

Vec3d lie_bracket(const SmoothField& X, const SmoothField& Y, const Vec3d& q) { return lie_bracket_at(X, Y, q); }

double poisson_bracket(const SmoothField& X, const SmoothField& Y, const Vec3d& q, const Vec3d& p) {
  return dot(p, lie_bracket(X, Y, q));
}

BracketFrame bracket_frame(const ControlAffineSystem& sys, const Vec3d& q) {
  return {sys.drift().eval(q), sys.control().eval(q), sys.gf().eval(q), sys.gfg().eval(q), sys.gff().eval(q)};
}

Determinants determinants(const BracketFrame& f) {
  return {det3(f.G, f.GF, f.GFG), det3(f.G, f.GF, f.GFF), det3(f.G, f.GF, f.F)};
}

Determinants determinants(const ControlAffineSystem& sys, const Vec3d& q) {
  return determinants(bracket_frame(sys, q));
}

ControlAffineSystem make_tutorial(const TutorialParams& p) {
  if (p.c == 0.0) throw std::invalid_argument("tutorial model needs c != 0");
  ControlAffineSystem sys("tutorial", SmoothField(TutorialDrift{p}, "F"), SmoothField(ConstantAxis{2}, "G"));
  sys.parameters = {{"a", p.a}, {"c", p.c}};
  const double a = p.a, c = p.c;
  sys.singular_feedback_override = [a, c](const Vec3d& q) { return a / (6.0 * c * q[2]); };
  return sys;
}

ControlAffineSystem make_rotation_system(double k) {
  if (k == 0.0) throw std::invalid_argument("rotation system needs k != 0");
  ControlAffineSystem sys("rotation", SmoothField(RotationDrift{}, "F"), SmoothField(RotationControl{k}, "G"));
  sys.parameters = {{"k", k}};
  return sys;
}

ControlAffineSystem make_semi_normal_form(const SemiNormalFormParams& p) {
  ControlAffineSystem sys("seminf", SmoothField(SemiNormalFormDrift{p}, "F"), SmoothField(ConstantAxis{2}, "G"));
  sys.parameters = {{"a", p.a},   {"alpha1", p.alpha1}, {"alpha2", p.alpha2}, {"alpha3", p.alpha3}, {"b", p.b},
                    {"c", p.c},   {"us0", p.us0},       {"usx", p.usx},       {"usy", p.usy}};
  return sys;
}

ControlAffineSystem make_unfolding_2d(const Unfolding2DParams& p) {
  ControlAffineSystem sys("unfolding2d", SmoothField(Unfolding2DDrift{p}, "F"), SmoothField(ConstantAxis{1}, "G"));
  sys.parameters = {{"a", p.a}, {"us0", p.us0}};
  const double us0 = p.us0;
  sys.singular_feedback_override = [us0](const Vec3d&) { return us0; };
  return sys;
}

}  // namespace crnsynth
