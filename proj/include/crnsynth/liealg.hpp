#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include "crnsynth/dual.hpp"
#include "crnsynth/series.hpp"
#include "crnsynth/vec3.hpp"

namespace crnsynth {

using SD1 = Dual<TruncatedSeries>;
using SD2 = Dual<SD1>;
using SD3 = Dual<SD2>;

// Scalar types a SmoothField can be evaluated on.
template <class T>
inline constexpr bool is_ladder_v =
    std::is_same_v<T, double> || std::is_same_v<T, D1> || std::is_same_v<T, D2> || std::is_same_v<T, D3> ||
    std::is_same_v<T, D4> || std::is_same_v<T, TruncatedSeries> || std::is_same_v<T, SD1> ||
    std::is_same_v<T, SD2> || std::is_same_v<T, SD3>;

class DerivativeDepthError : public std::runtime_error {
 public:
  DerivativeDepthError() : std::runtime_error("derivative nesting deeper than the scalar ladder") {}
};

using Mat3 = std::array<Vec3d, 3>;            // row-major: m[i][j] = dX_i/dq_j
using Hess3 = std::array<Mat3, 3>;            // h[i][j][k] = d2 X_i / dq_j dq_k

// [X,Y](q) = DX(q) Y(q) - DY(q) X(q), computed with two directional dual passes.
template <class T, class FX, class FY>
Vec3<T> lie_bracket_at(const FX& X, const FY& Y, const Vec3<T>& q) {
  using D = Dual<T>;
  const Vec3<T> xv = X(q);
  const Vec3<T> yv = Y(q);
  Vec3<D> qy, qx;
  for (int i = 0; i < 3; ++i) {
    qy[i] = D(q[i], yv[i]);
    qx[i] = D(q[i], xv[i]);
  }
  const Vec3<D> dxy = X(qy);
  const Vec3<D> dyx = Y(qx);
  return {dxy[0].d - dyx[0].d, dxy[1].d - dyx[1].d, dxy[2].d - dyx[2].d};
}

// Directional derivative DX(q) w.
template <class T, class FX>
Vec3<T> directional_at(const FX& X, const Vec3<T>& q, const Vec3<T>& w) {
  using D = Dual<T>;
  Vec3<D> qd;
  for (int i = 0; i < 3; ++i) qd[i] = D(q[i], w[i]);
  const Vec3<D> r = X(qd);
  return {r[0].d, r[1].d, r[2].d};
}

// p^T DX(q), i.e. the gradient of q -> p.X(q).
template <class T, class FX>
Vec3<T> covector_jacobian_at(const FX& X, const Vec3<T>& q, const Vec3<T>& p) {
  Vec3<T> out;
  for (int j = 0; j < 3; ++j) {
    Vec3<T> e = zero3<T>();
    e[j] = T(1.0);
    out[j] = dot(p, directional_at(X, q, e));
  }
  return out;
}

class SmoothField {
 public:
  SmoothField() = default;

  template <class Fn>
  explicit SmoothField(Fn fn, std::string name = "")
      : impl_(std::make_shared<Impl>(make_impl(fn))), name_(std::move(name)) {}

  template <class T>
  Vec3<T> operator()(const Vec3<T>& q) const {
    static_assert(is_ladder_v<T>, "scalar type not supported by SmoothField");
    if (!impl_) throw std::logic_error("empty SmoothField");
    return std::get<Fun<T>>(impl_->fns)(q);
  }

  explicit operator bool() const { return static_cast<bool>(impl_); }
  const std::string& name() const { return name_; }

  Vec3d eval(const Vec3d& q) const { return (*this)(q); }
  Mat3 jacobian(const Vec3d& q) const;
  Hess3 hessian(const Vec3d& q) const;

  // [X,Y] as a new field
  static SmoothField bracket(const SmoothField& X, const SmoothField& Y);

 private:
  template <class T>
  using Fun = std::function<Vec3<T>(const Vec3<T>&)>;
  struct Impl {
    std::tuple<Fun<double>, Fun<D1>, Fun<D2>, Fun<D3>, Fun<D4>, Fun<TruncatedSeries>, Fun<SD1>, Fun<SD2>,
               Fun<SD3>>
        fns;
  };

  template <class Fn>
  static Impl make_impl(const Fn& fn) {
    Impl impl;
    assign<double>(impl, fn);
    assign<D1>(impl, fn);
    assign<D2>(impl, fn);
    assign<D3>(impl, fn);
    assign<D4>(impl, fn);
    assign<TruncatedSeries>(impl, fn);
    assign<SD1>(impl, fn);
    assign<SD2>(impl, fn);
    assign<SD3>(impl, fn);
    return impl;
  }
  template <class T, class Fn>
  static void assign(Impl& impl, const Fn& fn) {
    std::get<Fun<T>>(impl.fns) = [fn](const Vec3<T>& q) -> Vec3<T> { return fn(q); };
  }

  std::shared_ptr<const Impl> impl_;
  std::string name_;
};

struct TargetManifold {
  Vec3d normal{1.0, 0.0, 0.0};
  double level = 0.0;
  bool contains(const Vec3d& q, double tol = 1e-9) const { return std::abs(dot(normal, q) - level) <= tol; }
};

// Axis-aligned box in which the model is trusted.
struct ValidityBox {
  Vec3d lo{-1e300, -1e300, -1e300};
  Vec3d hi{1e300, 1e300, 1e300};
  bool contains(const Vec3d& q) const {
    for (int i = 0; i < 3; ++i)
      if (q[i] < lo[i] || q[i] > hi[i]) return false;
    return true;
  }
};

class ControlAffineSystem {
 public:
  ControlAffineSystem(std::string name, SmoothField drift, SmoothField control, TargetManifold target = {});

  const std::string& name() const { return name_; }
  const SmoothField& drift() const { return F_; }
  const SmoothField& control() const { return G_; }
  const SmoothField& gf() const { return GF_; }    // [G,F]
  const SmoothField& gfg() const { return GFG_; }  // [[G,F],G]
  const SmoothField& gff() const { return GFF_; }  // [[G,F],F]
  const TargetManifold& target() const { return target_; }
  void set_target(const TargetManifold& t);

  double u_min = -1.0;
  double u_max = 1.0;

  // Closed-form feedback for models where D vanishes identically (used instead of -D'/D).
  std::function<double(const Vec3d&)> singular_feedback_override;
  // Parameters echoed into reports.
  std::vector<std::pair<std::string, double>> parameters;
  ValidityBox validity;

  double parameter(const std::string& key) const;

 private:
  std::string name_;
  SmoothField F_, G_, GF_, GFG_, GFF_;
  TargetManifold target_;
};

double hamiltonian_lift(const SmoothField& X, const Vec3d& q, const Vec3d& p);
Vec3d lie_bracket(const SmoothField& X, const SmoothField& Y, const Vec3d& q);
double poisson_bracket(const SmoothField& X, const SmoothField& Y, const Vec3d& q, const Vec3d& p);

struct Determinants {
  double D = 0;       // det(G,[G,F],[[G,F],G])
  double Dp = 0;      // det(G,[G,F],[[G,F],F])
  double Dpp = 0;     // det(G,[G,F],F)
};

// The frame used by several modules at a point.
struct BracketFrame {
  Vec3d F, G, GF, GFG, GFF;
};
BracketFrame bracket_frame(const ControlAffineSystem& sys, const Vec3d& q);
Determinants determinants(const ControlAffineSystem& sys, const Vec3d& q);
Determinants determinants(const BracketFrame& f);

// Built-in models.
struct TutorialParams {
  double a = 1.0;
  double c = 1.0;
};
struct TutorialDrift {
  TutorialParams p;
  template <class T>
  Vec3<T> operator()(const Vec3<T>& q) const {
    const T& y = q[1];
    const T& z = q[2];
    return {1.0 + p.a * y - 3.0 * p.c * y * z + p.c * z * z * z, z, T(0.0)};
  }
};

struct ConstantAxis {
  int axis = 2;
  template <class T>
  Vec3<T> operator()(const Vec3<T>&) const {
    return unit3<T>(axis);
  }
};

struct SemiNormalFormParams {
  double a = -1.0;
  double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0;
  double b = 1.0;
  double c = 1.0;
  double us0 = 1.0;
  double usx = 1.0;
  double usy = 1.0;
};
struct SemiNormalFormDrift {
  SemiNormalFormParams p;
  template <class T>
  Vec3<T> operator()(const Vec3<T>& q) const {
    const T& x = q[0];
    const T& y = q[1];
    const T& z = q[2];
    const T z2 = z * z;
    return {1.0 + p.a * z2 + p.alpha1 * x * y * y + p.alpha2 * y * z2 + p.alpha3 * x * z2, p.b * z,
            p.c * z - p.us0 - p.usx * x - p.usy * y};
  }
};

// x' = 1 + a y^2, y' = u - us0, embedded with a frozen third coordinate.
struct Unfolding2DParams {
  double a = -1.0;
  double us0 = 0.0;
};
struct Unfolding2DDrift {
  Unfolding2DParams p;
  template <class T>
  Vec3<T> operator()(const Vec3<T>& q) const {
    const T& y = q[1];
    return {1.0 + p.a * y * y, T(-p.us0), T(0.0)};
  }
};

// Validation system for the variational detectors: F = (1, -z, y), G = (k y, 0, 1).
// D = 2k, D' = 0 identically, D'' = k(y^2 + z^2) - 1, so X_s = F is linear and its
// variational flow rotates (y, z) with period 2 pi. Hyperbolic near the x-axis for k < 0.
struct RotationDrift {
  template <class T>
  Vec3<T> operator()(const Vec3<T>& q) const {
    return {T(1.0), -q[2], q[1]};
  }
};
struct RotationControl {
  double k = -1.0;
  template <class T>
  Vec3<T> operator()(const Vec3<T>& q) const {
    return {k * q[1], T(0.0), T(1.0)};
  }
};

ControlAffineSystem make_tutorial(const TutorialParams& p);
ControlAffineSystem make_rotation_system(double k = -1.0);
ControlAffineSystem make_semi_normal_form(const SemiNormalFormParams& p);
ControlAffineSystem make_unfolding_2d(const Unfolding2DParams& p);

}  // namespace crnsynth
