#pragma once

#include <cmath>
#include <type_traits>
#include <utility>

namespace crnsynth {

// Forward-mode dual number. Nesting Dual<Dual<T>> gives higher derivatives.
template <class T>
struct Dual {
  T v{};
  T d{};

  Dual() : v(0.0), d(0.0) {}
  template <class U>
    requires std::is_convertible_v<const U&, T>
  Dual(const U& x) : v(x), d(0.0) {}
  Dual(T value, T deriv) : v(std::move(value)), d(std::move(deriv)) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }
  Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }

  friend Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
  friend Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
  friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
  friend Dual operator+(const Dual& a) { return a; }
  friend Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
  friend Dual operator/(const Dual& a, const Dual& b) {
    T q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
  }

  friend Dual exp(const Dual& a) {
    using std::exp;
    T e = exp(a.v);
    return {e, e * a.d};
  }
  friend Dual log(const Dual& a) {
    using std::log;
    return {log(a.v), a.d / a.v};
  }
  friend Dual sqrt(const Dual& a) {
    using std::sqrt;
    T s = sqrt(a.v);
    return {s, a.d / (2.0 * s)};
  }
  friend Dual sin(const Dual& a) {
    using std::sin;
    using std::cos;
    return {sin(a.v), cos(a.v) * a.d};
  }
  friend Dual cos(const Dual& a) {
    using std::sin;
    using std::cos;
    return {cos(a.v), -(sin(a.v) * a.d)};
  }
};

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;
using D4 = Dual<D3>;

template <class T>
  requires std::is_constructible_v<double, const T&>
double primal(const T& x) {
  return static_cast<double>(x);
}
template <class T>
double primal(const Dual<T>& x) {
  return static_cast<double>(primal(x.v));
}

// Powers used by the models: integer exponents by repeated products (valid for
// any sign of the base), fractional ones through exp(r log x).
template <class T>
T int_pow(const T& x, int n) {
  if (n == 0) return T(1.0);
  if (n < 0) return T(1.0) / int_pow(x, -n);
  T r = x;
  for (int i = 1; i < n; ++i) r = r * x;
  return r;
}

inline bool is_small_integer(double r) { return r == std::round(r) && std::abs(r) <= 32.0; }

template <class T>
T real_pow(const T& x, double r) {
  using std::exp;
  using std::log;
  if (is_small_integer(r)) return int_pow(x, static_cast<int>(r));
  return exp(r * log(x));
}

}  // namespace crnsynth
