#pragma once

#include <array>
#include <cmath>

namespace crnsynth {

template <class T>
using Vec3 = std::array<T, 3>;
using Vec3d = Vec3<double>;

template <class T>
Vec3<T> zero3() {
  return {T(0.0), T(0.0), T(0.0)};
}

template <class T>
Vec3<T> unit3(int axis) {
  Vec3<T> r = zero3<T>();
  r[axis] = T(1.0);
  return r;
}

template <class T>
Vec3<T> add(const Vec3<T>& a, const Vec3<T>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

template <class T>
Vec3<T> sub(const Vec3<T>& a, const Vec3<T>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

template <class S, class T>
Vec3<T> scale(const S& s, const Vec3<T>& a) {
  return {s * a[0], s * a[1], s * a[2]};
}

// a + s*b
template <class S, class T>
Vec3<T> axpy(const Vec3<T>& a, const S& s, const Vec3<T>& b) {
  return {a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]};
}

template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// det of the matrix with columns a, b, c
template <class T>
T det3(const Vec3<T>& a, const Vec3<T>& b, const Vec3<T>& c) {
  return dot(a, cross(b, c));
}

inline double norm(const Vec3d& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Vec3d& a) {
  return std::fmax(std::fabs(a[0]), std::fmax(std::fabs(a[1]), std::fabs(a[2])));
}

}  // namespace crnsynth
