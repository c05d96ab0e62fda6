#pragma once

// Multivariate polynomials truncated by total degree.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace crnsynth {

class PoleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MonomialBasis {
 public:
  struct Pair {
    int j;
    int k;
  };
  struct DerivEntry {
    int src;
    int dst;
    int factor;
  };

  // Shared instance per (names, order).
  static std::shared_ptr<const MonomialBasis> get(const std::vector<std::string>& names, int order);

  MonomialBasis(std::vector<std::string> names, int order);

  int nvars() const { return static_cast<int>(names_.size()); }
  int order() const { return order_; }
  int size() const { return size_; }
  const std::vector<std::string>& names() const { return names_; }
  int var(const std::string& name) const;
  bool has_var(const std::string& name) const;
  const int* exponents(int k) const { return &exps_[static_cast<size_t>(k) * names_.size()]; }
  int degree(int k) const { return degree_[k]; }
  int index_of(const std::vector<int>& e) const;
  // monomial k = monomial parent(k) * var parent_var(k)
  int parent(int k) const { return parent_[k]; }
  int parent_var(int k) const { return parent_var_[k]; }
  // for monomial i: all (j, k) with m_i*m_j = m_k inside the order
  const std::vector<Pair>& products(int i) const { return products_[i]; }
  const std::vector<DerivEntry>& derivative_map(int v) const { return deriv_[v]; }
  // monomial k times variable v, or -1 beyond the order
  int times_var(int k, int v) const { return times_var_[static_cast<size_t>(k) * names_.size() + v]; }

 private:
  std::vector<std::string> names_;
  int order_;
  int size_ = 0;
  std::vector<int> exps_;
  std::vector<int> degree_;
  std::vector<int> parent_;
  std::vector<int> parent_var_;
  std::vector<int> times_var_;
  std::map<std::vector<int>, int> index_;
  std::vector<std::vector<Pair>> products_;
  std::vector<std::vector<DerivEntry>> deriv_;
};

using BasisPtr = std::shared_ptr<const MonomialBasis>;

template <class C>
inline C prune_threshold() {
  if constexpr (std::is_same_v<C, double>) return 1e-14;
  return C(0);
}

template <class C>
class BasicSeries {
 public:
  BasicSeries() : coef_{C(0)} {}
  BasicSeries(double x) : coef_{C(x)} {}
  template <class U>
    requires(!std::is_same_v<U, double> && std::is_same_v<U, C>)
  BasicSeries(const U& x) : coef_{x} {}
  explicit BasicSeries(BasisPtr b) : basis_(std::move(b)), coef_(basis_->size(), C(0)) {}

  static BasicSeries constant(BasisPtr b, const C& c) {
    BasicSeries s(std::move(b));
    s.coef_[0] = c;
    return s;
  }
  // base + (deviation variable)
  static BasicSeries variable(BasisPtr b, const std::string& name, const C& base = C(0)) {
    BasicSeries s(b);
    s.coef_[0] = base;
    if (b->order() >= 1) s.coef_[b->times_var(0, b->var(name))] = C(1);
    return s;
  }

  const BasisPtr& basis() const { return basis_; }
  bool has_basis() const { return static_cast<bool>(basis_); }
  const C& constant_term() const { return coef_[0]; }
  const std::vector<C>& coefficients() const { return coef_; }
  std::vector<C>& coefficients() { return coef_; }

  C coefficient(const std::vector<int>& e) const {
    if (!basis_) {
      for (int x : e)
        if (x != 0) return C(0);
      return coef_[0];
    }
    int k = basis_->index_of(e);
    return k < 0 ? C(0) : coef_[k];
  }
  // coefficient by named exponents, e.g. {{"t",2},{"s0",1}}
  C coefficient(const std::map<std::string, int>& named) const {
    if (!basis_) return named.empty() ? coef_[0] : C(0);
    std::vector<int> e(basis_->nvars(), 0);
    for (const auto& [n, p] : named) {
      if (!basis_->has_var(n)) return p == 0 ? coefficient(e) : C(0);
      e[basis_->var(n)] = p;
    }
    return coefficient(e);
  }

  BasicSeries derivative(int v) const {
    if (!basis_) return BasicSeries(0.0);
    BasicSeries r(basis_);
    for (const auto& de : basis_->derivative_map(v)) r.coef_[de.dst] += C(de.factor) * coef_[de.src];
    return r;
  }
  BasicSeries derivative(const std::string& name) const {
    if (!basis_ || !basis_->has_var(name)) return BasicSeries(0.0);
    return derivative(basis_->var(name));
  }

  // antiderivative in variable v vanishing at v = 0; truncates beyond the order
  BasicSeries integral(int v) const {
    if (!basis_) throw std::logic_error("integral of a basis-free constant");
    BasicSeries r(basis_);
    for (int k = 0; k < basis_->size(); ++k) {
      if (coef_[k] == C(0)) continue;
      int dst = basis_->times_var(k, v);
      if (dst < 0) continue;
      r.coef_[dst] += coef_[k] / C(basis_->exponents(k)[v] + 1);
    }
    return r;
  }
  BasicSeries integral(const std::string& name) const { return integral(basis_->var(name)); }

  // divide by variable v; every monomial must contain v (up to tol)
  BasicSeries divide_by_var(int v, double tol = 1e-12) const {
    if (!basis_) throw std::logic_error("divide_by_var on constant");
    BasicSeries r(basis_);
    for (int k = 0; k < basis_->size(); ++k) {
      const int* e = basis_->exponents(k);
      if (e[v] == 0) {
        using std::abs;
        if (abs(coef_[k]) > C(tol)) throw std::domain_error("series not divisible by variable");
        continue;
      }
      std::vector<int> f(e, e + basis_->nvars());
      f[v] -= 1;
      r.coef_[basis_->index_of(f)] = coef_[k];
    }
    return r;
  }

  // T may be a scalar or a dual number
  template <class T>
  T evaluate(const std::vector<T>& x) const {
    if (!basis_) return T(coef_[0]);
    const int n = basis_->size();
    std::vector<T> mono(n);
    mono[0] = T(1.0);
    T acc = T(coef_[0]);
    for (int k = 1; k < n; ++k) {
      mono[k] = mono[basis_->parent(k)] * x[basis_->parent_var(k)];
      if (coef_[k] != C(0)) acc = acc + T(coef_[k]) * mono[k];
    }
    return acc;
  }

  // All monomial values of a basis at x, for evaluating several series sharing it.
  template <class T>
  static std::vector<T> monomials(const MonomialBasis& b, const std::vector<T>& x) {
    std::vector<T> mono(b.size());
    mono[0] = T(1.0);
    for (int k = 1; k < b.size(); ++k) mono[k] = mono[b.parent(k)] * x[b.parent_var(k)];
    return mono;
  }
  template <class T>
  T evaluate_monomials(const std::vector<T>& mono) const {
    if (!basis_) return T(coef_[0]);
    T acc = T(coef_[0]);
    for (int k = 1; k < basis_->size(); ++k)
      if (coef_[k] != C(0)) acc = acc + T(coef_[k]) * mono[k];
    return acc;
  }

  // Replace every variable v by subs[v]; the result lives in the basis of subs.
  BasicSeries compose(const std::vector<BasicSeries>& subs) const {
    if (!basis_) return *this;
    const int n = basis_->size();
    std::vector<BasicSeries> mono(n);
    mono[0] = BasicSeries(1.0);
    BasicSeries acc(coef_[0]);
    for (int k = 1; k < n; ++k) {
      mono[k] = mono[basis_->parent(k)] * subs[basis_->parent_var(k)];
      if (coef_[k] != C(0)) acc = acc + coef_[k] * mono[k];
    }
    return acc;
  }

  // Replace variable v by s, keeping the others.
  BasicSeries substitute(int v, const BasicSeries& s) const {
    if (!basis_) return *this;
    std::vector<BasicSeries> subs;
    for (int i = 0; i < basis_->nvars(); ++i)
      subs.push_back(i == v ? s : variable(basis_, basis_->names()[i]));
    return compose(subs);
  }

  // Re-express in another basis, matching variables by name. Terms above the new
  // order are dropped; a nonzero term in a variable the target lacks is an error.
  BasicSeries rebase(const BasisPtr& target) const {
    BasicSeries r(target);
    if (!basis_) {
      r.coef_[0] = coef_[0];
      return r;
    }
    std::vector<int> map(basis_->nvars(), -1);
    for (int v = 0; v < basis_->nvars(); ++v)
      if (target->has_var(basis_->names()[v])) map[v] = target->var(basis_->names()[v]);
    std::vector<int> e(target->nvars());
    for (int k = 0; k < basis_->size(); ++k) {
      if (coef_[k] == C(0)) continue;
      if (basis_->degree(k) > target->order()) continue;
      std::fill(e.begin(), e.end(), 0);
      const int* src = basis_->exponents(k);
      for (int v = 0; v < basis_->nvars(); ++v) {
        if (src[v] == 0) continue;
        if (map[v] < 0) throw std::domain_error("rebase: series depends on " + basis_->names()[v]);
        e[map[v]] = src[v];
      }
      r.coef_[target->index_of(e)] = coef_[k];
    }
    return r;
  }

  void prune() {
    using std::abs;
    const C th = prune_threshold<C>();
    if (th == C(0)) return;
    for (auto& c : coef_)
      if (abs(c) < th) c = C(0);
  }

  double max_abs_coefficient() const {
    using std::abs;
    double m = 0;
    for (const auto& c : coef_) m = std::max(m, static_cast<double>(abs(c)));
    return m;
  }

  BasicSeries& operator+=(const BasicSeries& o) { return *this = *this + o; }
  BasicSeries& operator-=(const BasicSeries& o) { return *this = *this - o; }
  BasicSeries& operator*=(const BasicSeries& o) { return *this = *this * o; }
  BasicSeries& operator/=(const BasicSeries& o) { return *this = *this / o; }

  friend BasicSeries operator+(const BasicSeries& a, const BasicSeries& b) {
    if (!a.basis_ && !b.basis_) return BasicSeries(a.coef_[0] + b.coef_[0]);
    BasicSeries r = a.basis_ ? a : b;
    const BasicSeries& o = a.basis_ ? b : a;
    if (!o.basis_) {
      r.coef_[0] += o.coef_[0];
    } else {
      check_same(r, o);
      for (size_t k = 0; k < r.coef_.size(); ++k) r.coef_[k] += o.coef_[k];
    }
    r.prune();
    return r;
  }
  friend BasicSeries operator-(const BasicSeries& a) {
    BasicSeries r = a;
    for (auto& c : r.coef_) c = -c;
    return r;
  }
  friend BasicSeries operator+(const BasicSeries& a) { return a; }
  friend BasicSeries operator-(const BasicSeries& a, const BasicSeries& b) { return a + (-b); }

  friend BasicSeries operator*(const BasicSeries& a, const BasicSeries& b) {
    if (!a.basis_ && !b.basis_) return BasicSeries(a.coef_[0] * b.coef_[0]);
    if (!a.basis_ || !b.basis_) {
      BasicSeries r = a.basis_ ? a : b;
      const C s = a.basis_ ? b.coef_[0] : a.coef_[0];
      for (auto& c : r.coef_) c *= s;
      r.prune();
      return r;
    }
    check_same(a, b);
    BasicSeries r(a.basis_);
    const int n = a.basis_->size();
    for (int i = 0; i < n; ++i) {
      const C ai = a.coef_[i];
      if (ai == C(0)) continue;
      for (const auto& pr : a.basis_->products(i)) {
        const C& bj = b.coef_[pr.j];
        if (bj != C(0)) r.coef_[pr.k] += ai * bj;
      }
    }
    r.prune();
    return r;
  }

  friend BasicSeries reciprocal(const BasicSeries& a) {
    using std::abs;
    const C a0 = a.coef_[0];
    if (abs(a0) < C(1e-300) || a0 == C(0)) throw PoleError("series reciprocal with vanishing constant term");
    if (!a.basis_) return BasicSeries(C(1) / a0);
    BasicSeries h = a;
    h.coef_[0] = C(0);
    h = h * BasicSeries(C(-1) / a0);
    // 1/a = (1/a0) * sum (-h/a0)^k
    BasicSeries term = constant(a.basis_, C(1) / a0);
    BasicSeries acc = term;
    for (int k = 1; k <= a.basis_->order(); ++k) {
      term = term * h;
      acc = acc + term;
    }
    return acc;
  }
  friend BasicSeries operator/(const BasicSeries& a, const BasicSeries& b) {
    if (!b.basis_) {
      if (b.coef_[0] == C(0)) throw PoleError("series division by zero");
      return a * BasicSeries(C(1) / b.coef_[0]);
    }
    return a * reciprocal(b);
  }

  friend BasicSeries exp(const BasicSeries& a) {
    using std::exp;
    const C e0 = exp(a.coef_[0]);
    if (!a.basis_) return BasicSeries(e0);
    BasicSeries h = a;
    h.coef_[0] = C(0);
    BasicSeries term = constant(a.basis_, e0);
    BasicSeries acc = term;
    for (int k = 1; k <= a.basis_->order(); ++k) {
      term = term * h * BasicSeries(C(1) / C(k));
      acc = acc + term;
    }
    return acc;
  }
  friend BasicSeries log(const BasicSeries& a) {
    using std::log;
    const C a0 = a.coef_[0];
    if (!(a0 > C(0))) throw std::domain_error("series log of nonpositive constant term");
    if (!a.basis_) return BasicSeries(log(a0));
    BasicSeries h = a;
    h.coef_[0] = C(0);
    h = h * BasicSeries(C(1) / a0);
    BasicSeries acc = constant(a.basis_, log(a0));
    BasicSeries term = constant(a.basis_, C(1));
    for (int k = 1; k <= a.basis_->order(); ++k) {
      term = term * h;
      C sgn = (k % 2 == 1) ? C(1) : C(-1);
      acc = acc + term * BasicSeries(sgn / C(k));
    }
    return acc;
  }
  friend BasicSeries sqrt(const BasicSeries& a) {
    using std::sqrt;
    const C a0 = a.coef_[0];
    if (!(a0 > C(0))) throw std::domain_error("series sqrt of nonpositive constant term");
    if (!a.basis_) return BasicSeries(sqrt(a0));
    BasicSeries h = a;
    h.coef_[0] = C(0);
    h = h * BasicSeries(C(1) / a0);
    BasicSeries acc = constant(a.basis_, C(1));
    BasicSeries term = constant(a.basis_, C(1));
    C binom = C(1);
    for (int k = 1; k <= a.basis_->order(); ++k) {
      binom = binom * (C(0.5) - C(k - 1)) / C(k);
      term = term * h;
      acc = acc + term * BasicSeries(binom);
    }
    return acc * BasicSeries(sqrt(a0));
  }

  friend double primal(const BasicSeries& a) { return static_cast<double>(a.coef_[0]); }

 private:
  static void check_same(const BasicSeries& a, const BasicSeries& b) {
    if (a.basis_ != b.basis_) throw std::logic_error("series from different bases combined");
  }

  BasisPtr basis_;
  std::vector<C> coef_;
};

using TruncatedSeries = BasicSeries<double>;

}  // namespace crnsynth
