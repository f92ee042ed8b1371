#pragma once

// Forward-mode dual numbers with a fixed number of directional derivatives.
// Nesting (Dual<Dual<double, N>, N>) yields second derivatives.

#include <array>
#include <cmath>
#include <type_traits>

namespace qlflow {

template <typename Scalar, int N>
struct Dual {
  Scalar value{};
  std::array<Scalar, N> grad{};

  Dual() = default;
  Dual(const Scalar& v) : value(v) { grad.fill(Scalar(0)); }  // NOLINT(google-explicit-constructor)
  template <typename A, std::enable_if_t<std::is_arithmetic_v<A> && !std::is_same_v<A, Scalar>, int> = 0>
  Dual(A v) : value(Scalar(v)) {  // NOLINT(google-explicit-constructor)
    grad.fill(Scalar(0));
  }

  /// Independent variable `v` seeded in direction `i`.
  static Dual variable(const Scalar& v, int i) {
    Dual d(v);
    d.grad[static_cast<std::size_t>(i)] = Scalar(1);
    return d;
  }

  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator-=(const Dual& o) { return *this = *this - o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }
};

template <typename T>
struct is_dual : std::false_type {};
template <typename S, int N>
struct is_dual<Dual<S, N>> : std::true_type {};

/// Innermost value of a (possibly nested) dual number.
template <typename T>
double value_of(const T& x) {
  if constexpr (is_dual<T>::value) {
    return value_of(x.value);
  } else {
    return static_cast<double>(x);
  }
}

namespace detail {
// Chain rule: result = f(x), with f'(x) = slope.
template <typename S, int N>
Dual<S, N> chain(const Dual<S, N>& x, const S& f, const S& slope) {
  Dual<S, N> r;
  r.value = f;
  for (int i = 0; i < N; ++i) r.grad[i] = slope * x.grad[i];
  return r;
}
}  // namespace detail

template <typename S, int N>
Dual<S, N> operator+(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  r.value = a.value + b.value;
  for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] + b.grad[i];
  return r;
}
template <typename S, int N>
Dual<S, N> operator-(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  r.value = a.value - b.value;
  for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] - b.grad[i];
  return r;
}
template <typename S, int N>
Dual<S, N> operator-(const Dual<S, N>& a) {
  Dual<S, N> r;
  r.value = -a.value;
  for (int i = 0; i < N; ++i) r.grad[i] = -a.grad[i];
  return r;
}
template <typename S, int N>
Dual<S, N> operator*(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  r.value = a.value * b.value;
  for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
  return r;
}
template <typename S, int N>
Dual<S, N> operator/(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  r.value = a.value / b.value;
  const S inv_b2 = S(1) / (b.value * b.value);
  for (int i = 0; i < N; ++i) r.grad[i] = (a.grad[i] * b.value - a.value * b.grad[i]) * inv_b2;
  return r;
}

// Mixed arithmetic with plain numbers.
#define QLFLOW_DUAL_MIXED_OP(op)                                                   \
  template <typename S, int N, typename A, std::enable_if_t<std::is_arithmetic_v<A>, int> = 0> \
  Dual<S, N> operator op(const Dual<S, N>& a, A b) {                               \
    return a op Dual<S, N>(S(b));                                                  \
  }                                                                                \
  template <typename S, int N, typename A, std::enable_if_t<std::is_arithmetic_v<A>, int> = 0> \
  Dual<S, N> operator op(A a, const Dual<S, N>& b) {                               \
    return Dual<S, N>(S(a)) op b;                                                  \
  }
QLFLOW_DUAL_MIXED_OP(+)
QLFLOW_DUAL_MIXED_OP(-)
QLFLOW_DUAL_MIXED_OP(*)
QLFLOW_DUAL_MIXED_OP(/)
#undef QLFLOW_DUAL_MIXED_OP

template <typename S, int N>
bool operator<(const Dual<S, N>& a, const Dual<S, N>& b) {
  return value_of(a) < value_of(b);
}

template <typename S, int N>
Dual<S, N> sin(const Dual<S, N>& x) {
  using std::cos;
  using std::sin;
  return detail::chain(x, S(sin(x.value)), S(cos(x.value)));
}
template <typename S, int N>
Dual<S, N> cos(const Dual<S, N>& x) {
  using std::cos;
  using std::sin;
  return detail::chain(x, S(cos(x.value)), S(-sin(x.value)));
}
template <typename S, int N>
Dual<S, N> exp(const Dual<S, N>& x) {
  using std::exp;
  const S e = exp(x.value);
  return detail::chain(x, e, e);
}
template <typename S, int N>
Dual<S, N> log(const Dual<S, N>& x) {
  using std::log;
  return detail::chain(x, S(log(x.value)), S(S(1) / x.value));
}
template <typename S, int N>
Dual<S, N> sqrt(const Dual<S, N>& x) {
  using std::sqrt;
  const S s = sqrt(x.value);
  return detail::chain(x, s, S(S(0.5) / s));
}
/// Power with a constant exponent.
template <typename S, int N>
Dual<S, N> pow(const Dual<S, N>& x, double e) {
  using std::pow;
  return detail::chain(x, S(pow(x.value, e)), S(e * pow(x.value, e - 1.0)));
}
template <typename S, int N>
Dual<S, N> pow(const Dual<S, N>& x, const Dual<S, N>& e) {
  return exp(e * log(x));
}

}  // namespace qlflow
