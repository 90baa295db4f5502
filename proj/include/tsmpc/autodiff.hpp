#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace tsmpc::ad {

// Maximum number of derivative directions carried per evaluation pass.
// Wider Jacobians are computed in chunks of this size (see smooth_fn.hpp).
inline constexpr int kMaxDirs = 12;

// Forward-mode dual number with up to kMaxDirs directions.
// T = double gives first derivatives; T = Dual<double> nests to second
// derivatives (needed for Jacobians of chain-rule task rates).
// Entries d[0..n) are valid, the tail is unspecified; n == 0 means constant.
template <typename T>
struct Dual {
  T v{};
  int n = 0;
  std::array<T, kMaxDirs> d;

  Dual() = default;
  Dual(double c) : v(c) {}  // NOLINT: constants promote implicitly

  Dual(const Dual& o) : v(o.v), n(o.n) {
    for (int i = 0; i < n; ++i) d[i] = o.d[i];
  }
  Dual& operator=(const Dual& o) {
    v = o.v;
    n = o.n;
    for (int i = 0; i < n; ++i) d[i] = o.d[i];
    return *this;
  }
};

using D1 = Dual<double>;
using D2 = Dual<D1>;

inline double value(double x) { return x; }
template <typename T>
double value(const Dual<T>& a) {
  return value(a.v);
}

// Reads direction i, treating missing tail entries as zero.
template <typename T>
T dir(const Dual<T>& a, int i) {
  return i < a.n ? a.d[i] : T{};
}

template <typename T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r;
  r.v = a.v + b.v;
  r.n = a.n > b.n ? a.n : b.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = dir(a, i) + dir(b, i);
  return r;
}

template <typename T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r;
  r.v = a.v - b.v;
  r.n = a.n > b.n ? a.n : b.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = dir(a, i) - dir(b, i);
  return r;
}

template <typename T>
Dual<T> operator-(const Dual<T>& a) {
  Dual<T> r;
  r.v = -a.v;
  r.n = a.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = -a.d[i];
  return r;
}

template <typename T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r;
  r.v = a.v * b.v;
  r.n = a.n > b.n ? a.n : b.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = dir(a, i) * b.v + a.v * dir(b, i);
  return r;
}

template <typename T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r;
  r.v = a.v / b.v;
  r.n = a.n > b.n ? a.n : b.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = (dir(a, i) - r.v * dir(b, i)) / b.v;
  return r;
}

// double-on-one-side overloads avoid widening constants into full duals.
template <typename T>
Dual<T> operator+(const Dual<T>& a, double c) {
  Dual<T> r(a);
  r.v = a.v + c;
  return r;
}
template <typename T>
Dual<T> operator+(double c, const Dual<T>& a) {
  return a + c;
}
template <typename T>
Dual<T> operator-(const Dual<T>& a, double c) {
  Dual<T> r(a);
  r.v = a.v - c;
  return r;
}
template <typename T>
Dual<T> operator-(double c, const Dual<T>& a) {
  Dual<T> r = -a;
  r.v = c - a.v;
  return r;
}
template <typename T>
Dual<T> operator*(const Dual<T>& a, double c) {
  Dual<T> r;
  r.v = a.v * c;
  r.n = a.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = a.d[i] * c;
  return r;
}
template <typename T>
Dual<T> operator*(double c, const Dual<T>& a) {
  return a * c;
}
template <typename T>
Dual<T> operator/(const Dual<T>& a, double c) {
  return a * (1.0 / c);
}
template <typename T>
Dual<T> operator/(double c, const Dual<T>& a) {
  return Dual<T>(c) / a;
}

template <typename T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  a = a + b;
  return a;
}
template <typename T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
  a = a - b;
  return a;
}
template <typename T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
  a = a * b;
  return a;
}

template <typename T>
Dual<T> sin(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  Dual<T> r;
  r.v = sin(a.v);
  r.n = a.n;
  const T c = cos(a.v);
  for (int i = 0; i < r.n; ++i) r.d[i] = c * a.d[i];
  return r;
}

template <typename T>
Dual<T> cos(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  Dual<T> r;
  r.v = cos(a.v);
  r.n = a.n;
  const T c = -sin(a.v);
  for (int i = 0; i < r.n; ++i) r.d[i] = c * a.d[i];
  return r;
}

template <typename T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  Dual<T> r;
  r.v = exp(a.v);
  r.n = a.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = r.v * a.d[i];
  return r;
}

template <typename T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  if (value(a) <= 0.0) throw std::domain_error("ad::log: nonpositive argument");
  Dual<T> r;
  r.v = log(a.v);
  r.n = a.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = a.d[i] / a.v;
  return r;
}

template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  if (value(a) <= 0.0) throw std::domain_error("ad::sqrt: derivative undefined at <= 0");
  Dual<T> r;
  r.v = sqrt(a.v);
  r.n = a.n;
  const T c = 0.5 / r.v;
  for (int i = 0; i < r.n; ++i) r.d[i] = c * a.d[i];
  return r;
}

// |x| is smooth away from 0; evaluating the derivative at exactly 0 is a
// non-differentiable-primitive error per the task-function contract.
template <typename T>
Dual<T> abs(const Dual<T>& a) {
  if (value(a) == 0.0 && a.n > 0)
    throw std::domain_error("ad::abs: derivative undefined at 0");
  return value(a) < 0.0 ? -a : a;
}

template <typename T>
Dual<T> pow(const Dual<T>& a, int k) {
  if (k == 0) return Dual<T>(1.0);
  if (k < 0) return 1.0 / pow(a, -k);
  Dual<T> r = a;
  for (int i = 1; i < k; ++i) r = r * a;
  return r;
}

template <typename T>
T sq(const T& a) {
  return a * a;
}

}  // namespace tsmpc::ad
