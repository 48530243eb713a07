#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace diffddp {

/// Second-order forward-mode number: value, gradient and Hessian with
/// respect to N seed variables. Evaluating a scalar function once on Jets
/// yields its full Hessian.
template <int N>
struct Jet {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;

  double v = 0.0;
  Vec g = Vec::Zero();
  Mat h = Mat::Zero();

  Jet() = default;
  Jet(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  static Jet variable(double value, int i) {
    Jet j(value);
    j.g[i] = 1.0;
    return j;
  }
};

template <int N>
Jet<N> operator-(const Jet<N>& a) {
  Jet<N> r;
  r.v = -a.v;
  r.g = -a.g;
  r.h = -a.h;
  return r;
}

template <int N>
Jet<N> operator+(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r;
  r.v = a.v + b.v;
  r.g = a.g + b.g;
  r.h = a.h + b.h;
  return r;
}

template <int N>
Jet<N> operator-(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r;
  r.v = a.v - b.v;
  r.g = a.g - b.g;
  r.h = a.h - b.h;
  return r;
}

template <int N>
Jet<N> operator+(const Jet<N>& a, double s) {
  Jet<N> r = a;
  r.v += s;
  return r;
}

template <int N>
Jet<N> operator+(double s, const Jet<N>& a) {
  return a + s;
}

template <int N>
Jet<N> operator-(const Jet<N>& a, double s) {
  return a + (-s);
}

template <int N>
Jet<N> operator-(double s, const Jet<N>& a) {
  return -a + s;
}

template <int N>
Jet<N> operator*(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r;
  r.v = a.v * b.v;
  r.g = a.g * b.v + b.g * a.v;
  r.h = a.h * b.v + b.h * a.v + a.g * b.g.transpose() + b.g * a.g.transpose();
  return r;
}

template <int N>
Jet<N> operator*(double s, const Jet<N>& a) {
  Jet<N> r;
  r.v = s * a.v;
  r.g = s * a.g;
  r.h = s * a.h;
  return r;
}

template <int N>
Jet<N> operator*(const Jet<N>& a, double s) {
  return s * a;
}

// Applies a scalar function with derivatives (d1, d2) at a.v via the chain rule.
template <int N>
Jet<N> chain(const Jet<N>& a, double value, double d1, double d2) {
  Jet<N> r;
  r.v = value;
  r.g = d1 * a.g;
  r.h = d1 * a.h + d2 * a.g * a.g.transpose();
  return r;
}

template <int N>
Jet<N> inverse(const Jet<N>& b) {
  const double inv = 1.0 / b.v;
  return chain(b, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <int N>
Jet<N> operator/(const Jet<N>& a, const Jet<N>& b) {
  return a * inverse(b);
}

template <int N>
Jet<N> operator/(const Jet<N>& a, double s) {
  return (1.0 / s) * a;
}

template <int N>
Jet<N> operator/(double s, const Jet<N>& b) {
  return s * inverse(b);
}

template <int N>
Jet<N> sin(const Jet<N>& a) {
  const double s = std::sin(a.v);
  return chain(a, s, std::cos(a.v), -s);
}

template <int N>
Jet<N> cos(const Jet<N>& a) {
  const double c = std::cos(a.v);
  return chain(a, c, -std::sin(a.v), -c);
}

}  // namespace diffddp
