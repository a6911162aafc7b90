#pragma once

// Second-order forward-mode jets in two variables: value, gradient and
// Hessian propagated together, so Hamiltonians get exact derivatives.

#include <array>
#include <cmath>

namespace gspde {

struct Jet2 {
  double v = 0.0;
  std::array<double, 2> g{0.0, 0.0};
  std::array<double, 3> h{0.0, 0.0, 0.0};  // xx, xy, yy

  Jet2() = default;
  Jet2(double c) : v(c) {}  // NOLINT: constants promote implicitly

  static Jet2 variable(double x, int which) {
    Jet2 j(x);
    j.g[which] = 1.0;
    return j;
  }

  bool is_constant() const {
    return g[0] == 0.0 && g[1] == 0.0 && h[0] == 0.0 && h[1] == 0.0 && h[2] == 0.0;
  }
};

/// f(u) with f' and f'' given at u.v.
inline Jet2 chain(const Jet2& u, double f, double df, double d2f) {
  Jet2 r;
  r.v = f;
  r.g = {df * u.g[0], df * u.g[1]};
  r.h = {d2f * u.g[0] * u.g[0] + df * u.h[0], d2f * u.g[0] * u.g[1] + df * u.h[1],
         d2f * u.g[1] * u.g[1] + df * u.h[2]};
  return r;
}

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v + b.v;
  for (int i = 0; i < 2; ++i) r.g[i] = a.g[i] + b.g[i];
  for (int i = 0; i < 3; ++i) r.h[i] = a.h[i] + b.h[i];
  return r;
}

inline Jet2 operator-(const Jet2& a) {
  Jet2 r;
  r.v = -a.v;
  for (int i = 0; i < 2; ++i) r.g[i] = -a.g[i];
  for (int i = 0; i < 3; ++i) r.h[i] = -a.h[i];
  return r;
}

inline Jet2 operator-(const Jet2& a, const Jet2& b) { return a + (-b); }

inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v * b.v;
  for (int i = 0; i < 2; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
  r.h[0] = a.h[0] * b.v + 2.0 * a.g[0] * b.g[0] + a.v * b.h[0];
  r.h[1] = a.h[1] * b.v + a.g[0] * b.g[1] + a.g[1] * b.g[0] + a.v * b.h[1];
  r.h[2] = a.h[2] * b.v + 2.0 * a.g[1] * b.g[1] + a.v * b.h[2];
  return r;
}

inline Jet2 reciprocal(const Jet2& a) {
  const double inv = 1.0 / a.v;
  return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * reciprocal(b); }

inline Jet2 exp(const Jet2& a) {
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}

inline Jet2 log(const Jet2& a) { return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v)); }
inline Jet2 sqrt(const Jet2& a) {
  const double r = std::sqrt(a.v);
  return chain(a, r, 0.5 / r, -0.25 / (r * a.v));
}

inline Jet2 sin(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, s, c, -s);
}

inline Jet2 cos(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, c, -s, -c);
}

inline Jet2 pow(const Jet2& a, double p) {
  if (p == 0.0) return Jet2(1.0);
  if (p == 1.0) return a;
  if (p == 2.0) return a * a;
  return chain(a, std::pow(a.v, p), p * std::pow(a.v, p - 1.0),
               p * (p - 1.0) * std::pow(a.v, p - 2.0));
}

/// General power; a constant exponent keeps negative bases usable.
inline Jet2 pow(const Jet2& a, const Jet2& b) {
  if (b.is_constant()) return pow(a, b.v);
  return exp(b * log(a));
}

}  // namespace gspde
