// SPDX-License-Identifier: Apache-2.0
//
// Minimal forward-mode scalar: value plus a dynamic vector of partial
// derivatives. The geometry routines are templated on the scalar type, so
// instantiating them with Dual yields exact analytic gradients through
// hull selection, polygon clipping and rotating calipers (all piecewise
// rational; branches compare values only).

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace equikit::geo {

class Dual {
 public:
  double v = 0.0;
  std::vector<double> d;  // empty means "constant" (all partials zero)

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constants are the point

  static Dual variable(double value, std::size_t slot, std::size_t num_slots) {
    Dual x(value);
    x.d.assign(num_slots, 0.0);
    x.d[slot] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    axpy(1.0, o.d);
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    axpy(-1.0, o.d);
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator-(const Dual& a) {
    Dual r(-a.v);
    r.d.resize(a.d.size());
    for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = -a.d[i];
    return r;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    r.d.assign(std::max(a.d.size(), b.d.size()), 0.0);
    for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] += a.d[i] * b.v;
    for (std::size_t i = 0; i < b.d.size(); ++i) r.d[i] += a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    Dual r(a.v * inv);
    r.d.assign(std::max(a.d.size(), b.d.size()), 0.0);
    for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] += a.d[i] * inv;
    for (std::size_t i = 0; i < b.d.size(); ++i) r.d[i] -= a.v * inv * inv * b.d[i];
    return r;
  }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }

 private:
  void axpy(double s, const std::vector<double>& o) {
    if (o.empty()) return;
    if (d.size() < o.size()) d.resize(o.size(), 0.0);
    for (std::size_t i = 0; i < o.size(); ++i) d[i] += s * o[i];
  }
};

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

inline double sqrt(double x) { return std::sqrt(x); }
inline Dual sqrt(const Dual& a) {
  Dual r(std::sqrt(a.v));
  const double inv = a.v > 0.0 ? 0.5 / r.v : 0.0;  // subgradient 0 at the origin
  r.d.resize(a.d.size());
  for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] = a.d[i] * inv;
  return r;
}

}  // namespace equikit::geo
