// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace ran {

inline constexpr long long kMaxSnapDenominator = 1000;

/// A coefficient that is either an exact fraction p/q or a plain double.
struct Coef {
  double value = 0.0;
  long long p = 0;
  long long q = 1;
  bool exact = true;

  static Coef fraction(long long p, long long q) {
    if (q == 0) throw std::invalid_argument("Coef: zero denominator");
    if (q < 0) {
      p = -p;
      q = -q;
    }
    const long long g = std::gcd(p < 0 ? -p : p, q);
    if (g > 1) {
      p /= g;
      q /= g;
    }
    return Coef{static_cast<double>(p) / static_cast<double>(q), p, q, true};
  }
  static Coef integer(long long v) { return fraction(v, 1); }
  static Coef real(double v) { return Coef{v, 0, 1, false}; }

  bool is_zero() const { return exact ? p == 0 : value == 0.0; }
  bool is_one() const { return exact && p == 1 && q == 1; }
  bool negative() const { return exact ? p < 0 : value < 0.0; }

  /// "3", "-3/2" or a round-trippable decimal.
  std::string str() const {
    if (exact) return q == 1 ? std::to_string(p) : std::to_string(p) + "/" + std::to_string(q);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
  }
};

namespace detail {

inline bool fits(__int128 v) { return v >= -(static_cast<__int128>(1) << 62) && v <= (static_cast<__int128>(1) << 62); }

inline Coef make_exact(__int128 p, __int128 q, double fallback) {
  if (q < 0) {
    p = -p;
    q = -q;
  }
  __int128 a = p < 0 ? -p : p, b = q;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    p /= a;
    q /= a;
  }
  if (!fits(p) || !fits(q)) return Coef::real(fallback);
  return Coef::fraction(static_cast<long long>(p), static_cast<long long>(q));
}

}  // namespace detail

inline Coef operator+(const Coef& a, const Coef& b) {
  if (a.exact && b.exact)
    return detail::make_exact(static_cast<__int128>(a.p) * b.q + static_cast<__int128>(b.p) * a.q,
                              static_cast<__int128>(a.q) * b.q, a.value + b.value);
  return Coef::real(a.value + b.value);
}

inline Coef operator-(const Coef& a) { return a.exact ? Coef::fraction(-a.p, a.q) : Coef::real(-a.value); }
inline Coef operator-(const Coef& a, const Coef& b) { return a + (-b); }

inline Coef operator*(const Coef& a, const Coef& b) {
  if (a.exact && b.exact)
    return detail::make_exact(static_cast<__int128>(a.p) * b.p, static_cast<__int128>(a.q) * b.q, a.value * b.value);
  return Coef::real(a.value * b.value);
}

inline Coef operator/(const Coef& a, const Coef& b) {
  if (b.is_zero()) throw std::domain_error("Coef: division by zero");
  if (a.exact && b.exact)
    return detail::make_exact(static_cast<__int128>(a.p) * b.q, static_cast<__int128>(a.q) * b.p, a.value / b.value);
  return Coef::real(a.value / b.value);
}

struct SnapResult {
  Coef coef;
  bool snapped = false;  // false: no p/q with q <= max_den lies within precision
  double error = 0.0;    // |x - coef|
};

namespace detail {

// Simplest fraction (smallest denominator) in [lo, hi], 0 < lo <= hi, via the
// continued-fraction recursion on both endpoints. Gives up once q > max_den.
inline bool simplest_in(long double lo, long double hi, long long max_den, long long& P, long long& Q) {
  // convergent recurrences h_k = a_k h_{k-1} + h_{k-2}, k_k likewise
  long long h2 = 0, h1 = 1, k2 = 1, k1 = 0;
  for (int depth = 0; depth < 64; ++depth) {
    const long double fl = std::floor(lo);
    long long a;
    bool done = false;
    if (fl == lo || fl + 1 <= hi) {
      a = static_cast<long long>(fl == lo ? fl : fl + 1);
      done = true;
    } else {
      a = static_cast<long long>(fl);
    }
    const long long h = a * h1 + h2, k = a * k1 + k2;
    if (k > max_den) return false;
    if (done) {
      P = h;
      Q = k;
      return true;
    }
    h2 = h1;
    h1 = h;
    k2 = k1;
    k1 = k;
    const long double nlo = 1.0L / (hi - fl), nhi = 1.0L / (lo - fl);
    lo = nlo;
    hi = nhi;
  }
  return false;
}

}  // namespace detail

/// Smallest-denominator fraction within `precision` of x with q <= max_den;
/// values within precision of 0 snap to 0. Otherwise x is kept and flagged.
inline SnapResult snap_value(double x, double precision, long long max_den = kMaxSnapDenominator) {
  if (!(precision > 0.0)) throw std::invalid_argument("snap_value: precision must be > 0");
  if (!std::isfinite(x)) return {Coef::real(x), false, 0.0};
  if (std::abs(x) <= precision) return {Coef::integer(0), true, std::abs(x)};
  if (std::abs(x) >= 1e15) {
    const double r = std::round(x);
    if (std::abs(x - r) <= precision && std::abs(r) < 9.0e15) return {Coef::integer(static_cast<long long>(r)), true, std::abs(x - r)};
    return {Coef::real(x), false, 0.0};
  }
  const bool neg = x < 0.0;
  const long double ax = std::abs(static_cast<long double>(x));
  long long P = 0, Q = 1;
  if (detail::simplest_in(ax - precision, ax + precision, max_den, P, Q)) {
    const Coef c = Coef::fraction(neg ? -P : P, Q);
    const double err = std::abs(x - c.value);
    if (err <= precision * (1.0 + 1e-12)) return {c, true, err};
  }
  return {Coef::real(x), false, 0.0};
}

}  // namespace ran
