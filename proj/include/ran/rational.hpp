// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Learnable rational units with pole-free denominators.
//
//   r~(x) = p(x) / d(x),  d(x) = 1 + softplus(q(x)) + eps  >=  1 + eps
//   r(x)  = s + alpha * (r~(x) - s),  alpha = sigmoid(gate_logit)
//
// where s is the residual anchor: x for the scalar unit, (x + y) / 2 for the
// bivariate one. d(x) never drops below 1 + eps, so the quotient has no poles.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ran/rng.hpp"

namespace ran {

inline constexpr double kDefaultEps = 1e-4;
inline constexpr double kDefaultGateLogit = -4.0;
inline constexpr double kInitCoeffStddev = 1e-3;

inline double softplus(double u) {
  if (!std::isfinite(u)) throw std::domain_error("non-finite input");
  // max(u, 0) + log1p(exp(-|u|)); floored at the smallest subnormal so the
  // result stays strictly positive where exp underflows.
  const double v = std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
  return std::max(v, std::numeric_limits<double>::denorm_min());
}

// Accepts +-inf so a gate can be forced exactly open or shut.
inline double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline constexpr double kGateOff = -std::numeric_limits<double>::infinity();
inline constexpr double kGateOpen = std::numeric_limits<double>::infinity();

template <std::size_t Dim>
struct EvalWithGrads {
  double value = 0.0;
  std::array<double, Dim> d_input{};
  std::vector<double> d_params;  // aligned with the unit's flattened parameters
};

/// Scalar unit. Parameters flatten as [num_coeffs..., den_coeffs..., gate_logit].
struct RationalUnit1D {
  std::vector<double> num_coeffs;  // a_0 .. a_m
  std::vector<double> den_coeffs;  // b_1 .. b_n (no constant term)
  double gate_logit = kDefaultGateLogit;
  double eps = kDefaultEps;

  int degree_num() const { return static_cast<int>(num_coeffs.size()) - 1; }
  int degree_den() const { return static_cast<int>(den_coeffs.size()); }
  std::size_t param_count() const { return num_coeffs.size() + den_coeffs.size() + 1; }
  double gate() const { return sigmoid(gate_logit); }

  void validate() const {
    if (num_coeffs.size() < 2) throw std::invalid_argument("RationalUnit1D: degree_num must be >= 1");
    if (!(eps > 0.0)) throw std::invalid_argument("RationalUnit1D: eps must be > 0");
  }

  /// p(x) = x, q == 0.
  static RationalUnit1D identity(int m, int n, double eps = kDefaultEps) {
    RationalUnit1D u;
    u.num_coeffs.assign(static_cast<std::size_t>(m) + 1, 0.0);
    u.den_coeffs.assign(static_cast<std::size_t>(n), 0.0);
    u.num_coeffs[1] = 1.0;
    u.eps = eps;
    u.validate();
    return u;
  }
};

struct Monomial {
  int px = 0;
  int py = 0;
  int degree() const { return px + py; }
  friend bool operator==(const Monomial&, const Monomial&) = default;
};

inline std::vector<Monomial> default_num_basis_2d() {
  return {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
}

inline std::vector<Monomial> default_den_basis_2d() {
  return {{1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
}

/// Bivariate unit. Parameters flatten as [num_coeffs..., den_coeffs..., gate_logit].
struct RationalUnit2D {
  std::vector<Monomial> num_basis = default_num_basis_2d();
  std::vector<Monomial> den_basis = default_den_basis_2d();
  std::vector<double> num_coeffs = std::vector<double>(6, 0.0);
  std::vector<double> den_coeffs = std::vector<double>(5, 0.0);
  double gate_logit = kDefaultGateLogit;
  double eps = kDefaultEps;

  std::size_t param_count() const { return num_coeffs.size() + den_coeffs.size() + 1; }
  std::size_t coeff_count() const { return num_coeffs.size() + den_coeffs.size(); }
  double gate() const { return sigmoid(gate_logit); }

  void validate() const {
    if (num_coeffs.size() != num_basis.size() || den_coeffs.size() != den_basis.size())
      throw std::invalid_argument("RationalUnit2D: coefficient/basis length mismatch");
    for (const auto& mono : den_basis)
      if (mono.degree() == 0) throw std::invalid_argument("RationalUnit2D: constant monomial in denominator basis");
    if (!(eps > 0.0)) throw std::invalid_argument("RationalUnit2D: eps must be > 0");
  }

  int max_degree() const {
    int deg = 0;
    for (const auto& mono : num_basis) deg = std::max({deg, mono.px, mono.py});
    for (const auto& mono : den_basis) deg = std::max({deg, mono.px, mono.py});
    return deg;
  }

  /// Numerator (x + y) / 2 with q == 0.
  static RationalUnit2D identity(double eps = kDefaultEps) {
    RationalUnit2D u;
    u.eps = eps;
    for (std::size_t t = 0; t < u.num_basis.size(); ++t) {
      if (u.num_basis[t] == Monomial{1, 0} || u.num_basis[t] == Monomial{0, 1}) u.num_coeffs[t] = 0.5;
    }
    return u;
  }
};

namespace detail {

inline void check_finite(double x) {
  if (!std::isfinite(x)) throw std::domain_error("non-finite input");
}

// value and first derivative of sum_{k} c_k x^{k + shift} by Horner.
inline void horner(std::span<const double> c, double x, int shift, double& value, double& deriv) {
  double v = 0.0, dv = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) {
    dv = dv * x + v;
    v = v * x + c[k];
  }
  if (shift == 1) {
    // x * poly(x)
    deriv = v + x * dv;
    value = x * v;
  } else {
    value = v;
    deriv = dv;
  }
}

struct Parts1D {
  double p, dp, q, dq, d, dd, sig;
};

inline Parts1D parts_1d(const RationalUnit1D& u, double x) {
  Parts1D r{};
  horner(u.num_coeffs, x, 0, r.p, r.dp);
  horner(u.den_coeffs, x, 1, r.q, r.dq);
  r.sig = sigmoid(r.q);
  r.d = 1.0 + softplus(r.q) + u.eps;
  r.dd = r.sig * r.dq;
  return r;
}

struct PowerTable {
  std::array<double, 9> xs{}, ys{};
  PowerTable(double x, double y, int deg) {
    if (deg > 8) throw std::invalid_argument("RationalUnit2D: monomial degree above 8");
    xs[0] = ys[0] = 1.0;
    for (int k = 1; k <= deg; ++k) {
      xs[k] = xs[k - 1] * x;
      ys[k] = ys[k - 1] * y;
    }
  }
  double mono(const Monomial& mo) const { return xs[mo.px] * ys[mo.py]; }
  double dmono_dx(const Monomial& mo) const { return mo.px == 0 ? 0.0 : mo.px * xs[mo.px - 1] * ys[mo.py]; }
  double dmono_dy(const Monomial& mo) const { return mo.py == 0 ? 0.0 : mo.py * xs[mo.px] * ys[mo.py - 1]; }
};

}  // namespace detail

inline double denominator_1d(const RationalUnit1D& u, double x) {
  detail::check_finite(x);
  return detail::parts_1d(u, x).d;
}

inline double eval_raw_1d(const RationalUnit1D& u, double x) {
  detail::check_finite(x);
  const auto r = detail::parts_1d(u, x);
  return r.p / r.d;
}

/// d r~ / dx.
inline double raw_derivative_1d(const RationalUnit1D& u, double x) {
  detail::check_finite(x);
  const auto r = detail::parts_1d(u, x);
  return (r.dp * r.d - r.p * r.dd) / (r.d * r.d);
}

/// d'(x) = sigmoid(q(x)) q'(x); bounded in magnitude by |q'(x)|.
inline double denominator_derivative_1d(const RationalUnit1D& u, double x) {
  detail::check_finite(x);
  return detail::parts_1d(u, x).dd;
}

/// Gated evaluation writing exact parameter partials into d_params
/// (length u.param_count()). Returns the gated value.
inline double eval_gated_1d(const RationalUnit1D& u, double x, std::span<double> d_params, double& d_input) {
  detail::check_finite(x);
  const auto r = detail::parts_1d(u, x);
  const double alpha = sigmoid(u.gate_logit);
  const double inv_d = 1.0 / r.d;
  const double raw = r.p * inv_d;
  const double draw = (r.dp * r.d - r.p * r.dd) * inv_d * inv_d;

  const std::size_t m1 = u.num_coeffs.size();
  double xp = 1.0;
  for (std::size_t a = 0; a < m1; ++a) {
    d_params[a] = alpha * xp * inv_d;
    xp *= x;
  }
  // d r~/d b_k = -p / d^2 * sigmoid(q) * x^k
  const double den_common = -alpha * raw * inv_d * r.sig;
  xp = x;
  for (std::size_t b = 0; b < u.den_coeffs.size(); ++b) {
    d_params[m1 + b] = den_common * xp;
    xp *= x;
  }
  d_params[m1 + u.den_coeffs.size()] = alpha * (1.0 - alpha) * (raw - x);

  d_input = (1.0 - alpha) + alpha * draw;
  return x + alpha * (raw - x);
}

inline EvalWithGrads<1> eval_gated_1d(const RationalUnit1D& u, double x) {
  EvalWithGrads<1> out;
  out.d_params.resize(u.param_count());
  out.value = eval_gated_1d(u, x, out.d_params, out.d_input[0]);
  return out;
}

inline double denominator_2d(const RationalUnit2D& u, double x, double y) {
  detail::check_finite(x);
  detail::check_finite(y);
  const detail::PowerTable pw(x, y, u.max_degree());
  double q = 0.0;
  for (std::size_t s = 0; s < u.den_basis.size(); ++s) q += u.den_coeffs[s] * pw.mono(u.den_basis[s]);
  return 1.0 + softplus(q) + u.eps;
}

inline double eval_raw_2d(const RationalUnit2D& u, double x, double y) {
  detail::check_finite(x);
  detail::check_finite(y);
  const detail::PowerTable pw(x, y, u.max_degree());
  double p = 0.0, q = 0.0;
  for (std::size_t t = 0; t < u.num_basis.size(); ++t) p += u.num_coeffs[t] * pw.mono(u.num_basis[t]);
  for (std::size_t s = 0; s < u.den_basis.size(); ++s) q += u.den_coeffs[s] * pw.mono(u.den_basis[s]);
  return p / (1.0 + softplus(q) + u.eps);
}

inline double eval_gated_2d(const RationalUnit2D& u, double x, double y, std::span<double> d_params,
                            std::array<double, 2>& d_input) {
  detail::check_finite(x);
  detail::check_finite(y);
  const detail::PowerTable pw(x, y, u.max_degree());
  double p = 0.0, px = 0.0, py = 0.0, q = 0.0, qx = 0.0, qy = 0.0;
  for (std::size_t t = 0; t < u.num_basis.size(); ++t) {
    const auto& mo = u.num_basis[t];
    p += u.num_coeffs[t] * pw.mono(mo);
    px += u.num_coeffs[t] * pw.dmono_dx(mo);
    py += u.num_coeffs[t] * pw.dmono_dy(mo);
  }
  for (std::size_t s = 0; s < u.den_basis.size(); ++s) {
    const auto& mo = u.den_basis[s];
    q += u.den_coeffs[s] * pw.mono(mo);
    qx += u.den_coeffs[s] * pw.dmono_dx(mo);
    qy += u.den_coeffs[s] * pw.dmono_dy(mo);
  }
  const double sig = sigmoid(q);
  const double d = 1.0 + softplus(q) + u.eps;
  const double inv_d = 1.0 / d;
  const double raw = p * inv_d;
  const double alpha = sigmoid(u.gate_logit);
  const double anchor = 0.5 * (x + y);

  const std::size_t nt = u.num_basis.size();
  for (std::size_t t = 0; t < nt; ++t) d_params[t] = alpha * pw.mono(u.num_basis[t]) * inv_d;
  const double den_common = -alpha * raw * inv_d * sig;
  for (std::size_t s = 0; s < u.den_basis.size(); ++s) d_params[nt + s] = den_common * pw.mono(u.den_basis[s]);
  d_params[nt + u.den_basis.size()] = alpha * (1.0 - alpha) * (raw - anchor);

  const double rx = (px - raw * sig * qx) * inv_d;
  const double ry = (py - raw * sig * qy) * inv_d;
  d_input[0] = 0.5 * (1.0 - alpha) + alpha * rx;
  d_input[1] = 0.5 * (1.0 - alpha) + alpha * ry;
  return anchor + alpha * (raw - anchor);
}

inline EvalWithGrads<2> eval_gated_2d(const RationalUnit2D& u, double x, double y) {
  EvalWithGrads<2> out;
  out.d_params.resize(u.param_count());
  out.value = eval_gated_2d(u, x, y, out.d_params, out.d_input);
  return out;
}

inline double gated_value_1d(const RationalUnit1D& u, double x) {
  const double alpha = u.gate();
  return x + alpha * (eval_raw_1d(u, x) - x);
}

inline double gated_value_2d(const RationalUnit2D& u, double x, double y) {
  const double alpha = u.gate();
  const double anchor = 0.5 * (x + y);
  return anchor + alpha * (eval_raw_2d(u, x, y) - anchor);
}

/// Near-identity initialization: x-coefficient 1, every other coefficient
/// ~ N(0, 1e-3^2), gate at the default logit.
inline void init_near_identity(RationalUnit1D& u, Rng& rng) {
  for (std::size_t a = 0; a < u.num_coeffs.size(); ++a) u.num_coeffs[a] = a == 1 ? 1.0 : normal(rng, 0.0, kInitCoeffStddev);
  for (auto& b : u.den_coeffs) b = normal(rng, 0.0, kInitCoeffStddev);
  u.gate_logit = kDefaultGateLogit;
}

inline void init_near_identity(RationalUnit2D& u, Rng& rng) {
  for (std::size_t t = 0; t < u.num_basis.size(); ++t) {
    const auto& mo = u.num_basis[t];
    const bool linear = (mo == Monomial{1, 0}) || (mo == Monomial{0, 1});
    u.num_coeffs[t] = linear ? 0.5 : normal(rng, 0.0, kInitCoeffStddev);
  }
  for (auto& c : u.den_coeffs) c = normal(rng, 0.0, kInitCoeffStddev);
  u.gate_logit = kDefaultGateLogit;
}

}  // namespace ran
