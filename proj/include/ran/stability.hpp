// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Certified derivative bounds for rational units and gated residual stacks,
// plus an empirical gradient-norm probe for deep stacks near the identity.
//
// For p(x) = sum_{i<=m} a_i x^i, q(x) = sum_{1<=i<=n} b_i x^i on |x| <= B and
// d(x) = 1 + softplus(q(x)) + eps >= 1:
//
//   |r~'| <= |p'| + |p| |q'|
//        <= W_P S1(m,B) + W_P S0(m,B) * W_Q S1(n,B) = K_phi
//
// with W_P = ||a||_1, W_Q = ||b||_1, S0(d,B) = sum_{i=0}^d B^i and
// S1(d,B) = sum_{i=1}^d i B^{i-1}.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ran/deep.hpp"
#include "ran/rational.hpp"
#include "ran/rng.hpp"

namespace ran {

inline double scaling_factor(int k, int degree, double B) {
  if (!(B > 0.0)) throw std::invalid_argument("scaling_factor: B must be > 0");
  if (degree < 0) throw std::invalid_argument("scaling_factor: negative degree");
  double s = 0.0, pw = 1.0;
  switch (k) {
    case 0:
      for (int i = 0; i <= degree; ++i, pw *= B) s += pw;
      return s;
    case 1:
      for (int i = 1; i <= degree; ++i, pw *= B) s += i * pw;
      return s;
    default:
      throw std::invalid_argument("scaling_factor: only k = 0 or 1 is supported");
  }
}

struct LipschitzReport {
  double B = 0.0;
  double W_P = 0.0, W_Q = 0.0;
  double S0_m = 0.0, S1_m = 0.0, S1_n = 0.0;
  double M_P = 0.0, M_Pp = 0.0, M_Qp = 0.0;
  double K_phi = 0.0;          // bound on |r~'| over [-B, B]
  double empirical_sup = 0.0;  // measured sup |r~'|
  double margin = 0.0;         // K_phi - empirical_sup
  double alpha = 0.0;
  double gated_bound = 0.0;    // (1 - alpha) + alpha K_phi
  double empirical_sup_gated = 0.0;
};

/// Closed-form part of the certificate; no sampling.
inline double unit_lipschitz_constant(const RationalUnit1D& u, double B) {
  double wp = 0.0, wq = 0.0;
  for (double a : u.num_coeffs) wp += std::abs(a);
  for (double b : u.den_coeffs) wq += std::abs(b);
  const int m = u.degree_num(), n = u.degree_den();
  return wp * scaling_factor(1, m, B) + wp * scaling_factor(0, m, B) * wq * scaling_factor(1, n, B);
}

namespace detail {

// Maximizes |f| on [lo, hi] by golden-section search (assumes local unimodality).
inline double refine_max_abs(const std::function<double(double)>& f, double lo, double hi) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = std::abs(f(c)), fd = std::abs(f(d));
  for (int it = 0; it < 60; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = std::abs(f(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = std::abs(f(d));
    }
  }
  return std::max({fc, fd, std::abs(f(lo)), std::abs(f(hi))});
}

// sup |f| over a uniform grid on [-B, B], extra points, and a local
// refinement around the best grid cell.
inline double sampled_sup(const std::function<double(double)>& f, double B, int points,
                          std::span<const double> extra = {}) {
  double best = 0.0;
  int arg = 0;
  const double h = 2.0 * B / (points - 1);
  for (int i = 0; i < points; ++i) {
    const double v = std::abs(f(-B + h * i));
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  for (double x : extra)
    if (std::abs(x) <= B) best = std::max(best, std::abs(f(x)));
  const double lo = std::max(-B, -B + h * (arg - 1));
  const double hi = std::min(B, -B + h * (arg + 1));
  return std::max(best, refine_max_abs(f, lo, hi));
}

}  // namespace detail

inline constexpr int kLipschitzGridPoints = 10000;

/// Certificate plus its grid measurement over [-B, B].
inline LipschitzReport unit_lipschitz_bound(const RationalUnit1D& u, double B, int grid_points = kLipschitzGridPoints) {
  if (!(B > 0.0)) throw std::invalid_argument("unit_lipschitz_bound: B must be > 0");
  LipschitzReport r;
  r.B = B;
  for (double a : u.num_coeffs) r.W_P += std::abs(a);
  for (double b : u.den_coeffs) r.W_Q += std::abs(b);
  const int m = u.degree_num(), n = u.degree_den();
  r.S0_m = scaling_factor(0, m, B);
  r.S1_m = scaling_factor(1, m, B);
  r.S1_n = scaling_factor(1, n, B);
  r.M_P = r.W_P * r.S0_m;
  r.M_Pp = r.W_P * r.S1_m;
  r.M_Qp = r.W_Q * r.S1_n;
  r.K_phi = r.M_Pp + r.M_P * r.M_Qp;
  r.alpha = u.gate();
  r.gated_bound = (1.0 - r.alpha) + r.alpha * r.K_phi;

  // Critical points of p' (roots of p'') are where a pure polynomial part peaks.
  std::vector<double> extra;
  if (m == 3 && u.num_coeffs[3] != 0.0) extra.push_back(-u.num_coeffs[2] / (3.0 * u.num_coeffs[3]));
  r.empirical_sup = detail::sampled_sup([&](double x) { return raw_derivative_1d(u, x); }, B, grid_points, extra);
  const double a = r.alpha;
  r.empirical_sup_gated = detail::sampled_sup(
      [&](double x) { return (1.0 - a) + a * raw_derivative_1d(u, x); }, B, grid_points, extra);
  r.margin = r.K_phi - r.empirical_sup;
  return r;
}

/// (x, |r~'(x)|) on a uniform grid, for plotting against K_phi.
inline std::vector<std::pair<double, double>> derivative_profile(const RationalUnit1D& u, double B, int points) {
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double x = points == 1 ? 0.0 : -B + 2.0 * B * i / (points - 1);
    out.emplace_back(x, std::abs(raw_derivative_1d(u, x)));
  }
  return out;
}

inline constexpr double kPowerTol = 1e-8;
inline constexpr int kPowerMaxIter = 10000;

/// Largest singular value of a rows x cols row-major matrix by power
/// iteration on W^T W from a seeded start vector.
inline double spectral_norm(std::span<const double> W, std::size_t rows, std::size_t cols, std::uint64_t seed = 0,
                            double tol = kPowerTol, int max_iter = kPowerMaxIter) {
  if (W.size() != rows * cols) throw std::invalid_argument("spectral_norm: shape mismatch");
  if (rows == 0 || cols == 0) return 0.0;
  Rng rng = stream(seed, "power");
  std::vector<double> v(cols), wv(rows), z(cols);
  for (auto& x : v) x = uniform(rng, -1.0, 1.0);
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& e : x) e /= s;
    return s;
  };
  normalize(v);
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += W[r * cols + c] * v[c];
      wv[r] = s;
    }
    std::fill(z.begin(), z.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) z[c] += W[r * cols + c] * wv[r];
    const double lam = normalize(z);  // ||W^T W v||
    if (lam == 0.0) return 0.0;
    const double next = std::sqrt(lam);
    v.swap(z);
    if (std::abs(next - sigma) <= tol * next) return next;
    sigma = next;
  }
  throw std::runtime_error("spectral_norm: power iteration did not converge in " + std::to_string(max_iter) +
                           " iterations");
}

struct LayerBound {
  double alpha = 0.0;       // block gate
  double K_phi = 0.0;       // max over the block's gated units of (1 - a_u) + a_u K_raw
  double spectral = 0.0;    // ||W_l||_2
  double bound = 1.0;       // (1 - alpha) + alpha K_phi ||W_l||_2
};

/// Bound on ||d h_{l+1} / d h_l||_2 for states whose pre-activations satisfy
/// |(W_l h_l)_i| <= B.
inline LayerBound layer_jacobian_bound(const DeepBlock& blk, double B, std::uint64_t seed = 0) {
  LayerBound lb;
  lb.alpha = blk.gate();
  const std::size_t w = blk.units.size();
  for (const auto& u : blk.units) {
    const double a = u.gate();
    lb.K_phi = std::max(lb.K_phi, (1.0 - a) + a * unit_lipschitz_constant(u, B));
  }
  lb.spectral = spectral_norm(blk.W, w, w, seed);
  lb.bound = (1.0 - lb.alpha) + lb.alpha * lb.K_phi * lb.spectral;
  return lb;
}

struct NetworkBound {
  std::vector<LayerBound> layers;
  double bound = 1.0;
};

inline NetworkBound network_bound(const DeepRanStack& stack, double B) {
  NetworkBound nb;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    nb.layers.push_back(layer_jacobian_bound(stack.layers[l], B, stack.seed + l));
    nb.bound *= nb.layers.back().bound;
  }
  return nb;
}

struct IsometryProbe {
  std::size_t depth = 0;
  double alpha = 0.0;        // uniform block gate
  double ratio = 1.0;        // ||grad h0|| / ||grad hL||, pooled over inputs
  double K = 1.0;            // max_l K_phi,l ||W_l||_2 at the observed radius
  double radius = 0.0;       // max |pre-activation| seen
  double upper_bound = 1.0;  // exp(L alpha (K - 1))
  double gamma = 0.0;        // measured -log(ratio) / (L alpha)
  double lower_bound = 1.0;  // exp(-L alpha gamma)
};

/// Gradient-norm ratio through the block stack. grad_fn maps h_L to dL/dh_L.
inline IsometryProbe isometry_probe(const DeepRanStack& stack,
                                    const std::function<std::vector<double>(std::span<const double>)>& grad_fn,
                                    std::span<const std::vector<double>> inputs) {
  IsometryProbe pr;
  pr.depth = stack.layers.size();
  pr.alpha = stack.layers.empty() ? 0.0 : stack.layers.front().gate();
  double num = 0.0, den = 0.0;
  for (const auto& h0 : inputs) {
    const auto fwd = forward_deep(stack, h0);
    for (const auto& st : fwd.states)
      for (double p : st.pre) pr.radius = std::max(pr.radius, std::abs(p));
    const auto gL = grad_fn(fwd.hL);
    const auto g0 = backward_deep(stack, fwd, gL);
    for (double v : g0) num += v * v;
    for (double v : gL) den += v * v;
  }
  pr.ratio = den > 0.0 ? std::sqrt(num / den) : 1.0;
  if (pr.radius > 0.0) {
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
      const auto lb = layer_jacobian_bound(stack.layers[l], pr.radius, stack.seed + l);
      pr.K = l == 0 ? lb.K_phi * lb.spectral : std::max(pr.K, lb.K_phi * lb.spectral);
    }
  }
  const double La = static_cast<double>(pr.depth) * pr.alpha;
  pr.upper_bound = std::exp(La * (pr.K - 1.0));
  pr.gamma = La > 0.0 ? -std::log(pr.ratio) / La : 0.0;
  pr.lower_bound = std::exp(-La * pr.gamma);
  return pr;
}

}  // namespace ran
