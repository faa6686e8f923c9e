// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Dense univariate polynomials in ascending coefficient order.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

namespace ran {

using Poly = std::vector<double>;

inline double poly_eval(std::span<const double> c, double x) {
  double v = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) v = v * x + c[k];
  return v;
}

/// Drops trailing coefficients with |c| <= tol.
inline Poly poly_trim(Poly c, double tol = 0.0) {
  while (!c.empty() && std::abs(c.back()) <= tol) c.pop_back();
  return c;
}

inline int poly_degree(std::span<const double> c) {
  for (std::size_t k = c.size(); k-- > 0;)
    if (c[k] != 0.0) return static_cast<int>(k);
  return -1;
}

inline Poly poly_add(std::span<const double> a, std::span<const double> b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += b[i];
  return r;
}

inline Poly poly_scale(std::span<const double> a, double s) {
  Poly r(a.begin(), a.end());
  for (double& v : r) v *= s;
  return r;
}

inline Poly poly_mul(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

/// Roots of a polynomial via the eigenvalues of its companion matrix.
inline std::vector<std::complex<double>> poly_roots(std::span<const double> c) {
  const int deg = poly_degree(c);
  if (deg < 1) return {};
  const double lead = c[static_cast<std::size_t>(deg)];
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -c[static_cast<std::size_t>(i)] / lead;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  std::vector<std::complex<double>> roots;
  for (int i = 0; i < deg; ++i) roots.push_back(es.eigenvalues()(i));
  std::sort(roots.begin(), roots.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return roots;
}

/// lead * prod (x - r); imaginary parts of conjugate pairs cancel.
inline Poly poly_from_roots(std::span<const std::complex<double>> roots, double lead) {
  std::vector<std::complex<double>> acc{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(acc.size() + 1, 0.0);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      next[i + 1] += acc[i];
      next[i] -= r * acc[i];
    }
    acc.swap(next);
  }
  Poly out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = lead * acc[i].real();
  return out;
}

/// Least-squares coefficients for sum_k c_k b_k(x) over rows of a design matrix.
inline std::vector<double> least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
  return std::vector<double>(c.data(), c.data() + c.size());
}

/// Degree-deg fit of f sampled at xs.
inline Poly poly_fit(std::span<const double> xs, std::span<const double> ys, int deg) {
  if (xs.size() != ys.size() || xs.empty()) throw std::invalid_argument("poly_fit: bad sample");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(xs.size()), deg + 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double p = 1.0;
    for (int k = 0; k <= deg; ++k, p *= xs[i]) A(static_cast<Eigen::Index>(i), k) = p;
    y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return least_squares(A, y);
}

}  // namespace ran
