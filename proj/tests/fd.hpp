// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference helpers shared by the gradient tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace ran::testing {

inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Gradient of f at p by central differences with a step scaled to |p_i|.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> p, double h = 1e-6) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p[i];
    const double step = h * std::max(1.0, std::abs(x));
    p[i] = x + step;
    const double fp = f(p);
    p[i] = x - step;
    const double fm = f(p);
    p[i] = x;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Relative error with an absolute floor for entries near zero.
inline bool grad_close(double analytic, double numeric, double rel = 1e-5, double abs_floor = 1e-8) {
  const double err = std::abs(analytic - numeric);
  return err <= abs_floor || err <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace ran::testing
