// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ran/params.hpp"

namespace ran {

struct AdamConfig {
  double lr_main = 1e-3;
  double lr_den_gate_scale = 0.1;
  double weight_decay_den = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
  bool diverged = false;
  long long skipped = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Learning rate for a parameter group: denominators and gates train slower.
inline double group_lr(ParamKind k, const AdamConfig& cfg) {
  return (k == ParamKind::Denominator || k == ParamKind::Gate) ? cfg.lr_main * cfg.lr_den_gate_scale : cfg.lr_main;
}

/// One Adam step in place. Decoupled decay theta <- theta - lr_main * wd * theta
/// hits denominator coefficients only. A non-finite gradient skips the step,
/// sets state.diverged and returns false.
inline bool adam_step(std::span<double> params, std::span<const double> grads, std::span<const ParamKind> kinds,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != kinds.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) {
      state.diverged = true;
      ++state.skipped;
      return false;
    }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    if (!std::isfinite(params[i])) continue;  // gates pinned at +-inf stay pinned
    if (kinds[i] == ParamKind::Denominator && cfg.weight_decay_den > 0.0)
      params[i] -= cfg.lr_main * cfg.weight_decay_den * params[i];
    params[i] -= group_lr(kinds[i], cfg) * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return true;
}

}  // namespace ran
