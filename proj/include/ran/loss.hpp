// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ran {

enum class LossKind { Mse, Mae, SoftmaxCe };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::Mae: return "mae";
    case LossKind::SoftmaxCe: return "softmax_ce";
  }
  return "?";
}

inline LossKind parse_loss(std::string_view s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "mae") return LossKind::Mae;
  if (s == "softmax_ce") return LossKind::SoftmaxCe;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

/// Per-example loss and dL/dz for logits z.
///   mse: mean_c (z_c - y_c)^2      mae: mean_c |z_c - y_c|      softmax_ce: -log softmax(z)_label
/// `target` is used for regression, `label` for softmax_ce. Writes dL/dz into grad.
inline double example_loss(LossKind kind, std::span<const double> z, std::span<const double> target, int label,
                           std::span<double> grad) {
  const std::size_t C = z.size();
  switch (kind) {
    case LossKind::Mse: {
      double loss = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double r = z[c] - target[c];
        loss += r * r;
        grad[c] = 2.0 * r / static_cast<double>(C);
      }
      return loss / static_cast<double>(C);
    }
    case LossKind::Mae: {
      double loss = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double r = z[c] - target[c];
        loss += std::abs(r);
        grad[c] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / static_cast<double>(C);
      }
      return loss / static_cast<double>(C);
    }
    case LossKind::SoftmaxCe: {
      if (label < 0 || static_cast<std::size_t>(label) >= C)
        throw std::invalid_argument("label " + std::to_string(label) + " out of range for " + std::to_string(C) + " classes");
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
      const double lse = zmax + std::log(sum);
      for (std::size_t c = 0; c < C; ++c) grad[c] = std::exp(z[c] - lse) - (static_cast<int>(c) == label ? 1.0 : 0.0);
      return lse - z[static_cast<std::size_t>(label)];
    }
  }
  return 0.0;
}

/// log softmax(z).
inline void log_softmax(std::span<const double> z, std::span<double> out) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  for (std::size_t c = 0; c < z.size(); ++c) out[c] = z[c] - lse;
}

}  // namespace ran
