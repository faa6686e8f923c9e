// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace ran {

/// Optimizer group a scalar parameter belongs to.
enum class ParamKind { Numerator, Denominator, Gate, Head, Dense };

inline std::string_view to_string(ParamKind k) {
  switch (k) {
    case ParamKind::Numerator: return "numerator";
    case ParamKind::Denominator: return "denominator";
    case ParamKind::Gate: return "gate";
    case ParamKind::Head: return "head";
    case ParamKind::Dense: return "dense";
  }
  return "?";
}

/// Half-open index range into a flat parameter vector.
struct ParamRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

/// Flat gradient in canonical parameter order plus the group of every entry.
struct ModelGradients {
  std::vector<double> flat;
  std::vector<ParamKind> kinds;

  std::vector<std::size_t> indices(ParamKind k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < kinds.size(); ++i)
      if (kinds[i] == k) out.push_back(i);
    return out;
  }

  std::vector<double> slice(ParamKind k) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < kinds.size(); ++i)
      if (kinds[i] == k) out.push_back(flat[i]);
    return out;
  }
};

}  // namespace ran
