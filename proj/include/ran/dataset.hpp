// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ran/rng.hpp"

namespace ran {

/// N x d inputs with either N x C real targets or N class labels.
struct Dataset {
  std::string name;
  std::size_t d = 0;
  std::size_t C = 1;
  std::vector<double> inputs;   // row-major N x d
  std::vector<double> targets;  // row-major N x C (regression)
  std::vector<int> labels;      // N (classification)
  std::vector<std::pair<double, double>> domain;

  bool classification() const { return !labels.empty(); }
  std::size_t size() const { return d == 0 ? 0 : inputs.size() / d; }
  std::span<const double> x(std::size_t n) const { return std::span(inputs).subspan(n * d, d); }
  std::span<const double> y(std::size_t n) const { return std::span(targets).subspan(n * C, C); }

  void validate() const {
    if (d == 0 || size() == 0) throw std::invalid_argument("Dataset '" + name + "': empty");
    if (inputs.size() % d != 0) throw std::invalid_argument("Dataset '" + name + "': ragged inputs");
    for (double v : inputs)
      if (!std::isfinite(v)) throw std::invalid_argument("Dataset '" + name + "': non-finite input");
    if (classification()) {
      if (labels.size() != size()) throw std::invalid_argument("Dataset '" + name + "': label count mismatch");
      for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= C) throw std::invalid_argument("Dataset '" + name + "': label out of range");
    } else {
      if (targets.size() != size() * C) throw std::invalid_argument("Dataset '" + name + "': target count mismatch");
      for (double v : targets)
        if (!std::isfinite(v)) throw std::invalid_argument("Dataset '" + name + "': non-finite target");
    }
  }

  /// Per-dimension [min, max] over the stored inputs.
  std::vector<std::pair<double, double>> bounding_box() const {
    std::vector<std::pair<double, double>> box(d, {INFINITY, -INFINITY});
    for (std::size_t n = 0; n < size(); ++n)
      for (std::size_t i = 0; i < d; ++i) {
        box[i].first = std::min(box[i].first, inputs[n * d + i]);
        box[i].second = std::max(box[i].second, inputs[n * d + i]);
      }
    return box;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.name = name;
    out.d = d;
    out.C = C;
    out.domain = domain;
    for (std::size_t n : idx) {
      auto xs = x(n);
      out.inputs.insert(out.inputs.end(), xs.begin(), xs.end());
      if (classification()) {
        out.labels.push_back(labels[n]);
      } else {
        auto ys = y(n);
        out.targets.insert(out.targets.end(), ys.begin(), ys.end());
      }
    }
    return out;
  }
};

/// Seeded (train, validation) split with the given validation fraction.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = stream(seed, "split");
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(idx.size())));
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(val)};
}

}  // namespace ran
