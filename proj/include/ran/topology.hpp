// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ran/rng.hpp"

namespace ran {

/// Ordered list of interacting variable pairs (i, j), i < j < d.
struct InteractionSet {
  int d = 0;
  std::vector<std::pair<int, int>> pairs;
  std::uint64_t seed = 0;

  std::size_t size() const { return pairs.size(); }

  void validate() const {
    std::set<std::pair<int, int>> seen;
    for (const auto& [i, j] : pairs) {
      if (!(0 <= i && i < j && j < d)) {
        throw std::invalid_argument("InteractionSet: pair (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") not ordered within dimension " + std::to_string(d));
      }
      if (!seen.insert({i, j}).second)
        throw std::invalid_argument("InteractionSet: duplicate pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }

  bool contains(int i, int j) const {
    return std::find(pairs.begin(), pairs.end(), std::make_pair(i, j)) != pairs.end();
  }
};

inline std::size_t max_pairs(int d) { return d < 2 ? 0 : static_cast<std::size_t>(d) * (d - 1) / 2; }

inline std::vector<std::pair<int, int>> all_pairs(int d) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) out.emplace_back(i, j);
  return out;
}

inline InteractionSet full_topology(int d) { return InteractionSet{d, all_pairs(d), 0}; }

inline InteractionSet empty_topology(int d) { return InteractionSet{d, {}, 0}; }

/// k distinct pairs drawn uniformly without replacement, then sorted.
inline InteractionSet build_random_topology(int d, std::size_t k, std::uint64_t seed) {
  const std::size_t cap = max_pairs(d);
  if (k > cap)
    throw std::invalid_argument("build_random_topology: k=" + std::to_string(k) + " exceeds the maximum " +
                                std::to_string(cap) + " for d=" + std::to_string(d));
  auto pool = all_pairs(d);
  Rng rng = stream(seed, "topology");
  // partial Fisher-Yates with an explicit index draw keeps the sample portable
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return InteractionSet{d, std::move(pool), seed};
}

}  // namespace ran
