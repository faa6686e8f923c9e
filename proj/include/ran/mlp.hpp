// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Dense ReLU baseline, trainable through the same Adam loop.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ran/params.hpp"
#include "ran/rng.hpp"

namespace ran {

struct Mlp {
  std::vector<int> widths;  // input, hidden..., output
  std::vector<std::vector<double>> W;  // layer l: widths[l+1] x widths[l], row-major
  std::vector<std::vector<double>> b;
  std::uint64_t seed = 0;

  struct Cache {
    std::vector<std::vector<double>> act;  // act[0] = input, act[l+1] = output of layer l
    std::vector<double> logits;
  };

  std::size_t input_dim() const { return static_cast<std::size_t>(widths.front()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(widths.back()); }
  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W.size(); ++l) n += W[l].size() + b[l].size();
    return n;
  }

  void forward_cache(std::span<const double> x, Cache& c) const {
    if (x.size() != input_dim()) throw std::invalid_argument("Mlp: input dimension mismatch");
    c.act.resize(W.size() + 1);
    c.act[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < W.size(); ++l) {
      const std::size_t in = static_cast<std::size_t>(widths[l]), out = static_cast<std::size_t>(widths[l + 1]);
      auto& y = c.act[l + 1];
      y.assign(out, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        double s = b[l][r];
        for (std::size_t k = 0; k < in; ++k) s += W[l][r * in + k] * c.act[l][k];
        y[r] = (l + 1 < W.size()) ? std::max(s, 0.0) : s;
      }
    }
    c.logits = c.act.back();
  }

  void backward_cache(const Cache& c, std::span<const double> upstream, std::span<double> grad) const {
    std::vector<std::size_t> off(W.size());
    std::size_t o = 0;
    for (std::size_t l = 0; l < W.size(); ++l) {
      off[l] = o;
      o += W[l].size() + b[l].size();
    }
    std::vector<double> g(upstream.begin(), upstream.end());
    for (std::size_t l = W.size(); l-- > 0;) {
      const std::size_t in = static_cast<std::size_t>(widths[l]), out = static_cast<std::size_t>(widths[l + 1]);
      if (l + 1 < W.size())
        for (std::size_t r = 0; r < out; ++r)
          if (c.act[l + 1][r] <= 0.0) g[r] = 0.0;
      std::vector<double> gin(in, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        if (g[r] == 0.0) continue;
        for (std::size_t k = 0; k < in; ++k) {
          grad[off[l] + r * in + k] += g[r] * c.act[l][k];
          gin[k] += g[r] * W[l][r * in + k];
        }
        grad[off[l] + W[l].size() + r] += g[r];
      }
      g.swap(gin);
    }
  }

  std::vector<double> predict(std::span<const double> x) const {
    Cache c;
    forward_cache(x, c);
    return c.act.back();
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    for (std::size_t l = 0; l < W.size(); ++l) {
      p.insert(p.end(), W[l].begin(), W[l].end());
      p.insert(p.end(), b[l].begin(), b[l].end());
    }
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != num_params()) throw std::invalid_argument("Mlp: parameter vector length mismatch");
    std::size_t o = 0;
    for (std::size_t l = 0; l < W.size(); ++l) {
      for (auto& v : W[l]) v = p[o++];
      for (auto& v : b[l]) v = p[o++];
    }
  }

  std::vector<ParamKind> parameter_kinds() const { return std::vector<ParamKind>(num_params(), ParamKind::Dense); }
  std::vector<ParamRange> lasso_groups() const { return {}; }
};

inline std::size_t mlp_param_count(const std::vector<int>& widths) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    n += static_cast<std::size_t>(widths[l]) * widths[l + 1] + widths[l + 1];
  return n;
}

/// He-normal weights, zero biases.
inline Mlp make_mlp(std::vector<int> widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need input and output widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("make_mlp: widths must be >= 1");
  Mlp m;
  m.widths = std::move(widths);
  m.seed = seed;
  Rng rng = stream(seed, "init");
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    const std::size_t in = static_cast<std::size_t>(m.widths[l]), out = static_cast<std::size_t>(m.widths[l + 1]);
    m.W.emplace_back(in * out);
    for (auto& v : m.W.back()) v = normal(rng, 0.0, std::sqrt(2.0 / static_cast<double>(in)));
    m.b.emplace_back(out, 0.0);
  }
  return m;
}

}  // namespace ran
