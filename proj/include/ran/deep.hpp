// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Deep stack of gated residual blocks:
//
//   h_{l+1} = h_l + alpha_l * (Phi(W_l h_l) - h_l)
//
// Phi applies one gated 1D rational unit per feature. Affine adapters map
// the model input to the stack width and the stack output to C logits.
//
// Parameter order: input adapter (W row-major, b), then per block
// (W_l row-major, units in feature order, block gate), then output adapter.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ran/params.hpp"
#include "ran/rational.hpp"
#include "ran/rng.hpp"

namespace ran {

struct DeepBlock {
  std::vector<double> W;  // width x width, row-major
  std::vector<RationalUnit1D> units;
  double block_gate_logit = kDefaultGateLogit;

  double gate() const { return sigmoid(block_gate_logit); }
  std::size_t param_count() const {
    std::size_t n = W.size() + 1;
    for (const auto& u : units) n += u.param_count();
    return n;
  }
};

struct LayerState {
  std::vector<double> h;          // block input
  std::vector<double> pre;        // W h
  std::vector<double> phi;        // Phi(W h)
  std::vector<double> dphi;       // per-feature d Phi / d pre
  std::vector<double> unit_grads;  // concatenated d phi_i / d unit params
};

struct DeepForward {
  std::vector<double> hL;
  std::vector<LayerState> states;
};

struct DeepRanStack {
  int input_dim_ = 0;
  int width = 0;
  int C = 1;
  std::vector<double> in_W, in_b;    // width x input_dim, width
  std::vector<DeepBlock> layers;
  std::vector<double> out_W, out_b;  // C x width, C
  std::uint64_t seed = 0;

  struct Cache {
    std::vector<double> x;
    std::vector<double> h0;
    DeepForward fwd;
    std::vector<double> logits;
  };

  std::size_t input_dim() const { return static_cast<std::size_t>(input_dim_); }
  std::size_t output_dim() const { return static_cast<std::size_t>(C); }
  std::size_t depth() const { return layers.size(); }

  std::size_t num_params() const {
    std::size_t n = in_W.size() + in_b.size() + out_W.size() + out_b.size();
    for (const auto& b : layers) n += b.param_count();
    return n;
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(num_params());
    auto put = [&](const std::vector<double>& v) { p.insert(p.end(), v.begin(), v.end()); };
    put(in_W);
    put(in_b);
    for (const auto& b : layers) {
      put(b.W);
      for (const auto& u : b.units) {
        put(u.num_coeffs);
        put(u.den_coeffs);
        p.push_back(u.gate_logit);
      }
      p.push_back(b.block_gate_logit);
    }
    put(out_W);
    put(out_b);
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != num_params()) throw std::invalid_argument("DeepRanStack: parameter vector length mismatch");
    std::size_t o = 0;
    auto take = [&](std::vector<double>& v) {
      for (auto& x : v) x = p[o++];
    };
    take(in_W);
    take(in_b);
    for (auto& b : layers) {
      take(b.W);
      for (auto& u : b.units) {
        take(u.num_coeffs);
        take(u.den_coeffs);
        u.gate_logit = p[o++];
      }
      b.block_gate_logit = p[o++];
    }
    take(out_W);
    take(out_b);
  }

  std::vector<ParamKind> parameter_kinds() const {
    std::vector<ParamKind> k;
    k.reserve(num_params());
    k.insert(k.end(), in_W.size() + in_b.size(), ParamKind::Dense);
    for (const auto& b : layers) {
      k.insert(k.end(), b.W.size(), ParamKind::Dense);
      for (const auto& u : b.units) {
        k.insert(k.end(), u.num_coeffs.size(), ParamKind::Numerator);
        k.insert(k.end(), u.den_coeffs.size(), ParamKind::Denominator);
        k.push_back(ParamKind::Gate);
      }
      k.push_back(ParamKind::Gate);
    }
    k.insert(k.end(), out_W.size() + out_b.size(), ParamKind::Head);
    return k;
  }

  std::vector<ParamRange> lasso_groups() const { return {}; }

  /// Offset of block l's first parameter.
  std::size_t block_offset(std::size_t l) const {
    std::size_t o = in_W.size() + in_b.size();
    for (std::size_t i = 0; i < l; ++i) o += layers[i].param_count();
    return o;
  }

  void forward_cache(std::span<const double> x, Cache& cache) const;
  void backward_cache(const Cache& cache, std::span<const double> upstream, std::span<double> grad) const;

  std::vector<double> predict(std::span<const double> x) const {
    Cache c;
    forward_cache(x, c);
    return c.logits;
  }
};

inline void affine(std::span<const double> W, std::span<const double> b, std::span<const double> x,
                   std::vector<double>& out) {
  const std::size_t rows = b.size();
  const std::size_t cols = x.size();
  out.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < cols; ++c) s += W[r * cols + c] * x[c];
    out[r] = s;
  }
}

/// Runs the block stack on a width-vector. Throws naming the layer on a
/// non-finite intermediate.
inline DeepForward forward_deep(const DeepRanStack& stack, std::span<const double> h0) {
  const std::size_t w = static_cast<std::size_t>(stack.width);
  if (h0.size() != w) throw std::invalid_argument("forward_deep: state has wrong width");
  DeepForward out;
  out.states.resize(stack.layers.size());
  std::vector<double> h(h0.begin(), h0.end());
  const std::vector<double> zero_b(w, 0.0);
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const auto& blk = stack.layers[l];
    auto& st = out.states[l];
    st.h = h;
    affine(blk.W, zero_b, h, st.pre);
    st.phi.resize(w);
    st.dphi.resize(w);
    std::size_t ug = 0;
    for (const auto& u : blk.units) ug += u.param_count();
    st.unit_grads.resize(ug);
    std::size_t o = 0;
    for (std::size_t i = 0; i < w; ++i) {
      const auto& u = blk.units[i];
      if (!std::isfinite(st.pre[i]))
        throw std::runtime_error("forward_deep: non-finite pre-activation in layer " + std::to_string(l));
      st.phi[i] = eval_gated_1d(u, st.pre[i], std::span(st.unit_grads).subspan(o, u.param_count()), st.dphi[i]);
      o += u.param_count();
    }
    const double a = blk.gate();
    for (std::size_t i = 0; i < w; ++i) {
      h[i] = h[i] + a * (st.phi[i] - h[i]);
      if (!std::isfinite(h[i])) throw std::runtime_error("forward_deep: non-finite state in layer " + std::to_string(l));
    }
  }
  out.hL = std::move(h);
  return out;
}

/// Back-propagates g_L = dL/dh_L through the blocks. Accumulates block
/// parameter partials into grad (offset per DeepRanStack::block_offset) when
/// grad is non-empty; returns dL/dh_0.
inline std::vector<double> backward_deep(const DeepRanStack& stack, const DeepForward& fwd,
                                         std::span<const double> gL, std::span<double> grad = {}) {
  const std::size_t w = static_cast<std::size_t>(stack.width);
  std::vector<double> g(gL.begin(), gL.end());
  std::vector<double> gprev(w);
  for (std::size_t l = stack.layers.size(); l-- > 0;) {
    const auto& blk = stack.layers[l];
    const auto& st = fwd.states[l];
    const double a = blk.gate();
    // s_i = alpha * dphi_i * g_i is the upstream at the pre-activation
    std::vector<double> s(w);
    for (std::size_t i = 0; i < w; ++i) s[i] = a * st.dphi[i] * g[i];
    for (std::size_t c = 0; c < w; ++c) {
      double acc = (1.0 - a) * g[c];
      for (std::size_t r = 0; r < w; ++r) acc += blk.W[r * w + c] * s[r];
      gprev[c] = acc;
    }
    if (!grad.empty()) {
      std::size_t o = stack.block_offset(l);
      for (std::size_t r = 0; r < w; ++r)
        for (std::size_t c = 0; c < w; ++c) grad[o + r * w + c] += s[r] * st.h[c];
      o += blk.W.size();
      std::size_t ug = 0;
      for (std::size_t i = 0; i < w; ++i) {
        const auto& u = blk.units[i];
        const double gi = a * g[i];
        for (std::size_t k = 0; k < u.param_count(); ++k) grad[o + k] += gi * st.unit_grads[ug + k];
        o += u.param_count();
        ug += u.param_count();
      }
      double ggate = 0.0;
      for (std::size_t i = 0; i < w; ++i) ggate += g[i] * (st.phi[i] - st.h[i]);
      grad[o] += a * (1.0 - a) * ggate;
    }
    g.swap(gprev);
  }
  return g;
}

inline void DeepRanStack::forward_cache(std::span<const double> x, Cache& cache) const {
  if (x.size() != input_dim()) throw std::invalid_argument("DeepRanStack: input dimension mismatch");
  cache.x.assign(x.begin(), x.end());
  affine(in_W, in_b, x, cache.h0);
  cache.fwd = forward_deep(*this, cache.h0);
  affine(out_W, out_b, cache.fwd.hL, cache.logits);
}

inline void DeepRanStack::backward_cache(const Cache& cache, std::span<const double> upstream,
                                         std::span<double> grad) const {
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t out_off = num_params() - out_W.size() - out_b.size();
  std::vector<double> gL(w, 0.0);
  for (std::size_t c = 0; c < static_cast<std::size_t>(C); ++c) {
    const double up = upstream[c];
    for (std::size_t i = 0; i < w; ++i) {
      grad[out_off + c * w + i] += up * cache.fwd.hL[i];
      gL[i] += up * out_W[c * w + i];
    }
    grad[out_off + out_W.size() + c] += up;
  }
  const auto g0 = backward_deep(*this, cache.fwd, gL, grad);
  const std::size_t din = input_dim();
  for (std::size_t r = 0; r < w; ++r) {
    for (std::size_t c = 0; c < din; ++c) grad[r * din + c] += g0[r] * cache.x[c];
    grad[in_W.size() + r] += g0[r];
  }
}

/// Exact input Jacobian d h_{l+1} / d h_l of one block at a cached state.
inline std::vector<double> block_jacobian(const DeepBlock& blk, const LayerState& st, std::size_t w) {
  const double a = blk.gate();
  std::vector<double> J(w * w);
  for (std::size_t r = 0; r < w; ++r)
    for (std::size_t c = 0; c < w; ++c) J[r * w + c] = a * st.dphi[r] * blk.W[r * w + c] + (r == c ? 1.0 - a : 0.0);
  return J;
}

/// Exact d h_L / d h_0 at h0, row-major width x width.
inline std::vector<double> stack_jacobian(const DeepRanStack& stack, std::span<const double> h0) {
  const std::size_t w = static_cast<std::size_t>(stack.width);
  const auto fwd = forward_deep(stack, h0);
  std::vector<double> J(w * w, 0.0);
  for (std::size_t i = 0; i < w; ++i) J[i * w + i] = 1.0;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const auto Jl = block_jacobian(stack.layers[l], fwd.states[l], w);
    std::vector<double> next(w * w, 0.0);
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t k = 0; k < w; ++k) {
        const double v = Jl[r * w + k];
        if (v == 0.0) continue;
        for (std::size_t c = 0; c < w; ++c) next[r * w + c] += v * J[k * w + c];
      }
    J.swap(next);
  }
  return J;
}

struct DeepOptions {
  int degree_num = 3;
  int degree_den = 2;
  double eps = kDefaultEps;
  double block_gate_logit = kDefaultGateLogit;
  double weight_noise = 0.1;  // W_l = I + N(0, (weight_noise^2) / width)
};

inline DeepRanStack make_deep_stack(int input_dim, int width, int depth, int C, std::uint64_t seed,
                                    const DeepOptions& opt = {}) {
  if (input_dim < 1 || width < 1 || depth < 0 || C < 1) throw std::invalid_argument("make_deep_stack: invalid shape");
  DeepRanStack s;
  s.input_dim_ = input_dim;
  s.width = width;
  s.C = C;
  s.seed = seed;
  Rng rng = stream(seed, "init");
  const auto w = static_cast<std::size_t>(width);
  s.in_W.resize(w * static_cast<std::size_t>(input_dim));
  for (auto& v : s.in_W) v = normal(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(input_dim)));
  s.in_b.assign(w, 0.0);
  s.layers.resize(static_cast<std::size_t>(depth));
  const double sd = opt.weight_noise / std::sqrt(static_cast<double>(width));
  for (auto& blk : s.layers) {
    blk.W.resize(w * w);
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t c = 0; c < w; ++c) blk.W[r * w + c] = (r == c ? 1.0 : 0.0) + normal(rng, 0.0, sd);
    blk.units.assign(w, RationalUnit1D::identity(opt.degree_num, opt.degree_den, opt.eps));
    for (auto& u : blk.units) init_near_identity(u, rng);
    blk.block_gate_logit = opt.block_gate_logit;
  }
  s.out_W.resize(static_cast<std::size_t>(C) * w);
  for (auto& v : s.out_W) v = normal(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(width)));
  s.out_b.assign(static_cast<std::size_t>(C), 0.0);
  return s;
}

inline void set_block_gates(DeepRanStack& s, double logit_value) {
  for (auto& b : s.layers) b.block_gate_logit = logit_value;
}

}  // namespace ran
