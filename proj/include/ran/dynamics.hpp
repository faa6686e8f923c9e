// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Empirical tangent kernel and first-order influence of one gradient step.
//
//   K(x_o, x_u) = J(x_o) J(x_u)^T,   J = d z / d theta  (C x P)
//   regression:      dz(x_o)      ~ -eta K G,       G = dL/dz at x_u
//   classification:  dlog pi(x_o) ~ -eta A K G,     A = I - 1 pi(x_o)^T

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ran/anova.hpp"
#include "ran/deep.hpp"
#include "ran/loss.hpp"
#include "ran/mlp.hpp"
#include "ran/params.hpp"
#include "ran/train.hpp"

namespace ran {

/// Named set of parameter columns.
struct KernelChannel {
  std::string name;
  std::vector<ParamRange> ranges;
};

/// head, main_i per feature, pair_i_j per interaction.
inline std::vector<KernelChannel> kernel_channels(const AnovaModel& m) {
  std::vector<KernelChannel> out;
  const std::size_t h = m.head_offset();
  out.push_back({"head", {{h, m.num_params()}}});
  const auto off = m.unit_offsets();
  for (std::size_t i = 0; i < m.main_units.size(); ++i)
    out.push_back({"main_" + std::to_string(i), {{off[i], off[i] + m.main_units[i].param_count()}}});
  for (std::size_t k = 0; k < m.pair_units.size(); ++k) {
    const auto [i, j] = m.topology.pairs[k];
    const std::size_t b = off[m.main_units.size() + k];
    out.push_back({"pair_" + std::to_string(i) + "_" + std::to_string(j), {{b, b + m.pair_units[k].param_count()}}});
  }
  return out;
}

/// adapters, then one channel per block.
inline std::vector<KernelChannel> kernel_channels(const DeepRanStack& s) {
  std::vector<KernelChannel> out;
  const std::size_t P = s.num_params();
  const std::size_t out_begin = P - s.out_W.size() - s.out_b.size();
  out.push_back({"head", {{out_begin, P}}});
  out.push_back({"input", {{0, s.in_W.size() + s.in_b.size()}}});
  for (std::size_t l = 0; l < s.layers.size(); ++l)
    out.push_back({"block_" + std::to_string(l), {{s.block_offset(l), s.block_offset(l) + s.layers[l].param_count()}}});
  return out;
}

/// one channel per dense layer.
inline std::vector<KernelChannel> kernel_channels(const Mlp& m) {
  std::vector<KernelChannel> out;
  std::size_t o = 0;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    const std::size_t n = m.W[l].size() + m.b[l].size();
    out.push_back({"layer_" + std::to_string(l), {{o, o + n}}});
    o += n;
  }
  return out;
}

/// C x P row-major Jacobian of the logits.
template <Trainable M>
std::vector<double> output_param_grad(const M& model, std::span<const double> x) {
  const std::size_t C = model.output_dim(), P = model.num_params();
  typename M::Cache cache;
  model.forward_cache(x, cache);
  std::vector<double> J(C * P, 0.0), e(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    e.assign(C, 0.0);
    e[c] = 1.0;
    model.backward_cache(cache, e, std::span(J).subspan(c * P, P));
  }
  return J;
}

struct EntkMatrix {
  std::size_t C = 0;
  std::vector<double> total;  // C x C row-major
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;  // each C x C

  double at(std::size_t r, std::size_t c) const { return total[r * C + c]; }
};

inline std::vector<double> gram_block(std::span<const double> Jo, std::span<const double> Ju, std::size_t C,
                                      std::size_t P, std::span<const ParamRange> ranges) {
  std::vector<double> K(C * C, 0.0);
  for (std::size_t r = 0; r < C; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (const auto& rg : ranges)
        for (std::size_t p = rg.begin; p < rg.end; ++p) s += Jo[r * P + p] * Ju[c * P + p];
      K[r * C + c] = s;
    }
  return K;
}

inline EntkMatrix entk_from_jacobians(std::span<const double> Jo, std::span<const double> Ju, std::size_t C,
                                      std::size_t P, const std::vector<KernelChannel>& chans) {
  EntkMatrix K;
  K.C = C;
  const std::vector<ParamRange> all{{0, P}};
  K.total = gram_block(Jo, Ju, C, P, all);
  for (const auto& ch : chans) {
    K.channel_names.push_back(ch.name);
    K.channels.push_back(gram_block(Jo, Ju, C, P, ch.ranges));
  }
  return K;
}

template <Trainable M>
EntkMatrix entk(const M& model, std::span<const double> x_o, std::span<const double> x_u) {
  const auto Jo = output_param_grad(model, x_o);
  const auto Ju = output_param_grad(model, x_u);
  return entk_from_jacobians(Jo, Ju, model.output_dim(), model.num_params(), kernel_channels(model));
}

/// One training example: real targets for regression, a label for softmax_ce.
struct UpdateExample {
  std::vector<double> x;
  std::vector<double> y;
  int label = -1;
};

struct InfluenceRecord {
  std::vector<double> x_o;
  UpdateExample update;
  double eta = 0.0;
  std::vector<double> predicted;  // per output: dz (regression) or dlog pi (softmax_ce)
  std::vector<double> realized;   // after one plain gradient step on the update
  double discrepancy = 0.0;       // max_c |predicted - realized|
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channel_predicted;  // per channel, per output; sums to predicted
};

namespace detail {

template <Trainable M>
std::vector<double> readout(const M& model, std::span<const double> x, LossKind kind) {
  auto z = model.predict(x);
  if (kind != LossKind::SoftmaxCe) return z;
  std::vector<double> lp(z.size());
  log_softmax(z, lp);
  return lp;
}

// -eta * A K G, with A = I for regression.
inline std::vector<double> apply_influence(std::span<const double> K, std::span<const double> G,
                                           std::span<const double> pi, std::size_t C, double eta) {
  std::vector<double> dz(C, 0.0);
  for (std::size_t r = 0; r < C; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += K[r * C + c] * G[c];
    dz[r] = -eta * s;
  }
  if (pi.empty()) return dz;
  double mean = 0.0;
  for (std::size_t c = 0; c < C; ++c) mean += pi[c] * dz[c];
  for (double& v : dz) v -= mean;
  return dz;
}

}  // namespace detail

/// dL/dz at the update example.
template <Trainable M>
std::vector<double> output_loss_grad(const M& model, const UpdateExample& u, LossKind kind) {
  const auto z = model.predict(u.x);
  std::vector<double> G(z.size());
  example_loss(kind, z, u.y, u.label, G);
  return G;
}

template <Trainable M>
InfluenceRecord predict_influence(const M& model, std::span<const double> x_o, const UpdateExample& u, double eta,
                                  LossKind kind) {
  if (!(eta > 0.0)) throw std::invalid_argument("predict_influence: eta must be > 0");
  const std::size_t C = model.output_dim(), P = model.num_params();
  InfluenceRecord rec;
  rec.x_o.assign(x_o.begin(), x_o.end());
  rec.update = u;
  rec.eta = eta;

  const auto G = output_loss_grad(model, u, kind);
  std::vector<double> pi;
  if (kind == LossKind::SoftmaxCe) {
    const auto lp = detail::readout(model, x_o, kind);
    for (double v : lp) pi.push_back(std::exp(v));
  }
  const auto Jo = output_param_grad(model, x_o);
  const auto Ju = output_param_grad(model, u.x);
  const auto K = entk_from_jacobians(Jo, Ju, C, P, kernel_channels(model));
  rec.predicted = detail::apply_influence(K.total, G, pi, C, eta);
  rec.channel_names = K.channel_names;
  for (const auto& ch : K.channels) rec.channel_predicted.push_back(detail::apply_influence(ch, G, pi, C, eta));

  // realized change: theta <- theta - eta * J_u^T G
  auto theta = model.parameters();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) theta[p] -= eta * Ju[c * P + p] * G[c];
  M stepped = model;
  stepped.set_parameters(theta);
  const auto before = detail::readout(model, x_o, kind);
  const auto after = detail::readout(stepped, x_o, kind);
  rec.realized.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    rec.realized[c] = after[c] - before[c];
    rec.discrepancy = std::max(rec.discrepancy, std::abs(rec.realized[c] - rec.predicted[c]));
  }
  return rec;
}

/// Running sum of predicted influence on x_o, one entry per update; the
/// t-th update is applied to snapshots[t].
template <Trainable M>
std::vector<std::vector<double>> accumulated_influence(const std::vector<M>& snapshots,
                                                       const std::vector<UpdateExample>& updates,
                                                       std::span<const double> x_o, double eta, LossKind kind) {
  if (snapshots.size() != updates.size())
    throw std::invalid_argument("accumulated_influence: " + std::to_string(snapshots.size()) + " snapshots for " +
                                std::to_string(updates.size()) + " updates");
  std::vector<std::vector<double>> trace;
  std::vector<double> acc;
  for (std::size_t t = 0; t < updates.size(); ++t) {
    const auto rec = predict_influence(snapshots[t], x_o, updates[t], eta, kind);
    if (acc.empty()) acc.assign(rec.predicted.size(), 0.0);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += rec.predicted[c];
    trace.push_back(acc);
  }
  return trace;
}

}  // namespace ran
