// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ran/dataset.hpp"
#include "ran/loss.hpp"
#include "ran/optim.hpp"
#include "ran/params.hpp"
#include "ran/rng.hpp"

namespace ran {

template <class M>
concept Trainable = requires(M m, const M cm, std::span<const double> x, std::span<const double> up,
                             std::span<double> g, typename M::Cache cache) {
  { cm.forward_cache(x, cache) };
  { cm.backward_cache(cache, up, g) };
  { cm.parameters() } -> std::convertible_to<std::vector<double>>;
  { m.set_parameters(x) };
  { cm.parameter_kinds() } -> std::convertible_to<std::vector<ParamKind>>;
  { cm.lasso_groups() } -> std::convertible_to<std::vector<ParamRange>>;
  { cm.num_params() } -> std::convertible_to<std::size_t>;
  { cm.input_dim() } -> std::convertible_to<std::size_t>;
  { cm.output_dim() } -> std::convertible_to<std::size_t>;
};

struct TrainConfig {
  LossKind loss = LossKind::Mse;
  double lr_main = 1e-2;
  double lr_den_gate_scale = 0.1;
  double weight_decay_den = 1e-4;
  double group_lasso_lambda = 0.0;
  std::size_t batch_size = 0;  // 0 or >= N means full batch
  int epochs = 100;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_fraction = 0.2;  // used only when no validation set is supplied

  void validate() const {
    if (!(lr_main > 0.0)) throw std::invalid_argument("TrainConfig: lr_main must be > 0");
    if (!(lr_den_gate_scale > 0.0 && lr_den_gate_scale <= 1.0))
      throw std::invalid_argument("TrainConfig: lr_den_gate_scale must be in (0, 1]");
    if (!(weight_decay_den >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay_den must be >= 0");
    if (!(group_lasso_lambda >= 0.0)) throw std::invalid_argument("TrainConfig: group_lasso_lambda must be >= 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("TrainConfig: val_fraction must be in [0, 1)");
  }

  AdamConfig adam() const { return {lr_main, lr_den_gate_scale, weight_decay_den, beta1, beta2, adam_eps}; }
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, mean over the epoch's batches
  std::vector<double> val_loss;    // per epoch, after the epoch's updates
  std::vector<double> grad_norm;   // per epoch, mean over batches
  double final_train_loss = 0.0;   // at the retained checkpoint
  double final_val_loss = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
  long long skipped_steps = 0;
  double wall_ms = 0.0;
  bool diverged = false;
};

/// Mean loss over rows idx of data, accumulating the mean gradient into grad
/// when it is non-empty. Returns NaN instead of throwing on a non-finite forward.
template <Trainable M>
double batch_loss_grad(const M& model, const Dataset& data, std::span<const std::size_t> idx, LossKind kind,
                       std::span<double> grad) {
  if (idx.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  if (data.d != model.input_dim()) throw std::invalid_argument("loss_and_grad: dataset dimension mismatch");
  if (kind == LossKind::SoftmaxCe && !data.classification())
    throw std::invalid_argument("loss_and_grad: softmax_ce needs class labels");
  if (kind != LossKind::SoftmaxCe && data.classification())
    throw std::invalid_argument("loss_and_grad: regression loss needs real targets");
  const std::size_t C = model.output_dim();
  typename M::Cache cache;
  std::vector<double> dz(C);
  const std::vector<double> none;
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  double total = 0.0;
  for (std::size_t n : idx) {
    try {
      model.forward_cache(data.x(n), cache);
    } catch (const std::runtime_error&) {
      return std::numeric_limits<double>::quiet_NaN();
    } catch (const std::domain_error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    const int label = data.classification() ? data.labels[n] : -1;
    const auto target = data.classification() ? std::span<const double>(none) : data.y(n);
    total += example_loss(kind, cache.logits, target, label, dz);
    if (!grad.empty()) {
      for (double& v : dz) v *= inv_n;
      model.backward_cache(cache, dz, grad);
    }
  }
  return total * inv_n;
}

/// Mean loss and mean per-example gradient over the batch.
template <Trainable M>
std::pair<double, ModelGradients> loss_and_grad(const M& model, const Dataset& batch, LossKind kind) {
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  ModelGradients g;
  g.flat.assign(model.num_params(), 0.0);
  g.kinds = model.parameter_kinds();
  const double loss = batch_loss_grad(model, batch, idx, kind, g.flat);
  return {loss, std::move(g)};
}

template <Trainable M>
double evaluate_loss(const M& model, const Dataset& data, LossKind kind) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return batch_loss_grad(model, data, idx, kind, {});
}

/// Mean squared error over all outputs.
template <Trainable M>
double mse(const M& model, const Dataset& data) {
  return evaluate_loss(model, data, LossKind::Mse);
}

/// lambda * sum_g ||theta_g||_2 over the model's lasso groups. When grad is
/// non-empty the subgradient (0 at the origin) is added into it.
inline double group_lasso_penalty(std::span<const double> params, std::span<const ParamRange> groups, double lambda,
                                  std::span<double> grad = {}) {
  if (lambda < 0.0) throw std::invalid_argument("group_lasso_penalty: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  double pen = 0.0;
  for (const auto& g : groups) {
    double ss = 0.0;
    for (std::size_t i = g.begin; i < g.end; ++i) ss += params[i] * params[i];
    const double norm = std::sqrt(ss);
    pen += norm;
    if (!grad.empty() && norm > 0.0)
      for (std::size_t i = g.begin; i < g.end; ++i) grad[i] += lambda * params[i] / norm;
  }
  return lambda * pen;
}

template <Trainable M>
double group_lasso_penalty(const M& model, double lambda, std::span<double> grad = {}) {
  const auto p = model.parameters();
  const auto groups = model.lasso_groups();
  return group_lasso_penalty(p, groups, lambda, grad);
}

template <class M>
using StepHook = std::function<void(const M&)>;

/// Seeded Adam training. Uses `val` for checkpoint selection when given,
/// otherwise holds out cfg.val_fraction of `data`. The model ends at the
/// best-validation checkpoint.
template <Trainable M>
TrainReport train(M& model, const Dataset& data, const TrainConfig& cfg, const Dataset* val = nullptr,
                  const StepHook<M>& after_step = {}) {
  cfg.validate();
  data.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Dataset train_part, val_part;
  if (val != nullptr) {
    train_part = data;
    val_part = *val;
  } else if (cfg.val_fraction > 0.0 && data.size() >= 5) {
    std::tie(train_part, val_part) = split_dataset(data, cfg.val_fraction, cfg.seed);
  } else {
    train_part = data;
  }
  const bool has_val = val_part.size() > 0;

  const std::size_t N = train_part.size();
  const std::size_t bs = (cfg.batch_size == 0 || cfg.batch_size >= N) ? N : cfg.batch_size;
  const auto kinds = model.parameter_kinds();
  const auto groups = model.lasso_groups();
  const AdamConfig acfg = cfg.adam();
  AdamState state(model.num_params());
  Rng shuffle_rng = stream(cfg.seed, "shuffle");

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> params = model.parameters();
  std::vector<double> grad(params.size());
  std::vector<double> best = params;
  double best_score = std::numeric_limits<double>::infinity();

  TrainReport rep;
  int bad_in_a_row = 0;
  for (int epoch = 0; epoch < cfg.epochs && !rep.diverged; ++epoch) {
    if (bs < N)
      for (std::size_t i = N; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(shuffle_rng)]);
      }
    double loss_sum = 0.0, gn_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < N; start += bs) {
      const std::size_t stop = std::min(N, start + bs);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = batch_loss_grad(model, train_part, idx, cfg.loss, grad);
      if (cfg.group_lasso_lambda > 0.0) loss += group_lasso_penalty(params, groups, cfg.group_lasso_lambda, grad);
      double gn = 0.0;
      for (double g : grad) gn += g * g;
      gn = std::sqrt(gn);
      const bool ok = std::isfinite(loss) && adam_step(params, grad, kinds, state, acfg);
      if (!ok) {
        if (++bad_in_a_row >= 2) {
          rep.diverged = true;
          break;
        }
        continue;
      }
      bad_in_a_row = 0;
      model.set_parameters(params);
      if (after_step) after_step(model);
      loss_sum += loss * static_cast<double>(idx.size());
      gn_sum += gn;
      ++batches;
    }
    rep.epochs_run = epoch + 1;
    const double tl = batches > 0 ? loss_sum / static_cast<double>(N) : std::numeric_limits<double>::quiet_NaN();
    rep.train_loss.push_back(tl);
    rep.grad_norm.push_back(batches > 0 ? gn_sum / static_cast<double>(batches) : 0.0);
    const double vl = has_val ? evaluate_loss(model, val_part, cfg.loss) : tl;
    rep.val_loss.push_back(vl);
    if (std::isfinite(vl) && vl < best_score) {
      best_score = vl;
      best = params;
      rep.best_epoch = epoch;
    }
  }
  rep.skipped_steps = state.skipped;
  model.set_parameters(best);
  rep.final_train_loss = evaluate_loss(model, train_part, cfg.loss);
  rep.final_val_loss = has_val ? evaluate_loss(model, val_part, cfg.loss) : rep.final_train_loss;
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace ran
