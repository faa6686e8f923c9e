// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Shallow functional-ANOVA model:
//
//   phi(x) = [r_1(x_1), ..., r_d(x_d), r_ij(x_i, x_j) for (i, j) in S]
//   z(x)   = W phi(x) + b
//
// Canonical parameter order: main units in index order (numerator,
// denominator, gate), pair units in S order, head W row-major, then b.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ran/params.hpp"
#include "ran/rational.hpp"
#include "ran/rng.hpp"
#include "ran/topology.hpp"

namespace ran {

struct AnovaOptions {
  int degree_num = 3;
  int degree_den = 2;
  double eps = kDefaultEps;
  std::vector<Monomial> num_basis = default_num_basis_2d();
  std::vector<Monomial> den_basis = default_den_basis_2d();
};

struct AnovaModel {
  int d = 0;
  int C = 1;
  std::vector<RationalUnit1D> main_units;
  InteractionSet topology;
  std::vector<RationalUnit2D> pair_units;
  std::vector<double> head_W;  // C x (d + K), row-major
  std::vector<double> head_b;  // C
  std::uint64_t seed = 0;
  // Per-dimension box the model was fitted on; used by post-hoc analysis.
  std::vector<std::pair<double, double>> domain;

  struct Cache {
    std::vector<double> features;
    std::vector<double> logits;
    std::vector<double> unit_grads;  // d feature / d unit params, canonical offsets
  };

  std::size_t feature_count() const { return main_units.size() + pair_units.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(d); }
  std::size_t output_dim() const { return static_cast<std::size_t>(C); }

  std::size_t unit_param_count() const {
    std::size_t n = 0;
    for (const auto& u : main_units) n += u.param_count();
    for (const auto& u : pair_units) n += u.param_count();
    return n;
  }
  std::size_t head_offset() const { return unit_param_count(); }
  std::size_t num_params() const { return unit_param_count() + head_W.size() + head_b.size(); }

  /// Offset of feature f's unit inside the flat parameter vector.
  std::vector<std::size_t> unit_offsets() const {
    std::vector<std::size_t> off;
    off.reserve(feature_count());
    std::size_t o = 0;
    for (const auto& u : main_units) {
      off.push_back(o);
      o += u.param_count();
    }
    for (const auto& u : pair_units) {
      off.push_back(o);
      o += u.param_count();
    }
    return off;
  }

  void validate() const {
    if (d < 0 || C < 1) throw std::invalid_argument("AnovaModel: invalid dimensions");
    if (main_units.size() != static_cast<std::size_t>(d)) throw std::invalid_argument("AnovaModel: need d main units");
    if (topology.d != d) throw std::invalid_argument("AnovaModel: topology dimension mismatch");
    topology.validate();
    if (pair_units.size() != topology.size()) throw std::invalid_argument("AnovaModel: one pair unit per interaction");
    if (head_W.size() != static_cast<std::size_t>(C) * feature_count() || head_b.size() != static_cast<std::size_t>(C))
      throw std::invalid_argument("AnovaModel: head shape mismatch");
    for (const auto& u : main_units) u.validate();
    for (const auto& u : pair_units) u.validate();
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(d))
      throw std::invalid_argument("AnovaModel: input has dimension " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(d));
  }

  void forward_cache(std::span<const double> x, Cache& cache) const {
    check_input(x);
    const std::size_t F = feature_count();
    cache.features.resize(F);
    cache.unit_grads.resize(unit_param_count());
    std::size_t o = 0;
    for (int i = 0; i < d; ++i) {
      const auto& u = main_units[static_cast<std::size_t>(i)];
      double din = 0.0;
      cache.features[static_cast<std::size_t>(i)] =
          eval_gated_1d(u, x[static_cast<std::size_t>(i)], std::span(cache.unit_grads).subspan(o, u.param_count()), din);
      o += u.param_count();
    }
    for (std::size_t k = 0; k < pair_units.size(); ++k) {
      const auto& u = pair_units[k];
      const auto [i, j] = topology.pairs[k];
      std::array<double, 2> din{};
      cache.features[static_cast<std::size_t>(d) + k] =
          eval_gated_2d(u, x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)],
                        std::span(cache.unit_grads).subspan(o, u.param_count()), din);
      o += u.param_count();
    }
    cache.logits.assign(static_cast<std::size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) {
      double z = head_b[static_cast<std::size_t>(c)];
      const double* w = head_W.data() + static_cast<std::size_t>(c) * F;
      for (std::size_t f = 0; f < F; ++f) z += w[f] * cache.features[f];
      cache.logits[static_cast<std::size_t>(c)] = z;
    }
  }

  /// Accumulates d<upstream, z>/d theta into grad.
  void backward_cache(const Cache& cache, std::span<const double> upstream, std::span<double> grad) const {
    const std::size_t F = feature_count();
    const std::size_t h = head_offset();
    std::vector<double> g_feat(F, 0.0);
    for (int c = 0; c < C; ++c) {
      const double up = upstream[static_cast<std::size_t>(c)];
      if (up == 0.0) continue;
      const double* w = head_W.data() + static_cast<std::size_t>(c) * F;
      double* gw = grad.data() + h + static_cast<std::size_t>(c) * F;
      for (std::size_t f = 0; f < F; ++f) {
        gw[f] += up * cache.features[f];
        g_feat[f] += up * w[f];
      }
      grad[h + head_W.size() + static_cast<std::size_t>(c)] += up;
    }
    std::size_t o = 0;
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t n = f < main_units.size() ? main_units[f].param_count() : pair_units[f - main_units.size()].param_count();
      const double gf = g_feat[f];
      if (gf != 0.0)
        for (std::size_t k = 0; k < n; ++k) grad[o + k] += gf * cache.unit_grads[o + k];
      o += n;
    }
  }

  std::vector<double> predict(std::span<const double> x) const {
    Cache cache;
    forward_cache(x, cache);
    return cache.logits;
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(num_params());
    for (const auto& u : main_units) {
      p.insert(p.end(), u.num_coeffs.begin(), u.num_coeffs.end());
      p.insert(p.end(), u.den_coeffs.begin(), u.den_coeffs.end());
      p.push_back(u.gate_logit);
    }
    for (const auto& u : pair_units) {
      p.insert(p.end(), u.num_coeffs.begin(), u.num_coeffs.end());
      p.insert(p.end(), u.den_coeffs.begin(), u.den_coeffs.end());
      p.push_back(u.gate_logit);
    }
    p.insert(p.end(), head_W.begin(), head_W.end());
    p.insert(p.end(), head_b.begin(), head_b.end());
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != num_params()) throw std::invalid_argument("AnovaModel: parameter vector length mismatch");
    std::size_t o = 0;
    auto take = [&](std::vector<double>& dst) {
      for (auto& v : dst) v = p[o++];
    };
    for (auto& u : main_units) {
      take(u.num_coeffs);
      take(u.den_coeffs);
      u.gate_logit = p[o++];
    }
    for (auto& u : pair_units) {
      take(u.num_coeffs);
      take(u.den_coeffs);
      u.gate_logit = p[o++];
    }
    take(head_W);
    take(head_b);
  }

  std::vector<ParamKind> parameter_kinds() const {
    std::vector<ParamKind> k;
    k.reserve(num_params());
    auto unit = [&](std::size_t nn, std::size_t nd) {
      k.insert(k.end(), nn, ParamKind::Numerator);
      k.insert(k.end(), nd, ParamKind::Denominator);
      k.push_back(ParamKind::Gate);
    };
    for (const auto& u : main_units) unit(u.num_coeffs.size(), u.den_coeffs.size());
    for (const auto& u : pair_units) unit(u.num_coeffs.size(), u.den_coeffs.size());
    k.insert(k.end(), head_W.size() + head_b.size(), ParamKind::Head);
    return k;
  }

  /// Coefficient ranges (gate excluded) of each pair unit, for group lasso.
  std::vector<ParamRange> lasso_groups() const {
    std::vector<ParamRange> out;
    const auto off = unit_offsets();
    for (std::size_t k = 0; k < pair_units.size(); ++k) {
      const std::size_t b = off[main_units.size() + k];
      out.push_back({b, b + pair_units[k].coeff_count()});
    }
    return out;
  }

  /// Minimum denominator over every unit at a given input; >= 1 + eps always.
  double min_denominator(std::span<const double> x) const {
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d; ++i) lo = std::min(lo, denominator_1d(main_units[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)]));
    for (std::size_t k = 0; k < pair_units.size(); ++k) {
      const auto [i, j] = topology.pairs[k];
      lo = std::min(lo, denominator_2d(pair_units[k], x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)]));
    }
    return lo;
  }
};

struct AnovaForward {
  std::vector<double> logits;
  std::vector<double> features;
};

inline AnovaForward forward(const AnovaModel& model, std::span<const double> x) {
  AnovaModel::Cache cache;
  model.forward_cache(x, cache);
  for (double z : cache.logits)
    if (!std::isfinite(z)) throw std::runtime_error("AnovaModel: non-finite logit");
  return {std::move(cache.logits), std::move(cache.features)};
}

inline ModelGradients backward(const AnovaModel& model, std::span<const double> x, std::span<const double> upstream) {
  if (upstream.size() != static_cast<std::size_t>(model.C)) throw std::invalid_argument("backward: upstream length mismatch");
  AnovaModel::Cache cache;
  model.forward_cache(x, cache);
  ModelGradients g;
  g.flat.assign(model.num_params(), 0.0);
  g.kinds = model.parameter_kinds();
  model.backward_cache(cache, upstream, g.flat);
  return g;
}

/// d(m + n + 2) + k(t + s + 1), plus c(d + k) + c for the head.
inline long long param_count(long long d, long long m, long long n, long long k, long long t, long long s,
                             bool include_head, long long c) {
  long long total = d * (m + n + 2) + k * (t + s + 1);
  if (include_head) total += c * (d + k) + c;
  return total;
}

inline long long param_count(const AnovaModel& model, bool include_head = true) {
  const long long d = model.d;
  const long long k = static_cast<long long>(model.pair_units.size());
  const long long m = d > 0 ? model.main_units[0].degree_num() : 0;
  const long long n = d > 0 ? model.main_units[0].degree_den() : 0;
  const long long t = k > 0 ? static_cast<long long>(model.pair_units[0].num_coeffs.size()) : 0;
  const long long s = k > 0 ? static_cast<long long>(model.pair_units[0].den_coeffs.size()) : 0;
  return param_count(d, m, n, k, t, s, include_head, model.C);
}

/// Width-based budgeting estimate (18 + C)N + (26 + C)K + C + 2 used for
/// matching vision baselines. Advisory only; not used for our own counting.
inline long long estimate_params_kanbefair(long long N, long long K, long long C) {
  return (18 + C) * N + (26 + C) * K + C + 2;
}

/// Builds a model with identity-structured units and a zero head.
inline AnovaModel make_anova_model(int d, int C, InteractionSet topology, const AnovaOptions& opt = {}) {
  AnovaModel m;
  m.d = d;
  m.C = C;
  topology.d = d;
  m.topology = std::move(topology);
  m.main_units.assign(static_cast<std::size_t>(d), RationalUnit1D::identity(opt.degree_num, opt.degree_den, opt.eps));
  RationalUnit2D pair;
  pair.num_basis = opt.num_basis;
  pair.den_basis = opt.den_basis;
  pair.num_coeffs.assign(opt.num_basis.size(), 0.0);
  pair.den_coeffs.assign(opt.den_basis.size(), 0.0);
  pair.eps = opt.eps;
  for (std::size_t t = 0; t < pair.num_basis.size(); ++t)
    if (pair.num_basis[t] == Monomial{1, 0} || pair.num_basis[t] == Monomial{0, 1}) pair.num_coeffs[t] = 0.5;
  m.pair_units.assign(m.topology.size(), pair);
  m.head_W.assign(static_cast<std::size_t>(C) * m.feature_count(), 0.0);
  m.head_b.assign(static_cast<std::size_t>(C), 0.0);
  m.validate();
  return m;
}

/// Near-identity units, gates at sigmoid(-4), head ~ N(0, 1/(d + K)), zero bias.
inline void init_identity(AnovaModel& model, std::uint64_t seed) {
  model.seed = seed;
  Rng rng = stream(seed, "init");
  for (auto& u : model.main_units) init_near_identity(u, rng);
  for (auto& u : model.pair_units) init_near_identity(u, rng);
  const double sd = model.feature_count() > 0 ? 1.0 / std::sqrt(static_cast<double>(model.feature_count())) : 0.0;
  for (auto& w : model.head_W) w = normal(rng, 0.0, sd);
  for (auto& b : model.head_b) b = 0.0;
}

}  // namespace ran
