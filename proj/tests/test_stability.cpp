// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ran/stability.hpp"

using namespace ran;

namespace {

RationalUnit1D random_unit(Rng& rng, int m, int n, double scale) {
  auto u = RationalUnit1D::identity(m, n);
  for (auto& a : u.num_coeffs) a = normal(rng, 0.0, scale);
  for (auto& b : u.den_coeffs) b = normal(rng, 0.0, scale);
  u.gate_logit = normal(rng, 0.0, 2.0);
  return u;
}

double exact_spectral(std::span<const double> W, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd M(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = W[r * cols + c];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
}

DeepRanStack random_trained_like_stack(Rng& rng, int w, int L) {
  auto s = make_deep_stack(2, w, L, 1, rng());
  for (auto& blk : s.layers) {
    blk.block_gate_logit = normal(rng, 0.0, 1.5);
    for (auto& u : blk.units) {
      for (auto& a : u.num_coeffs) a += normal(rng, 0.0, 0.3);
      for (auto& b : u.den_coeffs) b += normal(rng, 0.0, 0.3);
      u.gate_logit = normal(rng, 0.0, 1.5);
    }
    for (auto& v : blk.W) v += normal(rng, 0.0, 0.2);
  }
  return s;
}

// True when every pre-activation of every layer stays inside [-B, B].
bool inside_radius(const DeepRanStack& s, std::span<const double> h0, double B) {
  const auto fwd = forward_deep(s, h0);
  for (const auto& st : fwd.states)
    for (double p : st.pre)
      if (std::abs(p) > B) return false;
  return true;
}

}  // namespace

TEST(ScalingFactor, HandValues) {
  EXPECT_EQ(scaling_factor(0, 1, 1.0), 2.0);
  EXPECT_EQ(scaling_factor(1, 1, 1.0), 1.0);
  EXPECT_EQ(scaling_factor(0, 3, 2.0), 15.0);
  EXPECT_EQ(scaling_factor(1, 3, 2.0), 17.0);
  EXPECT_EQ(scaling_factor(1, 0, 2.0), 0.0);
  EXPECT_THROW(scaling_factor(2, 3, 2.0), std::invalid_argument);
  EXPECT_THROW(scaling_factor(0, 3, 0.0), std::invalid_argument);
}

TEST(UnitBound, LinearOverLinearHandValue) {
  RationalUnit1D u;
  u.num_coeffs = {0.0, 1.0};
  u.den_coeffs = {1.0};
  const auto r = unit_lipschitz_bound(u, 1.0);
  EXPECT_EQ(r.W_P, 1.0);
  EXPECT_EQ(r.W_Q, 1.0);
  EXPECT_EQ(r.K_phi, 3.0);
  EXPECT_GE(r.margin, 0.0);
}

TEST(UnitBound, ZeroNumeratorIsZero) {
  RationalUnit1D u;
  u.num_coeffs = {0.0, 0.0, 0.0};
  u.den_coeffs = {2.0, -1.0};
  const auto r = unit_lipschitz_bound(u, 3.0);
  EXPECT_EQ(r.K_phi, 0.0);
  EXPECT_EQ(r.empirical_sup, 0.0);
  for (double x : {-3.0, 0.0, 2.5}) EXPECT_EQ(eval_raw_1d(u, x), 0.0);
}

TEST(UnitBound, DominatesGridForRandomUnits) {
  Rng rng = stream(1, "test");
  int violations = 0;
  for (double B : {1.0, 3.0})
    for (int k = 0; k < 100; ++k) {
      const auto u = random_unit(rng, 1 + static_cast<int>(rng() % 4), static_cast<int>(rng() % 4), 1.0);
      const auto r = unit_lipschitz_bound(u, B);
      if (r.margin < 0.0) ++violations;
      EXPECT_LE(r.empirical_sup_gated, r.gated_bound + 1e-12);
    }
  EXPECT_EQ(violations, 0);
}

TEST(UnitBound, SmoothnessProxyOnGrid) {
  Rng rng = stream(2, "test");
  for (int k = 0; k < 20; ++k) {
    const auto u = random_unit(rng, 3, 2, 1.0);
    const double B = 2.0, K = unit_lipschitz_constant(u, B);
    double prev = eval_raw_1d(u, -B);
    for (int i = 1; i <= 2000; ++i) {
      const double x0 = -B + 2.0 * B * (i - 1) / 2000.0, x1 = -B + 2.0 * B * i / 2000.0;
      const double v = eval_raw_1d(u, x1);
      EXPECT_LE(std::abs(v - prev) / (x1 - x0), K * (1.0 + 1e-9));
      prev = v;
    }
  }
}

TEST(UnitBound, MonotoneInWeightsRadiusAndDegrees) {
  Rng rng = stream(3, "test");
  for (int k = 0; k < 30; ++k) {
    auto u = random_unit(rng, 3, 2, 1.0);
    const double base = unit_lipschitz_constant(u, 1.5);
    EXPECT_GE(unit_lipschitz_constant(u, 2.0), base);
    auto bigger_p = u;
    bigger_p.num_coeffs[0] += std::copysign(0.5, bigger_p.num_coeffs[0]);
    EXPECT_GE(unit_lipschitz_constant(bigger_p, 1.5), base);
    auto bigger_q = u;
    bigger_q.den_coeffs[0] += std::copysign(0.5, bigger_q.den_coeffs[0]);
    EXPECT_GE(unit_lipschitz_constant(bigger_q, 1.5), base);
    auto higher_m = u;
    higher_m.num_coeffs.push_back(0.0);
    EXPECT_GE(unit_lipschitz_constant(higher_m, 1.5), base);
    auto higher_n = u;
    higher_n.den_coeffs.push_back(0.0);
    EXPECT_GE(unit_lipschitz_constant(higher_n, 1.5), base);
  }
}

TEST(UnitBound, GateInterpolationEnvelope) {
  // increasing units (q == 0, positive slope) have 0 <= r~' everywhere, so the
  // gated slope is a convex combination of 1 and r~'
  Rng rng = stream(4, "test");
  for (int k = 0; k < 30; ++k) {
    RationalUnit1D u;
    u.num_coeffs = {normal(rng, 0.0, 1.0), std::abs(normal(rng, 0.0, 2.0)) + 0.1};
    u.den_coeffs = {0.0};
    u.gate_logit = normal(rng, 0.0, 2.0);
    const auto r = unit_lipschitz_bound(u, 2.0);
    EXPECT_GE(r.empirical_sup_gated, std::min(1.0, r.empirical_sup) - 1e-12);
    EXPECT_LE(r.empirical_sup_gated, std::max(1.0, r.gated_bound) + 1e-12);
  }
}

TEST(SpectralNorm, MatchesSvd) {
  Rng rng = stream(5, "test");
  for (int k = 0; k < 20; ++k) {
    const std::size_t r = 1 + rng() % 6, c = 1 + rng() % 6;
    std::vector<double> W(r * c);
    for (auto& v : W) v = normal(rng, 0.0, 1.0);
    EXPECT_NEAR(spectral_norm(W, r, c, k), exact_spectral(W, r, c), 1e-6);
  }
  std::vector<double> zero(9, 0.0);
  EXPECT_EQ(spectral_norm(zero, 3, 3), 0.0);
}

TEST(SpectralNorm, NonConvergenceIsAnError) {
  // two iterations cannot reach a 1e-16 relative change on a non-normal matrix
  std::vector<double> W{1.0, 0.999, 0.0, 1.0};
  EXPECT_THROW(spectral_norm(W, 2, 2, 0, 1e-16, 2), std::runtime_error);
}

TEST(LayerBound, Arithmetic) {
  DeepBlock blk;
  blk.W = {1.0, 0.0, 0.0, 1.0};
  blk.units.assign(2, RationalUnit1D::identity(1, 1));
  blk.block_gate_logit = kGateOff;
  EXPECT_EQ(layer_jacobian_bound(blk, 1.0).bound, 1.0);
  // alpha = 1, unit K = 2 (p = 2x, q == 0, unit gate open), ||W|| = 1
  blk.block_gate_logit = kGateOpen;
  for (auto& u : blk.units) {
    u.num_coeffs = {0.0, 2.0};
    u.den_coeffs = {0.0};
    u.gate_logit = kGateOpen;
  }
  EXPECT_NEAR(layer_jacobian_bound(blk, 1.0).bound, 2.0, 1e-12);
}

TEST(LayerBound, DominatesSampledJacobians) {
  Rng rng = stream(6, "test");
  const double B = 3.0;
  for (int k = 0; k < 50; ++k) {
    const int w = 2 + static_cast<int>(rng() % 5);
    const auto s = random_trained_like_stack(rng, w, 1);
    const auto lb = layer_jacobian_bound(s.layers[0], B);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> h(static_cast<std::size_t>(w));
      for (auto& v : h) v = uniform(rng, -1.0, 1.0);
      if (!inside_radius(s, h, B)) continue;
      const auto J = stack_jacobian(s, h);
      EXPECT_LE(exact_spectral(J, static_cast<std::size_t>(w), static_cast<std::size_t>(w)), lb.bound * (1.0 + 1e-9));
    }
  }
}

TEST(NetworkBound, GatesOffAndProduct) {
  auto s = make_deep_stack(2, 4, 5, 1, 3);
  set_block_gates(s, kGateOff);
  EXPECT_EQ(network_bound(s, 2.0).bound, 1.0);
  auto t = make_deep_stack(2, 4, 2, 1, 3);
  const auto nb = network_bound(t, 2.0);
  EXPECT_DOUBLE_EQ(nb.bound, nb.layers[0].bound * nb.layers[1].bound);
}

TEST(NetworkBound, DominatesEndToEndJacobiansDepthEight) {
  Rng rng = stream(7, "test");
  const double B = 3.0;
  int checked = 0;
  for (int k = 0; k < 5; ++k) {
    const auto s = random_trained_like_stack(rng, 4, 8);
    const double bound = network_bound(s, B).bound;
    for (int t = 0; t < 100; ++t) {
      std::vector<double> h(4);
      for (auto& v : h) v = uniform(rng, -0.5, 0.5);
      if (!inside_radius(s, h, B)) continue;
      EXPECT_LE(exact_spectral(stack_jacobian(s, h), 4, 4), bound * (1.0 + 1e-9));
      ++checked;
    }
  }
  EXPECT_GT(checked, 250);
}

namespace {

IsometryProbe probe_at(double gate_logit_value, int L, int w, std::uint64_t seed) {
  auto s = make_deep_stack(w, w, L, 1, seed);
  set_block_gates(s, gate_logit_value);
  Rng rng = stream(seed, "probes");
  std::vector<std::vector<double>> inputs(16, std::vector<double>(static_cast<std::size_t>(w)));
  for (auto& h : inputs)
    for (auto& v : h) v = normal(rng, 0.0, 1.0);
  std::vector<double> u(static_cast<std::size_t>(w));
  for (auto& v : u) v = normal(rng, 0.0, 1.0);
  return isometry_probe(s, [&](std::span<const double>) { return u; }, inputs);
}

}  // namespace

TEST(Isometry, GateOffRatioIsExactlyOne) {
  for (int L : {1, 8, 32}) {
    const auto pr = probe_at(kGateOff, L, 16, 3);
    EXPECT_EQ(pr.ratio, 1.0);
    EXPECT_EQ(pr.alpha, 0.0);
  }
}

TEST(Isometry, DefaultInitRatioNearOne) {
  const auto pr = probe_at(kDefaultGateLogit, 32, 16, 1);
  EXPECT_GE(pr.ratio, 0.5);
  EXPECT_LE(pr.ratio, 2.0);
  EXPECT_LE(pr.ratio, pr.upper_bound * (1.0 + 1e-12));
  EXPECT_GT(pr.ratio, 0.0);
  EXPECT_NEAR(pr.lower_bound, pr.ratio, 1e-12 * pr.ratio);
}

TEST(Isometry, DeviationGrowsWithGate) {
  double prev = 0.0;
  for (double eps : {0.02, 0.1, 0.5}) {
    const auto pr = probe_at(logit(eps), 32, 16, 1);
    const double dev = std::abs(std::log(pr.ratio));
    EXPECT_GT(dev, prev) << eps;
    prev = dev;
  }
}
