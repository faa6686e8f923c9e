// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fd.hpp"
#include "ran/deep.hpp"

using namespace ran;
using ran::testing::grad_close;

namespace {

DeepRanStack random_stack(Rng& rng, int din, int w, int L, int C) {
  auto s = make_deep_stack(din, w, L, C, rng());
  auto p = s.parameters();
  for (auto& v : p) v += normal(rng, 0.0, 0.3);
  s.set_parameters(p);
  return s;
}

}  // namespace

TEST(Deep, GradientsMatchFiniteDifferences) {
  Rng rng = stream(1, "test");
  for (int draw = 0; draw < 50; ++draw) {
    const int din = 1 + static_cast<int>(rng() % 3);
    const int w = 1 + static_cast<int>(rng() % 4);
    const int L = static_cast<int>(rng() % 4);
    const int C = 1 + static_cast<int>(rng() % 2);
    const auto s = random_stack(rng, din, w, L, C);
    std::vector<double> x(static_cast<std::size_t>(din)), up(static_cast<std::size_t>(C));
    for (auto& v : x) v = uniform(rng, -1.0, 1.0);
    for (auto& v : up) v = normal(rng, 0.0, 1.0);
    DeepRanStack::Cache cache;
    s.forward_cache(x, cache);
    std::vector<double> g(s.num_params(), 0.0);
    s.backward_cache(cache, up, g);
    const auto num = ran::testing::fd_gradient(
        [&](std::span<const double> p) {
          auto ss = s;
          ss.set_parameters(p);
          const auto z = ss.predict(x);
          return std::inner_product(z.begin(), z.end(), up.begin(), 0.0);
        },
        s.parameters());
    const auto kinds = s.parameter_kinds();
    ASSERT_EQ(kinds.size(), g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_TRUE(grad_close(g[i], num[i])) << "draw " << draw << " param " << i << " (" << to_string(kinds[i]) << ") "
                                            << g[i] << " vs " << num[i];
  }
}

TEST(Deep, StackJacobianMatchesFiniteDifferences) {
  Rng rng = stream(2, "test");
  for (int draw = 0; draw < 20; ++draw) {
    const int w = 2 + static_cast<int>(rng() % 3);
    const auto s = random_stack(rng, 1, w, 3, 1);
    std::vector<double> h0(static_cast<std::size_t>(w));
    for (auto& v : h0) v = uniform(rng, -1.0, 1.0);
    const auto J = stack_jacobian(s, h0);
    const auto W = static_cast<std::size_t>(w);
    for (std::size_t c = 0; c < W; ++c)
      for (std::size_t r = 0; r < W; ++r) {
        auto f = [&](double t) {
          auto h = h0;
          h[c] = t;
          return forward_deep(s, h).hL[r];
        };
        EXPECT_TRUE(grad_close(J[r * W + c], ran::testing::central_diff(f, h0[c])));
      }
  }
}

TEST(Deep, GatesOffIsIdentity) {
  auto s = make_deep_stack(3, 8, 6, 1, 4);
  set_block_gates(s, kGateOff);
  Rng rng = stream(3, "test");
  for (int t = 0; t < 50; ++t) {
    std::vector<double> h0(8);
    for (auto& v : h0) v = normal(rng, 0.0, 5.0);
    EXPECT_EQ(forward_deep(s, h0).hL, h0);
    const auto J = stack_jacobian(s, h0);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(J[r * 8 + c], r == c ? 1.0 : 0.0);
  }
}

TEST(Deep, ParameterRoundTrip) {
  auto s = make_deep_stack(2, 4, 3, 2, 5);
  const auto p = s.parameters();
  EXPECT_EQ(p.size(), s.num_params());
  auto t = make_deep_stack(2, 4, 3, 2, 6);
  t.set_parameters(p);
  EXPECT_EQ(t.parameters(), p);
  EXPECT_EQ(s.parameter_kinds().size(), p.size());
  EXPECT_EQ(s.block_offset(1) - s.block_offset(0), s.layers[0].param_count());
}

TEST(Deep, InitNearIdentityWeights) {
  const auto s = make_deep_stack(2, 16, 2, 1, 7);
  for (const auto& blk : s.layers) {
    EXPECT_NEAR(blk.gate(), 0.018, 1e-3);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(blk.W[i * 16 + i], 1.0, 0.2);
  }
  EXPECT_THROW(make_deep_stack(0, 4, 1, 1, 0), std::invalid_argument);
}

TEST(Deep, WrongWidthThrows) {
  const auto s = make_deep_stack(2, 4, 2, 1, 1);
  const std::vector<double> h(3, 0.0);
  EXPECT_THROW(forward_deep(s, h), std::invalid_argument);
}
