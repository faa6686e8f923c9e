// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fd.hpp"
#include "ran/anova.hpp"
#include "ran/deep.hpp"
#include "ran/train.hpp"

using namespace ran;
using ran::testing::grad_close;

namespace {

Dataset regression_data(Rng& rng, int d, int C, std::size_t n) {
  Dataset ds;
  ds.name = "synthetic";
  ds.d = static_cast<std::size_t>(d);
  ds.C = static_cast<std::size_t>(C);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double x = uniform(rng, -1.0, 1.0);
      ds.inputs.push_back(x);
      s += std::sin(x);
    }
    for (int c = 0; c < C; ++c) ds.targets.push_back(s * (c + 1) + 0.1 * c);
  }
  ds.domain.assign(static_cast<std::size_t>(d), {-1.0, 1.0});
  return ds;
}

Dataset classification_data(Rng& rng, int d, int C, std::size_t n) {
  Dataset ds;
  ds.name = "labels";
  ds.d = static_cast<std::size_t>(d);
  ds.C = static_cast<std::size_t>(C);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.inputs.push_back(uniform(rng, -1.0, 1.0));
    ds.labels.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(C)));
  }
  return ds;
}

AnovaModel perturbed_model(Rng& rng, int d, int C, std::size_t k) {
  auto m = make_anova_model(d, C, build_random_topology(d, k, rng()));
  init_identity(m, rng());
  auto p = m.parameters();
  for (auto& v : p) v += normal(rng, 0.0, 0.3);
  m.set_parameters(p);
  return m;
}

}  // namespace

TEST(Loss, UniformSoftmaxIsLogC) {
  std::vector<double> z(10, 0.37), g(10);
  const double l = example_loss(LossKind::SoftmaxCe, z, {}, 3, g);
  EXPECT_NEAR(l, std::log(10.0), 1e-12);
  EXPECT_NEAR(l, 2.302585, 1e-6);
  EXPECT_NEAR(g[3], 0.1 - 1.0, 1e-12);
  EXPECT_NEAR(g[0], 0.1, 1e-12);
}

TEST(Loss, LabelOutOfRange) {
  std::vector<double> z(3, 0.0), g(3);
  EXPECT_THROW(example_loss(LossKind::SoftmaxCe, z, {}, 3, g), std::invalid_argument);
  EXPECT_THROW(example_loss(LossKind::SoftmaxCe, z, {}, -1, g), std::invalid_argument);
}

TEST(Loss, ParseNames) {
  EXPECT_EQ(parse_loss("mse"), LossKind::Mse);
  EXPECT_EQ(parse_loss("softmax_ce"), LossKind::SoftmaxCe);
  EXPECT_THROW(parse_loss("hinge"), std::invalid_argument);
}

TEST(Loss, PerfectFitIsZero) {
  Rng rng = stream(1, "test");
  auto m = perturbed_model(rng, 2, 2, 1);
  auto ds = regression_data(rng, 2, 2, 20);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto z = m.predict(ds.x(n));
    ds.targets[n * 2] = z[0];
    ds.targets[n * 2 + 1] = z[1];
  }
  const auto [loss, g] = loss_and_grad(m, ds, LossKind::Mse);
  EXPECT_EQ(loss, 0.0);
  for (double v : g.flat) EXPECT_EQ(v, 0.0);
}

TEST(Loss, GradientsMatchFiniteDifferencesEveryKind) {
  Rng rng = stream(2, "test");
  for (LossKind kind : {LossKind::Mse, LossKind::Mae, LossKind::SoftmaxCe}) {
    for (int draw = 0; draw < 20; ++draw) {
      const int d = 1 + static_cast<int>(rng() % 3);
      const int C = kind == LossKind::SoftmaxCe ? 2 + static_cast<int>(rng() % 3) : 1 + static_cast<int>(rng() % 2);
      auto m = perturbed_model(rng, d, C, max_pairs(d) > 0 ? 1 : 0);
      const auto ds = kind == LossKind::SoftmaxCe ? classification_data(rng, d, C, 6) : regression_data(rng, d, C, 6);
      const auto [loss, g] = loss_and_grad(m, ds, kind);
      const auto num = ran::testing::fd_gradient(
          [&](std::span<const double> p) {
            auto mm = m;
            mm.set_parameters(p);
            return evaluate_loss(mm, ds, kind);
          },
          m.parameters());
      for (std::size_t i = 0; i < num.size(); ++i)
        EXPECT_TRUE(grad_close(g.flat[i], num[i])) << to_string(kind) << " draw " << draw << " param " << i << " "
                                                   << g.flat[i] << " vs " << num[i];
    }
  }
}

TEST(Loss, DeepStackGradientMatchesFiniteDifferences) {
  Rng rng = stream(3, "test");
  for (int draw = 0; draw < 10; ++draw) {
    auto s = make_deep_stack(2, 3, 2, 2, rng());
    const auto ds = classification_data(rng, 2, 2, 5);
    const auto [loss, g] = loss_and_grad(s, ds, LossKind::SoftmaxCe);
    const auto num = ran::testing::fd_gradient(
        [&](std::span<const double> p) {
          auto ss = s;
          ss.set_parameters(p);
          return evaluate_loss(ss, ds, LossKind::SoftmaxCe);
        },
        s.parameters());
    for (std::size_t i = 0; i < num.size(); ++i) EXPECT_TRUE(grad_close(g.flat[i], num[i])) << i;
  }
}

TEST(Adam, ZeroGradientNoDecayLeavesParameters) {
  std::vector<double> p{1.0, -2.0, 3.0}, g(3, 0.0);
  std::vector<ParamKind> k{ParamKind::Numerator, ParamKind::Denominator, ParamKind::Gate};
  AdamState st(3);
  AdamConfig cfg;
  cfg.weight_decay_den = 0.0;
  ASSERT_TRUE(adam_step(p, g, k, st, cfg));
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.5}, g{1.0};
  std::vector<ParamKind> k{ParamKind::Numerator};
  AdamState st(1);
  AdamConfig cfg;
  cfg.lr_main = 1e-3;
  ASSERT_TRUE(adam_step(p, g, k, st, cfg));
  EXPECT_NEAR(0.5 - p[0], 1e-3, 1e-10);
}

TEST(Adam, DecoupledDecayOnDenominatorsOnly) {
  std::vector<double> p{1.0, 1.0, 1.0, 1.0}, g(4, 0.0);
  std::vector<ParamKind> k{ParamKind::Numerator, ParamKind::Denominator, ParamKind::Gate, ParamKind::Head};
  AdamState st(4);
  AdamConfig cfg;
  cfg.lr_main = 0.01;
  cfg.weight_decay_den = 0.1;
  for (int s = 0; s < 5; ++s) ASSERT_TRUE(adam_step(p, g, k, st, cfg));
  EXPECT_NEAR(p[1], std::pow(1.0 - 0.01 * 0.1, 5), 1e-15);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[2], 1.0);
  EXPECT_EQ(p[3], 1.0);
}

TEST(Adam, GroupLearningRates) {
  std::vector<double> p{0.0, 0.0, 0.0}, g{1.0, 1.0, 1.0};
  std::vector<ParamKind> k{ParamKind::Numerator, ParamKind::Denominator, ParamKind::Gate};
  AdamState st(3);
  AdamConfig cfg;
  cfg.weight_decay_den = 0.0;
  cfg.lr_main = 1e-2;
  adam_step(p, g, k, st, cfg);
  EXPECT_NEAR(p[0], -1e-2, 1e-9);
  EXPECT_NEAR(p[1], -1e-3, 1e-9);
  EXPECT_NEAR(p[2], -1e-3, 1e-9);
}

TEST(Adam, NanGradientSkipsAndFlags) {
  std::vector<double> p{1.0, 2.0}, g{0.5, std::nan("")};
  std::vector<ParamKind> k{ParamKind::Numerator, ParamKind::Numerator};
  AdamState st(2);
  EXPECT_FALSE(adam_step(p, g, k, st, AdamConfig{}));
  EXPECT_TRUE(st.diverged);
  EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(st.t, 0);
}

TEST(GroupLasso, ZeroLambdaAndEuclideanNorm) {
  std::vector<double> params{3.0, 4.0, 7.0}, grad(3, 0.0);
  std::vector<ParamRange> groups{{0, 2}};
  EXPECT_EQ(group_lasso_penalty(params, groups, 0.0, grad), 0.0);
  EXPECT_EQ(grad, std::vector<double>(3, 0.0));
  EXPECT_DOUBLE_EQ(group_lasso_penalty(params, groups, 1.0, grad), 5.0);
  EXPECT_DOUBLE_EQ(grad[0], 0.6);
  EXPECT_DOUBLE_EQ(grad[1], 0.8);
  EXPECT_EQ(grad[2], 0.0);
  std::vector<double> zero{0.0, 0.0}, gz(2, 0.0);
  EXPECT_EQ(group_lasso_penalty(zero, groups, 2.0, gz), 0.0);
  EXPECT_EQ(gz, std::vector<double>(2, 0.0));
}

TEST(GroupLasso, ModelPenaltyUsesPairCoefficients) {
  auto m = make_anova_model(3, 1, InteractionSet{3, {{0, 1}}, 0});
  auto& u = m.pair_units[0];
  std::fill(u.num_coeffs.begin(), u.num_coeffs.end(), 0.0);
  std::fill(u.den_coeffs.begin(), u.den_coeffs.end(), 0.0);
  u.num_coeffs[0] = 3.0;
  u.den_coeffs[0] = 4.0;
  u.gate_logit = 10.0;
  EXPECT_DOUBLE_EQ(group_lasso_penalty(m, 1.0), 5.0);
}

TEST(Train, RejectsZeroEpochs) {
  Rng rng = stream(4, "test");
  auto m = perturbed_model(rng, 2, 1, 1);
  const auto ds = regression_data(rng, 2, 1, 30);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(m, ds, cfg), std::invalid_argument);
  cfg.epochs = 1;
  cfg.lr_main = 0.0;
  EXPECT_THROW(train(m, ds, cfg), std::invalid_argument);
}

TEST(Train, DeterministicTraces) {
  Rng rng = stream(5, "test");
  const auto m0 = perturbed_model(rng, 3, 1, 2);
  const auto ds = regression_data(rng, 3, 1, 120);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 16;
  cfg.seed = 77;
  auto a = m0, b = m0;
  const auto ra = train(a, ds, cfg);
  const auto rb = train(b, ds, cfg);
  EXPECT_EQ(ra.train_loss, rb.train_loss);
  EXPECT_EQ(ra.val_loss, rb.val_loss);
  EXPECT_EQ(ra.grad_norm, rb.grad_norm);
  EXPECT_EQ(a.parameters(), b.parameters());
}

TEST(Train, ReducesLossAndKeepsDenominatorsPoleFree) {
  Rng rng = stream(6, "test");
  auto m = make_anova_model(2, 1, full_topology(2));
  init_identity(m, 3);
  const auto ds = regression_data(rng, 2, 1, 200);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  cfg.lr_main = 2e-2;
  std::size_t checks = 0;
  const auto rep = train(m, ds, cfg, nullptr, StepHook<AnovaModel>([&](const AnovaModel& mm) {
                           for (double a : {-1.0, 0.0, 1.0})
                             for (double b : {-1.0, 0.5, 1.0}) {
                               const std::vector<double> x{a, b};
                               ASSERT_GE(mm.min_denominator(x), 1.0 + kDefaultEps);
                               ++checks;
                             }
                         }));
  EXPECT_FALSE(rep.diverged);
  EXPECT_LT(rep.final_val_loss, 0.1 * rep.val_loss.front());
  EXPECT_GT(checks, 0u);
  EXPECT_EQ(rep.train_loss.size(), 60u);
  EXPECT_GE(rep.best_epoch, 0);
}

TEST(Train, NonFiniteLossTwiceFlagsDivergence) {
  Rng rng = stream(7, "test");
  auto m = perturbed_model(rng, 2, 1, 0);
  const auto ds = regression_data(rng, 2, 1, 40);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr_main = 1e300;  // first step throws every parameter to +-1e300
  const auto rep = train(m, ds, cfg);
  EXPECT_TRUE(rep.diverged);
  EXPECT_LT(rep.epochs_run, 5);
}

TEST(Split, SeededTwentyPercent) {
  Rng rng = stream(8, "test");
  const auto ds = regression_data(rng, 1, 1, 100);
  const auto [tr, va] = split_dataset(ds, 0.2, 3);
  EXPECT_EQ(va.size(), 20u);
  EXPECT_EQ(tr.size(), 80u);
  const auto [tr2, va2] = split_dataset(ds, 0.2, 3);
  EXPECT_EQ(va.inputs, va2.inputs);
}
