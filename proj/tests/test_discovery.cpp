// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "expr.hpp"
#include "ran/discovery.hpp"

using namespace ran;
using ran::testing::eval_expr;

namespace {

// Smallest q <= 1000 admitting some p with |x - p/q| <= precision.
struct Brute {
  long long p = 0, q = 0;  // q == 0: none
  double min_err = std::numeric_limits<double>::infinity();
};

Brute brute_snap(double x, double precision) {
  Brute b;
  for (long long q = 1; q <= 1000; ++q) {
    const long long p = std::llround(x * static_cast<double>(q));
    const double err = std::abs(x - static_cast<double>(p) / static_cast<double>(q));
    b.min_err = std::min(b.min_err, err);
    if (b.q == 0 && err <= precision) {
      b.p = p;
      b.q = q;
    }
  }
  return b;
}

AnovaModel random_model(Rng& rng, int d, int C, std::size_t k, double spread = 0.3) {
  auto m = make_anova_model(d, C, build_random_topology(d, k, rng()));
  init_identity(m, rng());
  auto p = m.parameters();
  for (auto& v : p) v += normal(rng, 0.0, spread);
  m.set_parameters(p);
  m.domain.assign(static_cast<std::size_t>(d), {-1.5, 1.5});
  return m;
}

std::vector<double> random_x(Rng& rng, int d, double lo = -1.5, double hi = 1.5) {
  std::vector<double> x(static_cast<std::size_t>(d));
  for (auto& v : x) v = uniform(rng, lo, hi);
  return x;
}

Dataset needle(double gamma, std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.name = "needle";
  ds.d = 4;
  ds.C = 1;
  ds.domain.assign(4, {-2.0, 2.0});
  Rng rng = stream(seed, "data");
  for (std::size_t t = 0; t < n; ++t) {
    double y = 0.0;
    std::vector<double> x(4);
    for (auto& v : x) {
      v = uniform(rng, -2.0, 2.0);
      y += std::sin(v);
    }
    y += gamma * x[0] * x[1];
    ds.inputs.insert(ds.inputs.end(), x.begin(), x.end());
    ds.targets.push_back(y);
  }
  return ds;
}

}  // namespace

TEST(Snap, DocumentedExamples) {
  const auto a = snap_value(1.0000049, 1e-5);
  EXPECT_TRUE(a.snapped);
  EXPECT_EQ(a.coef.p, 1);
  EXPECT_EQ(a.coef.q, 1);

  const auto b = snap_value(0.3333334, 1e-5);
  EXPECT_TRUE(b.snapped);
  EXPECT_EQ(b.coef.p, 1);
  EXPECT_EQ(b.coef.q, 3);

  const auto c = snap_value(0.7182818, 1e-7);
  EXPECT_FALSE(c.snapped);
  EXPECT_EQ(c.coef.value, 0.7182818);
  const auto oracle = brute_snap(0.7182818, 1e-7);
  EXPECT_EQ(oracle.q, 0);
  EXPECT_GT(oracle.min_err, 1e-7);
}

TEST(Snap, NearZeroAndNegative) {
  EXPECT_TRUE(snap_value(4e-6, 1e-5).coef.is_zero());
  EXPECT_TRUE(snap_value(-4e-6, 1e-5).coef.is_zero());
  const auto r = snap_value(-2.4999999, 1e-5);
  EXPECT_EQ(r.coef.p, -5);
  EXPECT_EQ(r.coef.q, 2);
  EXPECT_THROW(snap_value(1.0, 0.0), std::invalid_argument);
  EXPECT_FALSE(snap_value(std::nan(""), 1e-5).snapped);
}

TEST(Snap, MatchesExhaustiveSearch) {
  Rng rng = stream(21, "test");
  int checked = 0;
  for (int t = 0; t < 3000; ++t) {
    const double precision = std::pow(10.0, -uniform(rng, 2.0, 8.0));
    double x = uniform(rng, -20.0, 20.0);
    if (t % 3 == 0) {
      // plant a fraction plus a small perturbation
      const long long q = 1 + static_cast<long long>(rng() % 1000);
      const long long p = static_cast<long long>(rng() % 4001) - 2000;
      x = static_cast<double>(p) / static_cast<double>(q) + uniform(rng, -1.0, 1.0) * precision;
    }
    const auto ours = snap_value(x, precision);
    const auto oracle = brute_snap(x, precision);
    if (std::abs(x) <= precision) {
      EXPECT_TRUE(ours.coef.is_zero());
      continue;
    }
    ++checked;
    if (oracle.q == 0) {
      EXPECT_FALSE(ours.snapped) << x << " at " << precision;
      continue;
    }
    ASSERT_TRUE(ours.snapped) << x << " at " << precision;
    EXPECT_EQ(ours.coef.q, oracle.q) << x << " at " << precision;
    EXPECT_LE(std::abs(x - ours.coef.value), precision * (1 + 1e-12));
  }
  EXPECT_GT(checked, 2500);
}

TEST(Coef, ExactArithmetic) {
  const auto a = Coef::fraction(1, 3), b = Coef::fraction(1, 6);
  const auto s = a + b;
  EXPECT_EQ(s.p, 1);
  EXPECT_EQ(s.q, 2);
  EXPECT_EQ((a * b).q, 18);
  EXPECT_EQ((a / b).p, 2);
  EXPECT_TRUE((a - a).is_zero());
  EXPECT_EQ(Coef::fraction(2, -4).str(), "-1/2");
  EXPECT_FALSE((a + Coef::real(0.25)).exact);
  EXPECT_THROW(a / Coef::integer(0), std::domain_error);
}

TEST(Formula, GateOffSumsInputs) {
  auto m = make_anova_model(3, 1, InteractionSet{3, {{0, 1}}, 0});
  for (auto& u : m.main_units) u.gate_logit = kGateOff;
  for (auto& u : m.pair_units) u.gate_logit = kGateOff;
  m.head_W = {1, 1, 1, 0};
  m.domain.assign(3, {-1.0, 1.0});
  const auto f = symbolic_formula(m);
  EXPECT_EQ(f.text(), "x_0 + x_1 + x_2");
  EXPECT_EQ(f.complexity, 2);
}

TEST(Formula, DeclaredConstantDenominatorIsDropped) {
  auto m = make_anova_model(1, 1, empty_topology(1), AnovaOptions{1, 1});
  auto& u = m.main_units[0];
  u.gate_logit = kGateOpen;
  const double d0 = 1.0 + std::log(2.0) + u.eps;  // q == 0
  u.num_coeffs = {0.0, d0};
  u.den_coeffs = {0.0};
  m.head_W = {1.0};
  m.domain = {{-2.0, 2.0}};
  EXPECT_EQ(snap_to_rational(m, 1e-9).text(), "x");
}

TEST(Formula, FidelityToSnappedModel) {
  Rng rng = stream(22, "test");
  for (int draw = 0; draw < 12; ++draw) {
    const int d = 1 + draw % 3, C = 1 + draw % 2;
    const auto m = random_model(rng, d, C, std::min<std::size_t>(max_pairs(d), draw % 3));
    for (double precision : {1e-2, 1e-5}) {
      const auto f = snap_to_rational(m, precision);
      ASSERT_EQ(f.expressions.size(), static_cast<std::size_t>(C));
      for (int t = 0; t < 1000; ++t) {
        const auto x = random_x(rng, d);
        const auto z = f.model.eval(x);
        for (int c = 0; c < C; ++c)
          ASSERT_NEAR(eval_expr(f.expressions[static_cast<std::size_t>(c)], x), z[static_cast<std::size_t>(c)], 1e-9)
              << f.expressions[static_cast<std::size_t>(c)];
      }
    }
  }
}

TEST(Formula, DeclaredModelTracksTrainedModel) {
  Rng rng = stream(23, "test");
  for (int draw = 0; draw < 10; ++draw) {
    const auto m = random_model(rng, 2, 1, 1, 0.2);
    const auto s = declare_rational(m);
    double worst_fit = 0.0;
    for (const auto& t : s.terms) worst_fit = std::max(worst_fit, t.den_fit_max);
    for (int t = 0; t < 200; ++t) {
      const auto x = random_x(rng, 2);
      // |P/D - P/D^| <= |P| |D - D^| / (D D^); loose envelope
      EXPECT_NEAR(s.eval(x)[0], m.predict(x)[0], 1e-6 + 50.0 * worst_fit);
    }
  }
}

TEST(Formula, SnapSoundness) {
  Rng rng = stream(24, "test");
  const auto m = random_model(rng, 2, 1, 1);
  const double precision = 1e-3;
  const auto raw = declare_rational(m);
  const auto snapped = snap_model(raw, precision);
  auto check = [&](const Coef& a, const Coef& b) {
    if (b.exact) {
      EXPECT_LE(std::abs(a.value - b.value), precision * (1 + 1e-12));
    } else {
      EXPECT_EQ(a.value, b.value);
    }
  };
  for (std::size_t k = 0; k < raw.terms.size(); ++k) {
    for (std::size_t q = 0; q < raw.terms[k].num.size(); ++q) check(raw.terms[k].num[q].second, snapped.terms[k].num[q].second);
    for (std::size_t q = 0; q < raw.terms[k].den.size(); ++q) check(raw.terms[k].den[q].second, snapped.terms[k].den[q].second);
    check(raw.terms[k].gate, snapped.terms[k].gate);
  }
  for (std::size_t k = 0; k < raw.head_W.size(); ++k) check(raw.head_W[k], snapped.head_W[k]);
}

TEST(Formula, ComplexityIsDeterministic) {
  Rng rng = stream(25, "test");
  const auto m = random_model(rng, 3, 1, 2);
  const auto a = snap_to_rational(m, 1e-4), b = snap_to_rational(m, 1e-4);
  EXPECT_EQ(a.text(), b.text());
  EXPECT_EQ(a.complexity, b.complexity);
  EXPECT_EQ(a.complexity, count_ops(a.text()));
}

TEST(Prune, TinyThresholdKeepsEverything) {
  Rng rng = stream(26, "test");
  const auto m = random_model(rng, 3, 2, 3);
  const auto [out, rep] = prune(m, 1e-300);
  EXPECT_EQ(out.pair_units.size(), 3u);
  EXPECT_EQ(rep.removed_bound, 0.0);
  EXPECT_THROW(prune(m, 0.0), std::invalid_argument);
}

TEST(Prune, ZeroUnitAlwaysPruned) {
  Rng rng = stream(27, "test");
  auto m = random_model(rng, 3, 1, 2);
  std::fill(m.pair_units[1].num_coeffs.begin(), m.pair_units[1].num_coeffs.end(), 0.0);
  std::fill(m.pair_units[1].den_coeffs.begin(), m.pair_units[1].den_coeffs.end(), 0.0);
  const auto [out, rep] = prune(m, 1e-12);
  EXPECT_EQ(out.pair_units.size(), 1u);
  EXPECT_EQ(out.topology.pairs[0], m.topology.pairs[0]);
  EXPECT_FALSE(rep.pairs[1].survived);
}

TEST(Prune, ConservativeAndConsistent) {
  Rng rng = stream(28, "test");
  for (int draw = 0; draw < 20; ++draw) {
    const auto m = random_model(rng, 4, 2, 4);
    const double threshold = uniform(rng, 0.05, 0.6);
    const auto [out, rep] = prune(m, threshold, 500, draw);
    for (const auto& p : rep.pairs) {
      if (!p.survived) {
        EXPECT_LT(p.norm, threshold);
      }
      EXPECT_EQ(out.topology.contains(p.i, p.j), p.survived);
    }
    EXPECT_LE(rep.removed_sampled, rep.removed_bound * (1 + 1e-12));
    for (int t = 0; t < 300; ++t) {
      const auto x = random_x(rng, 4);
      const auto a = m.predict(x), b = out.predict(x);
      for (std::size_t c = 0; c < 2; ++c) EXPECT_LE(std::abs(a[c] - b[c]), rep.removed_bound * (1 + 1e-12) + 1e-12);
    }
  }
}

TEST(AnovaReport, SingleActiveTermAndDegenerate) {
  auto m = make_anova_model(3, 1, full_topology(3));
  m.main_units[1].gate_logit = kGateOff;
  m.head_W = {0, 2.0, 0, 0, 0, 0};
  Rng rng = stream(29, "test");
  Dataset ds;
  ds.d = 3;
  for (int n = 0; n < 50; ++n) {
    const auto x = random_x(rng, 3);
    ds.inputs.insert(ds.inputs.end(), x.begin(), x.end());
    ds.targets.push_back(0.0);
  }
  const auto rep = anova_report(m, ds);
  EXPECT_FALSE(rep.degenerate);
  EXPECT_DOUBLE_EQ(rep.shares[1].share, 1.0);
  EXPECT_EQ(rep.shares[0].share, 0.0);
  EXPECT_EQ(rep.shares[3].term, "pair_0_1");

  m.head_W.assign(6, 0.0);
  m.head_b = {3.0};
  const auto flat = anova_report(m, ds);
  EXPECT_TRUE(flat.degenerate);
  for (const auto& s : flat.shares) EXPECT_EQ(s.share, 0.0);
  EXPECT_EQ(flat.csv().substr(0, 11), "term,share\n");
  EXPECT_THROW(anova_report(m, Dataset{}), std::invalid_argument);
}

TEST(SmartSelect, FindsPlantedPair) {
  const auto ds = needle(1.0, 2000, 3);
  const auto sel = smart_select_pairs(ds, 1, 7);
  ASSERT_EQ(sel.topology.size(), 1u);
  EXPECT_EQ(sel.topology.pairs[0], std::make_pair(0, 1));
  double spurious = 0.0, planted = 0.0;
  for (const auto& [pr, s] : sel.scores) {
    double& slot = pr == std::make_pair(0, 1) ? planted : spurious;
    slot = std::max(slot, s);
  }
  EXPECT_GT(planted, 2.0 * spurious);
}

TEST(SmartSelect, DeterministicAndSaturating) {
  const auto ds = needle(0.0, 400, 4);
  const auto a = smart_select_pairs(ds, 2, 11), b = smart_select_pairs(ds, 2, 11);
  EXPECT_EQ(a.topology.pairs, b.topology.pairs);
  EXPECT_EQ(a.topology.size(), 2u);
  EXPECT_EQ(smart_select_pairs(ds, 6, 11).topology.pairs, all_pairs(4));
  EXPECT_EQ(smart_select_pairs(ds, 60, 11).topology.pairs, all_pairs(4));
}

TEST(SmartSelect, Errors) {
  const auto ds = needle(1.0, 15, 5);
  EXPECT_THROW(smart_select_pairs(ds, 0, 1), std::invalid_argument);
  try {
    smart_select_pairs(ds, 1, 1);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "insufficient data for coupling estimate");
  }
}
