// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic targets, seeded dataset synthesis and the benchmark runners.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ran/anova.hpp"
#include "ran/dataset.hpp"
#include "ran/deep.hpp"
#include "ran/discovery.hpp"
#include "ran/mlp.hpp"
#include "ran/polynomial.hpp"
#include "ran/topology.hpp"
#include "ran/train.hpp"

namespace ran {

using Box = std::vector<std::pair<double, double>>;

/// Rational ground truth num/den in ascending powers of the single input;
/// multi-input targets carry only the expression.
struct GroundTruth {
  std::string expression;
  Poly num, den;
  bool scored() const { return !den.empty(); }
};

struct TargetFunction {
  std::string name;
  int d = 1;
  std::function<double(std::span<const double>)> f;
  Box train_box;
  Box extrap_box;  // empty: none; sampled as extrap_box minus train_box
  GroundTruth truth;
  double operator()(std::span<const double> x) const { return f(x); }
  bool has_extrapolation() const { return !extrap_box.empty(); }
};

// Constants for the physical-law targets (ours; see README).
inline constexpr double kMmVmax = 1.0, kMmKm = 0.5;
inline constexpr double kVdwA = 1.0, kVdwB = 0.1, kVdwRT = 1.0;
inline constexpr double kBwM2 = 2.41, kBwGamma2 = 0.2419;  // peak normalized to 1
inline constexpr int kNeedleDim = 4;

inline std::vector<TargetFunction> target_registry() {
  std::vector<TargetFunction> t;
  auto sq = [](double v) { return v * v; };
  t.push_back({"runge", 1, [](std::span<const double> x) { return 1.0 / (1.0 + 25.0 * x[0] * x[0]); },
               {{-1.0, 1.0}}, {{-2.5, 2.5}}, {"1/(1 + 25 x^2)", {1.0 / 25.0}, {1.0 / 25.0, 0.0, 1.0}}});
  t.push_back({"lorentzian", 2, [](std::span<const double> x) { return 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1]); },
               {{-4.0, 4.0}, {-4.0, 4.0}}, {}, {"1/(1 + x^2 + y^2)", {}, {}}});
  t.push_back({"lorentzian_sharp", 2,
               [](std::span<const double> x) { return 1.0 / (1.0 + 10.0 * (x[0] * x[0] + x[1] * x[1])); },
               {{-4.0, 4.0}, {-4.0, 4.0}}, {}, {"1/(1 + 10 (x^2 + y^2))", {}, {}}});
  t.push_back({"michaelis_menten", 1, [](std::span<const double> x) { return kMmVmax * x[0] / (kMmKm + x[0]); },
               {{0.1, 5.0}}, {}, {"Vmax S/(Km + S)", {0.0, kMmVmax}, {kMmKm, 1.0}}});
  t.push_back({"van_der_waals", 1,
               [](std::span<const double> x) { return kVdwRT / (x[0] - kVdwB) - kVdwA / (x[0] * x[0]); },
               {{0.3, 3.0}}, {},
               // (RT V^2 - a V + a b) / (V^3 - b V^2)
               {"RT/(V - b) - a/V^2", {kVdwA * kVdwB, -kVdwA, kVdwRT}, {0.0, 0.0, -kVdwB, 1.0}}});
  t.push_back({"breit_wigner", 1,
               [sq](std::span<const double> x) { return kBwGamma2 / (sq(x[0] * x[0] - kBwM2) + kBwGamma2); },
               {{0.0, 3.0}}, {},
               {"G^2/((E^2 - M^2)^2 + G^2)", {kBwGamma2}, {kBwM2 * kBwM2 + kBwGamma2, 0.0, -2.0 * kBwM2, 0.0, 1.0}}});
  for (double gamma : {1.0, 0.0}) {
    t.push_back({gamma == 1.0 ? "needle" : "needle_additive", kNeedleDim,
                 [gamma](std::span<const double> x) {
                   double s = 0.0;
                   for (double v : x) s += std::sin(v);
                   return s + gamma * x[0] * x[1];
                 },
                 Box(kNeedleDim, {-2.0, 2.0}), {}, {gamma == 1.0 ? "sum sin(x_i) + x_0 x_1" : "sum sin(x_i)", {}, {}}});
  }
  // Feynman equations with rational structure, on the [1, 5] input ranges
  t.push_back({"feynman_I.16.6", 3, [](std::span<const double> x) { return (x[1] + x[2]) / (1.0 + x[1] * x[2] / (x[0] * x[0])); },
               Box(3, {1.0, 5.0}), {}, {"(u + v)/(1 + u v / c^2)  [c, u, v]", {}, {}}});
  t.push_back({"feynman_I.27.6", 3, [](std::span<const double> x) { return 1.0 / (1.0 / x[0] + x[2] / x[1]); },
               Box(3, {1.0, 5.0}), {}, {"1/(1/d1 + n/d2)  [d1, d2, n]", {}, {}}});
  t.push_back({"feynman_I.18.4", 4,
               [](std::span<const double> x) { return (x[0] * x[2] + x[1] * x[3]) / (x[0] + x[1]); },
               Box(4, {1.0, 5.0}), {}, {"(m1 r1 + m2 r2)/(m1 + m2)  [m1, m2, r1, r2]", {}, {}}});
  t.push_back({"feynman_II.2.42", 5,
               [](std::span<const double> x) { return x[0] * (x[2] - x[1]) * x[3] / x[4]; },
               Box(5, {1.0, 5.0}), {}, {"kappa (T2 - T1) A / d  [kappa, T1, T2, A, d]", {}, {}}});
  return t;
}

inline TargetFunction find_target(const std::string& name) {
  for (auto& t : target_registry())
    if (t.name == name) return t;
  std::string known;
  for (const auto& t : target_registry()) known += (known.empty() ? "" : ", ") + t.name;
  throw std::invalid_argument("unknown benchmark '" + name + "' (known: " + known + ")");
}

enum class BoxKind { Train, Extrap };
enum class Sampling { Uniform, Grid };

namespace detail {
inline bool inside(std::span<const double> x, const Box& b) {
  for (std::size_t i = 0; i < b.size(); ++i)
    if (x[i] < b[i].first || x[i] > b[i].second) return false;
  return true;
}
}  // namespace detail

/// n inputs on the chosen box (uniform, or a per-axis grid for d <= 2) with
/// targets f(x) + N(0, sigma^2). `stream_name` separates independent draws.
inline Dataset make_dataset(const TargetFunction& t, std::size_t n, BoxKind box, double noise_sigma, std::uint64_t seed,
                            Sampling sampling = Sampling::Uniform, const std::string& stream_name = "train") {
  if (n < 1) throw std::invalid_argument("make_dataset: n must be >= 1");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("make_dataset: noise_sigma must be >= 0");
  if (box == BoxKind::Extrap && !t.has_extrapolation())
    throw std::invalid_argument("make_dataset: '" + t.name + "' has no extrapolation box");
  const Box& b = box == BoxKind::Train ? t.train_box : t.extrap_box;
  const std::size_t D = static_cast<std::size_t>(t.d);
  Dataset ds;
  ds.name = t.name;
  ds.d = D;
  ds.C = 1;
  ds.domain = b;
  Rng rng = stream(seed, "data/" + stream_name);
  Rng noise = stream(seed, "noise/" + stream_name);
  std::vector<double> x(D);
  auto push = [&] {
    ds.inputs.insert(ds.inputs.end(), x.begin(), x.end());
    ds.targets.push_back(t(x) + (noise_sigma > 0.0 ? normal(noise, 0.0, noise_sigma) : 0.0));
  };
  if (sampling == Sampling::Grid) {
    if (D > 2) throw std::invalid_argument("make_dataset: grid sampling supports d <= 2");
    const std::size_t side = D == 1 ? n : static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    auto at = [&](std::size_t i, std::size_t k) {
      return side == 1 ? 0.5 * (b[i].first + b[i].second)
                       : b[i].first + (b[i].second - b[i].first) * static_cast<double>(k) / static_cast<double>(side - 1);
    };
    for (std::size_t a = 0; a < side; ++a) {
      if (D == 1) {
        x[0] = at(0, a);
        if (box == BoxKind::Extrap && detail::inside(x, t.train_box)) continue;
        push();
        continue;
      }
      for (std::size_t c = 0; c < side; ++c) {
        x[0] = at(0, a);
        x[1] = at(1, c);
        if (box == BoxKind::Extrap && detail::inside(x, t.train_box)) continue;
        push();
      }
    }
    return ds;
  }
  while (ds.size() < n) {
    for (std::size_t i = 0; i < D; ++i) x[i] = uniform(rng, b[i].first, b[i].second);
    if (box == BoxKind::Extrap && detail::inside(x, t.train_box)) continue;
    push();
  }
  return ds;
}

/// side x side grid on the training box; every `every`-th point (row-major
/// index % every == every - 1) is held out.
inline std::pair<Dataset, Dataset> grid_holdout(const TargetFunction& t, std::size_t side, std::size_t every) {
  const auto grid = make_dataset(t, side * side, BoxKind::Train, 0.0, 0, Sampling::Grid);
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < grid.size(); ++i) (i % every == every - 1 ? te : tr).push_back(i);
  auto a = grid.subset(tr), b = grid.subset(te);
  a.domain = b.domain = t.train_box;
  return {a, b};
}

// ---------------------------------------------------------------------------
// model descriptions

struct TopologySpec {
  enum class Mode { Main, Random, Smart, Full, Pairs };
  Mode mode = Mode::Full;
  std::size_t k = 0;
  std::vector<std::pair<int, int>> pairs;

  static TopologySpec parse(const std::string& s) {
    TopologySpec t;
    auto number = [&](const std::string& v) {
      std::size_t used = 0;
      long long k = -1;
      try {
        k = std::stoll(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != v.size() || k < 0) throw std::invalid_argument("bad topology '" + s + "'");
      return static_cast<std::size_t>(k);
    };
    if (s == "full") {
      t.mode = Mode::Full;
    } else if (s == "main" || s == "none") {
      t.mode = Mode::Main;
    } else if (s.rfind("random:", 0) == 0) {
      t.mode = Mode::Random;
      t.k = number(s.substr(7));
    } else if (s.rfind("smart:", 0) == 0) {
      t.mode = Mode::Smart;
      t.k = number(s.substr(6));
    } else if (s.rfind("pairs:", 0) == 0) {
      t.mode = Mode::Pairs;
      std::stringstream ss(s.substr(6));
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        if (dash == std::string::npos) throw std::invalid_argument("bad topology pair '" + item + "'");
        t.pairs.emplace_back(static_cast<int>(number(item.substr(0, dash))), static_cast<int>(number(item.substr(dash + 1))));
      }
      if (t.pairs.empty()) throw std::invalid_argument("bad topology '" + s + "': no pairs");
    } else {
      throw std::invalid_argument("bad topology '" + s + "'");
    }
    return t;
  }

  std::string str() const {
    switch (mode) {
      case Mode::Main: return "main";
      case Mode::Random: return "random:" + std::to_string(k);
      case Mode::Smart: return "smart:" + std::to_string(k);
      case Mode::Full: return "full";
      case Mode::Pairs: {
        std::string s = "pairs:";
        for (std::size_t p = 0; p < pairs.size(); ++p)
          s += (p ? "," : "") + std::to_string(pairs[p].first) + "-" + std::to_string(pairs[p].second);
        return s;
      }
    }
    return "?";
  }
};

struct ModelSpec {
  enum class Kind { Ran, Mlp, Deep };
  Kind kind = Kind::Ran;
  int m = 3, n = 2;
  TopologySpec topology;
  std::vector<int> hidden;  // MLP hidden widths
  int depth = 0, width = 0;  // deep stack

  std::string str() const {
    switch (kind) {
      case Kind::Ran: return "ran(" + std::to_string(m) + "," + std::to_string(n) + ")/" + topology.str();
      case Kind::Mlp: {
        std::string s = "mlp(";
        for (std::size_t i = 0; i < hidden.size(); ++i) s += (i ? "," : "") + std::to_string(hidden[i]);
        return s + ")";
      }
      case Kind::Deep:
        return "deep(" + std::to_string(depth) + "," + std::to_string(width) + ";" + std::to_string(m) + "," +
               std::to_string(n) + ")";
    }
    return "?";
  }
};

using AnyModel = std::variant<AnovaModel, Mlp, DeepRanStack>;

inline std::size_t any_param_count(const AnyModel& m) {
  return std::visit([](const auto& v) { return v.num_params(); }, m);
}

struct BuiltModel {
  AnyModel model;
  std::optional<SmartSelection> selection;
};

/// Builds an initialized model for a dataset; smart topology runs the selector
/// on the same data.
inline BuiltModel build_model(const ModelSpec& spec, const Dataset& data, std::uint64_t seed) {
  const int d = static_cast<int>(data.d), C = static_cast<int>(data.C);
  BuiltModel out;
  switch (spec.kind) {
    case ModelSpec::Kind::Mlp: {
      std::vector<int> w{d};
      w.insert(w.end(), spec.hidden.begin(), spec.hidden.end());
      w.push_back(C);
      out.model = make_mlp(w, seed);
      return out;
    }
    case ModelSpec::Kind::Deep: {
      DeepOptions o;
      o.degree_num = spec.m;
      o.degree_den = spec.n;
      out.model = make_deep_stack(d, spec.width, spec.depth, C, seed, o);
      return out;
    }
    case ModelSpec::Kind::Ran: break;
  }
  InteractionSet top;
  switch (spec.topology.mode) {
    case TopologySpec::Mode::Main: top = empty_topology(d); break;
    case TopologySpec::Mode::Full: top = full_topology(d); break;
    case TopologySpec::Mode::Random: top = build_random_topology(d, spec.topology.k, seed); break;
    case TopologySpec::Mode::Pairs:
      top = InteractionSet{d, spec.topology.pairs, seed};
      top.validate();
      break;
    case TopologySpec::Mode::Smart: {
      auto sel = smart_select_pairs(data, spec.topology.k, seed);
      top = sel.topology;
      out.selection = std::move(sel);
      break;
    }
  }
  AnovaOptions opt;
  opt.degree_num = spec.m;
  opt.degree_den = spec.n;
  auto m = make_anova_model(d, C, std::move(top), opt);
  init_identity(m, seed);
  m.domain = data.domain.size() == data.d ? data.domain : data.bounding_box();
  out.model = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------
// runners

struct BenchmarkResult {
  std::string benchmark;
  std::string model;
  std::size_t params = 0;
  std::uint64_t seed = 0;
  double train_mse = std::numeric_limits<double>::quiet_NaN();
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double extrap_mse = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  bool diverged = false;

  double extrap_ratio() const { return extrap_mse / test_mse; }

  static std::string csv_header() { return "benchmark,model,params,seed,train_mse,test_mse,extrap_mse,wall_ms"; }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << benchmark << "," << model << "," << params << "," << seed << "," << train_mse << "," << test_mse << ","
       << extrap_mse << "," << wall_ms;
    return os.str();
  }
};

/// Data sizes and training settings of one benchmark run.
struct Protocol {
  std::size_t n_train = 200;
  std::size_t n_test = 200;
  std::size_t n_extrap = 400;
  double noise_sigma = 0.0;
  std::size_t grid_side = 0;  // > 0: grid with every `holdout_every`-th point held out
  std::size_t holdout_every = 7;
  // independent initializations on the same data and validation split; the
  // lowest validation loss wins
  int restarts = 1;
  ModelSpec model;
  TrainConfig train;
  double prune_threshold = 1e-2;
  double precision = 1e-5;
};

inline Protocol default_protocol(const std::string& name) {
  Protocol p;
  p.train.lr_main = 1e-2;
  p.train.epochs = 2000;
  if (name == "runge") {
    p.model.m = 4;
    p.model.n = 3;
    p.train.lr_main = 1e-1;
    p.train.lr_den_gate_scale = 1.0;
    p.train.epochs = 50000;  // full batch
  } else if (name == "lorentzian" || name == "lorentzian_sharp") {
    p.grid_side = 200;
    p.train.batch_size = 256;
    p.train.epochs = 60;
    p.train.lr_den_gate_scale = 1.0;
  } else if (name == "michaelis_menten" || name == "van_der_waals" || name == "breit_wigner") {
    // large denominator coefficients are needed; decay would shrink them
    p.model.m = name == "michaelis_menten" ? 2 : name == "van_der_waals" ? 3 : 4;
    p.model.n = name == "michaelis_menten" ? 2 : name == "van_der_waals" ? 3 : 4;
    p.train.lr_main = 1e-1;
    p.train.lr_den_gate_scale = 1.0;
    p.train.weight_decay_den = 0.0;
    p.train.batch_size = 16;
    p.train.epochs = name == "van_der_waals" ? 60000 : 20000;
    p.restarts = 4;
  } else if (name == "needle" || name == "needle_additive") {
    p.n_train = 2000;
    p.n_test = 1000;
    p.train.batch_size = 128;
    p.train.epochs = 1000;
  } else if (name.rfind("feynman", 0) == 0) {
    p.n_train = 2000;
    p.n_test = 1000;
    p.train.batch_size = 128;
    p.train.epochs = 400;
  }
  return p;
}

struct RunOutput {
  BenchmarkResult result;
  BuiltModel built;
  TrainReport report;
  Dataset train_data, test_data, extrap_data;
};

namespace detail {
inline double any_mse(const AnyModel& m, const Dataset& d) {
  if (d.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::visit([&](const auto& v) { return mse(v, d); }, m);
}
}  // namespace detail

/// Trains on the training box and evaluates on held-out points of the same
/// box, plus the extrapolation region when the target has one.
inline RunOutput run_benchmark(const TargetFunction& t, const Protocol& p, std::uint64_t seed) {
  RunOutput out;
  if (p.grid_side > 0) {
    std::tie(out.train_data, out.test_data) = grid_holdout(t, p.grid_side, p.holdout_every);
  } else {
    out.train_data = make_dataset(t, p.n_train, BoxKind::Train, p.noise_sigma, seed, Sampling::Uniform, "train");
    out.test_data = make_dataset(t, p.n_test, BoxKind::Train, 0.0, seed, Sampling::Uniform, "test");
  }
  if (t.has_extrapolation()) out.extrap_data = make_dataset(t, p.n_extrap, BoxKind::Extrap, 0.0, seed, Sampling::Uniform, "extrap");
  const auto t0 = std::chrono::steady_clock::now();
  if (p.restarts < 1) throw std::invalid_argument("run_benchmark: restarts must be >= 1");
  Dataset fit_part = out.train_data, val_part;
  if (p.train.val_fraction > 0.0 && out.train_data.size() >= 5)
    std::tie(fit_part, val_part) = split_dataset(out.train_data, p.train.val_fraction, seed);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < p.restarts; ++k) {
    const std::uint64_t s = k == 0 ? seed : splitmix64(seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(k));
    auto built = build_model(p.model, out.train_data, s);
    TrainConfig cfg = p.train;
    cfg.seed = s;
    auto rep = std::visit([&](auto& m) { return train(m, fit_part, cfg, val_part.size() ? &val_part : nullptr); },
                          built.model);
    const double score = rep.diverged ? std::numeric_limits<double>::infinity()
                                      : (val_part.size() ? rep.final_val_loss : rep.final_train_loss);
    if (k == 0 || score < best) {
      best = score;
      out.built = std::move(built);
      out.report = std::move(rep);
    }
  }
  auto& r = out.result;
  r.benchmark = t.name;
  r.model = p.model.str();
  r.params = any_param_count(out.built.model);
  r.seed = seed;
  r.diverged = out.report.diverged;
  r.train_mse = detail::any_mse(out.built.model, out.train_data);
  r.test_mse = detail::any_mse(out.built.model, out.test_data);
  r.extrap_mse = detail::any_mse(out.built.model, out.extrap_data);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline RunOutput run_interpolation(const TargetFunction& t, const Protocol& p, std::uint64_t seed) {
  return run_benchmark(t, p, seed);
}

inline RunOutput run_extrapolation(const TargetFunction& t, const Protocol& p, std::uint64_t seed) {
  if (!t.has_extrapolation()) throw std::invalid_argument("run_extrapolation: '" + t.name + "' has no extrapolation box");
  return run_benchmark(t, p, seed);
}

// ---------------------------------------------------------------------------
// discovery scoring

/// Single-output, single-input rational N/D.
struct Rational1D {
  Poly num, den;
  double operator()(double x) const { return poly_eval(num, x) / poly_eval(den, x); }
};

/// Folds a 1D snapped model into z = N / D over one declared denominator.
inline Rational1D fold_rational(const SnappedModel& s) {
  if (s.d != 1 || s.C != 1 || s.terms.size() != 1) throw std::invalid_argument("fold_rational: single-input, single-output model required");
  const auto& t = s.terms[0];
  Poly P, D;
  for (const auto& [mo, c] : t.num) {
    if (P.size() <= static_cast<std::size_t>(mo.px)) P.resize(static_cast<std::size_t>(mo.px) + 1, 0.0);
    P[static_cast<std::size_t>(mo.px)] += c.value;
  }
  for (const auto& [mo, c] : t.den) {
    if (D.size() <= static_cast<std::size_t>(mo.px)) D.resize(static_cast<std::size_t>(mo.px) + 1, 0.0);
    D[static_cast<std::size_t>(mo.px)] += c.value;
  }
  const double w = s.head_W[0].value, b = s.head_b[0].value, a = t.gate.value;
  if (a == 0.0) D = {1.0};
  const Poly x{0.0, 1.0};
  Poly N = poly_add(poly_scale(poly_mul(x, D), w * (1.0 - a)), poly_scale(P, w * a));
  N = poly_add(N, poly_scale(D, b));
  return {poly_trim(N), poly_trim(D)};
}

/// Removes numerator/denominator root pairs closer than tol (relative to the
/// root magnitude, floored at 1).
inline Rational1D cancel_common_roots(const Rational1D& r, double tol) {
  auto zn = poly_roots(r.num), zd = poly_roots(r.den);
  const int dn = poly_degree(r.num), dd = poly_degree(r.den);
  if (dn < 1 || dd < 1) return r;
  const double ln = r.num[static_cast<std::size_t>(dn)], ld = r.den[static_cast<std::size_t>(dd)];
  bool changed = true;
  while (changed) {
    changed = false;
    double best = tol;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < zn.size(); ++i)
      for (std::size_t j = 0; j < zd.size(); ++j) {
        const double dist = std::abs(zn[i] - zd[j]) / std::max(1.0, std::abs(zd[j]));
        if (dist < best) {
          best = dist;
          bi = i;
          bj = j;
          changed = true;
        }
      }
    if (changed) {
      zn.erase(zn.begin() + static_cast<std::ptrdiff_t>(bi));
      zd.erase(zd.begin() + static_cast<std::ptrdiff_t>(bj));
    }
  }
  return {poly_from_roots(zn, ln), poly_from_roots(zd, ld)};
}

struct DiscoveryResult {
  BenchmarkResult fit;
  AnovaModel model;   // as trained
  AnovaModel pruned;
  Dataset train_data;
  SymbolicForm form;
  TopologyReport pruning;
  Rational1D recovered;  // normalized: leading denominator coefficient 1
  bool scored = false;
  bool normalization_failed = false;
  double score = std::numeric_limits<double>::quiet_NaN();  // max |coef - truth|
  double fit_rmse = std::numeric_limits<double>::quiet_NaN();      // trained model, held-out points
  double snapped_rmse = std::numeric_limits<double>::quiet_NaN();  // snapped formula, held-out points
  double recovered_rmse = std::numeric_limits<double>::quiet_NaN();
};

/// Normalizes to a unit leading denominator coefficient and compares with
/// the ground truth, zero-padded.
inline double score_against(const Rational1D& r, const GroundTruth& g) {
  double err = 0.0;
  for (std::size_t k = 0; k < std::max(r.num.size(), g.num.size()); ++k)
    err = std::max(err, std::abs((k < r.num.size() ? r.num[k] : 0.0) - (k < g.num.size() ? g.num[k] : 0.0)));
  for (std::size_t k = 0; k < std::max(r.den.size(), g.den.size()); ++k)
    err = std::max(err, std::abs((k < r.den.size() ? r.den[k] : 0.0) - (k < g.den.size() ? g.den[k] : 0.0)));
  return err;
}

inline double root_cancel_tolerance() { return 5e-2; }

/// Normalizes a rational to leading denominator coefficient 1; false when
/// that coefficient is zero.
inline bool normalize_leading(Rational1D& r) {
  r.den = poly_trim(r.den);
  if (r.den.empty() || r.den.back() == 0.0) return false;
  const double lead = r.den.back();
  r.num = poly_scale(r.num, 1.0 / lead);
  r.den = poly_scale(r.den, 1.0 / lead);
  return true;
}

/// train -> prune -> snap -> score.
inline DiscoveryResult run_discovery(const TargetFunction& t, const Protocol& p, std::uint64_t seed) {
  if (!t.truth.scored() && t.d == 1) throw std::invalid_argument("run_discovery: no ground-truth descriptor for '" + t.name + "'");
  if (p.model.kind != ModelSpec::Kind::Ran) throw std::invalid_argument("run_discovery: needs a RAN model");
  auto run = run_benchmark(t, p, seed);
  DiscoveryResult out;
  out.fit = run.result;
  const auto& model = std::get<AnovaModel>(run.built.model);
  auto [pruned, rep] = prune(model, p.prune_threshold, 2000, seed);
  out.pruning = rep;
  out.model = model;
  out.pruned = pruned;
  out.train_data = run.train_data;
  out.form = snap_to_rational(pruned, p.precision);
  out.fit_rmse = std::sqrt(run.result.test_mse);
  double ss = 0.0;
  for (std::size_t i = 0; i < run.test_data.size(); ++i) {
    const double e = out.form.model.eval(run.test_data.x(i))[0] - run.test_data.y(i)[0];
    ss += e * e;
  }
  out.snapped_rmse = std::sqrt(ss / static_cast<double>(run.test_data.size()));
  if (t.d == 1 && t.truth.scored()) {
    out.recovered = cancel_common_roots(fold_rational(out.form.model), root_cancel_tolerance());
    if (!normalize_leading(out.recovered)) {
      out.normalization_failed = true;
      return out;
    }
    out.scored = true;
    out.score = score_against(out.recovered, t.truth);
    double rs = 0.0;
    for (std::size_t i = 0; i < run.test_data.size(); ++i) {
      const double e = out.recovered(run.test_data.x(i)[0]) - run.test_data.y(i)[0];
      rs += e * e;
    }
    out.recovered_rmse = std::sqrt(rs / static_cast<double>(run.test_data.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// topology ablation

struct AblationRow {
  std::string mode;
  std::size_t params = 0;
  std::vector<double> test_mse;  // one per seed
  std::vector<std::vector<std::pair<int, int>>> selected;
  double mean = 0.0, stddev = 0.0;
};

inline void finish_row(AblationRow& r) {
  const double n = static_cast<double>(r.test_mse.size());
  r.mean = std::accumulate(r.test_mse.begin(), r.test_mse.end(), 0.0) / n;
  double v = 0.0;
  for (double x : r.test_mse) v += (x - r.mean) * (x - r.mean);
  r.stddev = r.test_mse.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
}

/// Modes named "main", "random:k", "smart:k", "full" or "mlp:h1[,h2...]".
inline ModelSpec ablation_spec(const std::string& mode, const ModelSpec& base) {
  ModelSpec s = base;
  if (mode.rfind("mlp:", 0) == 0) {
    s.kind = ModelSpec::Kind::Mlp;
    s.hidden.clear();
    std::stringstream ss(mode.substr(4));
    std::string item;
    while (std::getline(ss, item, ',')) s.hidden.push_back(std::stoi(item));
    return s;
  }
  s.kind = ModelSpec::Kind::Ran;
  s.topology = TopologySpec::parse(mode);
  return s;
}

inline std::vector<std::string> default_ablation_modes() {
  // |S| = 0, 0.5d, 0.25d and d(d-1)/2 for d = 4, plus an ~85-parameter MLP
  return {"main", "random:2", "smart:1", "full", "mlp:14"};
}

/// Runs every mode for every seed; runs are independent and fan out over
/// `threads` workers.
inline std::vector<AblationRow> run_ablation_topology(const TargetFunction& t, const Protocol& p,
                                                      const std::vector<std::string>& modes,
                                                      const std::vector<std::uint64_t>& seeds, unsigned threads = 1,
                                                      std::vector<BenchmarkResult>* runs = nullptr) {
  std::vector<AblationRow> rows(modes.size());
  std::vector<BenchmarkResult> results(modes.size() * seeds.size());
  std::vector<std::vector<std::pair<int, int>>> chosen(results.size());
  std::size_t next = 0;
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t job;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= results.size() || failure) return;
        job = next++;
      }
      try {
        Protocol q = p;
        q.model = ablation_spec(modes[job / seeds.size()], p.model);
        auto out = run_benchmark(t, q, seeds[job % seeds.size()]);
        out.result.model = modes[job / seeds.size()];
        results[job] = out.result;
        if (const auto* m = std::get_if<AnovaModel>(&out.built.model)) chosen[job] = m->topology.pairs;
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(results.size())));
  for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  for (std::size_t job = 0; job < results.size(); ++job) {
    auto& r = rows[job / seeds.size()];
    r.mode = modes[job / seeds.size()];
    r.params = results[job].params;
    r.test_mse.push_back(results[job].test_mse);
    r.selected.push_back(chosen[job]);
  }
  for (auto& r : rows) finish_row(r);
  if (runs) *runs = results;
  return rows;
}

}  // namespace ran
