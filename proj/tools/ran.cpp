// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// ran: train / eval / discover / bound / influence / ablate.
//
// Exit codes: 0 success, 2 configuration or input error, 3 training diverged.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ran/ran.hpp"

#ifndef RAN_VERSION
#define RAN_VERSION "0.1.0"
#endif

namespace {

using namespace ran;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string benchmark, data, out = ".", model, config, mlp, deep, degrees, topology, query, update, modes;
  std::uint64_t seed = 0;
  std::optional<int> epochs, batch, seeds;
  std::optional<double> lr, lambda, noise;
  double precision = 1e-5;
  double radius = 1.0;
  double eta = 1e-3;
  double threshold = 1e-2;
  int profile_points = 201;
  std::vector<std::string> argv;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<int> int_list(const std::string& s, const char* flag) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw ConfigError(std::string(flag) + ": bad integer list '" + s + "'");
    v.push_back(k);
  }
  if (v.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return v;
}

unsigned thread_cap() {
  const char* env = std::getenv("RAN_THREADS");
  if (!env || !*env) return std::max(1u, std::thread::hardware_concurrency());
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("RAN_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<unsigned>(v);
}

ModelSpec model_spec(const Options& o, ModelSpec spec) {
  if (!o.degrees.empty()) {
    const auto mn = int_list(o.degrees, "--degrees");
    if (mn.size() != 2 || mn[0] < 0 || mn[1] < 0) throw ConfigError("--degrees expects m,n");
    spec.m = mn[0];
    spec.n = mn[1];
  }
  const int kinds = !o.mlp.empty() + !o.deep.empty();
  if (kinds > 1) throw ConfigError("--mlp and --deep are exclusive");
  if (!o.topology.empty()) {
    if (kinds) throw ConfigError("--topology applies to the shallow model only");
    spec.topology = TopologySpec::parse(o.topology);
  }
  if (!o.mlp.empty()) {
    spec.kind = ModelSpec::Kind::Mlp;
    spec.hidden = int_list(o.mlp, "--mlp");
  }
  if (!o.deep.empty()) {
    const auto lw = int_list(o.deep, "--deep");
    if (lw.size() != 2 || lw[0] < 0 || lw[1] < 1) throw ConfigError("--deep expects L,width");
    spec.kind = ModelSpec::Kind::Deep;
    spec.depth = lw[0];
    spec.width = lw[1];
  }
  return spec;
}

TrainConfig train_config(const Options& o, TrainConfig c) {
  if (!o.config.empty()) c = train_config_from_json(read_json(o.config), c);
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch) {
    if (*o.batch < 0) throw ConfigError("--batch must be >= 0");
    c.batch_size = static_cast<std::size_t>(*o.batch);
  }
  if (o.lr) c.lr_main = *o.lr;
  if (o.lambda) c.group_lasso_lambda = *o.lambda;
  c.seed = o.seed;
  c.validate();
  return c;
}

Json spec_json(const ModelSpec& s) {
  return {{"kind", s.kind == ModelSpec::Kind::Ran ? "anova" : s.kind == ModelSpec::Kind::Mlp ? "mlp" : "deep"},
          {"degrees", {s.m, s.n}},
          {"topology", s.topology.str()},
          {"hidden", s.hidden},
          {"depth", s.depth},
          {"width", s.width},
          {"descriptor", s.str()}};
}

void write_manifest(const Options& o, const std::string& command, Json config) {
  Json argv = Json::array();
  for (const auto& a : o.argv) argv.push_back(a);
  write_json_atomic(fs::path(o.out) / "manifest.json", {{"tool", "ran"},
                                                        {"version", RAN_VERSION},
                                                        {"command", command},
                                                        {"argv", argv},
                                                        {"seed", o.seed},
                                                        {"config", std::move(config)}});
}

std::string metrics_csv(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::string s = "metric,value\n";
  for (const auto& [k, v] : rows) s += k + "," + v + "\n";
  return s;
}

Dataset load_data(const Options& o) {
  auto ds = load_dataset_csv(o.data);
  if (ds.domain.empty()) ds.domain = ds.bounding_box();
  return ds;
}

// ---------------------------------------------------------------------------

int cmd_train(const Options& o) {
  if (o.benchmark.empty() == o.data.empty()) throw ConfigError("train: give exactly one of --benchmark or --data");
  Protocol p = o.benchmark.empty() ? Protocol{} : default_protocol(o.benchmark);
  p.model = model_spec(o, p.model);
  p.train = train_config(o, p.train);
  if (o.noise) p.noise_sigma = *o.noise;
  const fs::path out(o.out);

  RunOutput run;
  if (!o.benchmark.empty()) {
    const auto target = find_target(o.benchmark);
    run = run_benchmark(target, p, o.seed);
  } else {
    run.train_data = load_data(o);
    if (run.train_data.classification()) p.train.loss = LossKind::SoftmaxCe;
    run.built = build_model(p.model, run.train_data, o.seed);
    run.report = std::visit([&](auto& m) { return train(m, run.train_data, p.train); }, run.built.model);
    auto& r = run.result;
    r.benchmark = o.data;
    r.model = p.model.str();
    r.params = any_param_count(run.built.model);
    r.seed = o.seed;
    r.diverged = run.report.diverged;
    r.wall_ms = run.report.wall_ms;
    if (!run.train_data.classification()) r.train_mse = detail::any_mse(run.built.model, run.train_data);
  }
  const auto& r = run.result;

  Json config = {{"subcommand", "train"},
                 {"benchmark", o.benchmark},
                 {"data", o.data},
                 {"model", spec_json(p.model)},
                 {"train", train_config_json(p.train)},
                 {"protocol", {{"n_train", p.n_train}, {"n_test", p.n_test}, {"n_extrap", p.n_extrap},
                               {"noise_sigma", p.noise_sigma}, {"grid_side", p.grid_side},
                               {"holdout_every", p.holdout_every}}}};
  if (!o.data.empty()) config.erase("protocol");
  write_manifest(o, "train", config);
  save_model(out / "model.json", run.built.model);
  std::vector<std::pair<std::string, std::string>> m = {{"params", std::to_string(r.params)},
                                                        {"seed", std::to_string(r.seed)},
                                                        {"train_mse", fmt(r.train_mse)},
                                                        {"test_mse", fmt(r.test_mse)},
                                                        {"extrap_mse", fmt(r.extrap_mse)},
                                                        {"extrap_ratio", fmt(r.extrap_ratio())},
                                                        {"final_train_loss", fmt(run.report.final_train_loss)},
                                                        {"final_val_loss", fmt(run.report.final_val_loss)},
                                                        {"best_epoch", std::to_string(run.report.best_epoch)},
                                                        {"diverged", r.diverged ? "1" : "0"}};
  if (run.train_data.classification()) {
    std::size_t hit = 0;
    for (std::size_t n = 0; n < run.train_data.size(); ++n) {
      const auto z = std::visit([&](const auto& v) { return v.predict(run.train_data.x(n)); }, run.built.model);
      hit += static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()) == run.train_data.labels[n];
    }
    m.emplace_back("train_accuracy", fmt(static_cast<double>(hit) / static_cast<double>(run.train_data.size())));
  }
  if (run.built.selection) {
    std::string pairs;
    for (const auto& [i, j] : run.built.selection->topology.pairs) pairs += (pairs.empty() ? "" : " ") + std::to_string(i) + "-" + std::to_string(j);
    m.emplace_back("selected_pairs", pairs);
  }
  write_file_atomic(out / "metrics.csv", metrics_csv(m));
  write_file_atomic(out / "train_log.csv", train_report_csv(run.report));
  write_json_atomic(out / "train_report.json", train_report_json(run.report));
  write_file_atomic(out / "results.csv", BenchmarkResult::csv_header() + "\n" + r.csv_row() + "\n");
  std::printf("%s  params=%zu  train_mse=%.3g  test_mse=%.3g  extrap_mse=%.3g%s\n", r.model.c_str(), r.params,
              r.train_mse, r.test_mse, r.extrap_mse, r.diverged ? "  DIVERGED" : "");
  if (r.diverged) {
    std::fprintf(stderr, "ran: training diverged\n");
    return kExitDiverged;
  }
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.model.empty()) throw ConfigError("eval: --model is required");
  if (o.benchmark.empty() == o.data.empty()) throw ConfigError("eval: give exactly one of --benchmark or --data");
  const auto model = load_model(o.model);
  std::vector<std::pair<std::string, Dataset>> sets;
  if (!o.data.empty()) {
    sets.emplace_back("data", load_data(o));
  } else {
    const auto t = find_target(o.benchmark);
    const auto p = default_protocol(o.benchmark);
    if (p.grid_side > 0) {
      sets.emplace_back("test", grid_holdout(t, p.grid_side, p.holdout_every).second);
    } else {
      sets.emplace_back("test", make_dataset(t, p.n_test, BoxKind::Train, 0.0, o.seed, Sampling::Uniform, "test"));
    }
    if (t.has_extrapolation())
      sets.emplace_back("extrap", make_dataset(t, p.n_extrap, BoxKind::Extrap, 0.0, o.seed, Sampling::Uniform, "extrap"));
  }
  std::vector<std::pair<std::string, std::string>> m;
  for (const auto& [name, ds] : sets) {
    const std::size_t D = std::visit([](const auto& v) { return v.input_dim(); }, model);
    if (ds.d != D) throw ConfigError("eval: model expects " + std::to_string(D) + " inputs, data has " + std::to_string(ds.d));
    if (ds.classification()) {
      m.emplace_back(name + "_ce", fmt(std::visit([&](const auto& v) { return evaluate_loss(v, ds, LossKind::SoftmaxCe); }, model)));
    } else {
      m.emplace_back(name + "_mse", fmt(detail::any_mse(model, ds)));
    }
    m.emplace_back(name + "_n", std::to_string(ds.size()));
  }
  write_manifest(o, "eval", {{"subcommand", "eval"}, {"model", o.model}, {"benchmark", o.benchmark}, {"data", o.data}});
  write_file_atomic(fs::path(o.out) / "metrics.csv", metrics_csv(m));
  for (const auto& [k, v] : m) std::printf("%s=%s\n", k.c_str(), v.c_str());
  return 0;
}

Json terms_json(const SnappedModel& s) {
  Json terms = Json::array();
  for (const auto& t : term_records(s)) {
    Json nb = Json::array(), db = Json::array();
    for (const auto& [a, b] : t.num_basis) nb.push_back({a, b});
    for (const auto& [a, b] : t.den_basis) db.push_back({a, b});
    terms.push_back({{"kind", t.kind}, {"indices", t.indices}, {"num", t.num}, {"den", t.den}, {"num_basis", nb},
                     {"den_basis", db}, {"gate", t.gate}});
  }
  Json head = Json::array(), bias = Json::array();
  for (const auto& c : s.head_W) head.push_back(c.str());
  for (const auto& c : s.head_b) bias.push_back(c.str());
  return {{"terms", terms}, {"head", {{"W", head}, {"b", bias}}}, {"unsnapped", s.unsnapped},
          {"max_snap_error", real_json(s.max_snap_error)}, {"precision", real_json(s.precision)}};
}

Json pruning_json(const TopologyReport& rep) {
  Json pairs = Json::array();
  for (const auto& p : rep.pairs)
    pairs.push_back({{"i", p.i}, {"j", p.j}, {"norm", real_json(p.norm)}, {"raw_norm", real_json(p.raw_norm)},
                     {"gate", real_json(p.gate)}, {"survived", p.survived}});
  return {{"threshold", rep.threshold}, {"removed_bound", real_json(rep.removed_bound)},
          {"removed_sampled", real_json(rep.removed_sampled)}, {"pairs", pairs}};
}

void write_discovery(const fs::path& out, const SymbolicForm& form, const AnovaModel& pruned, const Dataset& data) {
  write_file_atomic(out / "formula.txt", form.text() + "\n");
  write_json_atomic(out / "terms.json", terms_json(form.model));
  write_file_atomic(out / "anova.csv", anova_report(pruned, data).csv());
}

int cmd_discover(const Options& o) {
  const fs::path out(o.out);
  if (o.model.empty()) {
    if (o.benchmark.empty()) throw ConfigError("discover: give --model, or --benchmark to fit one first");
    const auto t = find_target(o.benchmark);
    Protocol p = default_protocol(o.benchmark);
    p.model = model_spec(o, p.model);
    p.train = train_config(o, p.train);
    p.precision = o.precision;
    p.prune_threshold = o.threshold;
    const auto r = run_discovery(t, p, o.seed);
    write_manifest(o, "discover", {{"subcommand", "discover"}, {"benchmark", o.benchmark}, {"model", spec_json(p.model)},
                                   {"train", train_config_json(p.train)}, {"precision", o.precision},
                                   {"threshold", o.threshold}});
    save_model(out / "model.json", r.model);
    write_discovery(out, r.form, r.pruned, r.train_data);
    Json rec_num = reals_json(r.recovered.num), rec_den = reals_json(r.recovered.den);
    Json report = {{"benchmark", t.name}, {"truth", t.truth.expression}, {"scored", r.scored},
                   {"normalization_failed", r.normalization_failed}, {"score", real_json(r.score)},
                   {"fit_rmse", real_json(r.fit_rmse)}, {"snapped_rmse", real_json(r.snapped_rmse)},
                   {"recovered_rmse", real_json(r.recovered_rmse)}, {"recovered", {{"num", rec_num}, {"den", rec_den}}},
                   {"complexity", r.form.complexity}, {"pruning", pruning_json(r.pruning)},
                   {"params", r.fit.params}, {"train_mse", real_json(r.fit.train_mse)},
                   {"test_mse", real_json(r.fit.test_mse)}};
    write_json_atomic(out / "report.json", report);
    std::printf("%s\nscore=%s snapped_rmse=%s\n", r.form.text().c_str(), fmt(r.score).c_str(), fmt(r.snapped_rmse).c_str());
    return r.fit.diverged ? kExitDiverged : 0;
  }
  const auto any = load_model(o.model);
  const auto* m = std::get_if<AnovaModel>(&any);
  if (!m) throw ConfigError("discover: symbolic readout needs a shallow (anova) model");
  Dataset data;
  if (!o.data.empty()) {
    data = load_data(o);
  } else if (!o.benchmark.empty()) {
    data = make_dataset(find_target(o.benchmark), 2000, BoxKind::Train, 0.0, o.seed);
  } else {
    // uniform probe of the fitted box
    const auto box = m->domain.size() == static_cast<std::size_t>(m->d)
                         ? m->domain
                         : std::vector<std::pair<double, double>>(static_cast<std::size_t>(m->d), {-1.0, 1.0});
    Rng rng = stream(o.seed, "probe");
    data.d = static_cast<std::size_t>(m->d);
    data.C = static_cast<std::size_t>(m->C);
    for (int n = 0; n < 2000; ++n) {
      std::vector<double> x;
      for (const auto& [lo, hi] : box) x.push_back(uniform(rng, lo, hi));
      const auto z = m->predict(x);
      data.inputs.insert(data.inputs.end(), x.begin(), x.end());
      data.targets.insert(data.targets.end(), z.begin(), z.end());
    }
  }
  auto [pruned, rep] = prune(*m, o.threshold, 2000, o.seed);
  const auto form = snap_to_rational(pruned, o.precision);
  write_manifest(o, "discover", {{"subcommand", "discover"}, {"model", o.model}, {"data", o.data},
                                 {"benchmark", o.benchmark}, {"precision", o.precision}, {"threshold", o.threshold}});
  write_discovery(out, form, pruned, data);
  write_json_atomic(out / "report.json", {{"complexity", form.complexity}, {"pruning", pruning_json(rep)},
                                          {"unsnapped", form.model.unsnapped},
                                          {"max_snap_error", real_json(form.model.max_snap_error)}});
  std::printf("%s\n", form.text().c_str());
  return 0;
}

int cmd_bound(const Options& o) {
  if (o.model.empty()) throw ConfigError("bound: --model is required");
  if (!(o.radius > 0.0)) throw ConfigError("bound: --radius must be > 0");
  if (o.profile_points < 2) throw ConfigError("bound: --profile-points must be >= 2");
  const auto any = load_model(o.model);
  Json units = Json::array();
  std::string profile = "unit,x,abs_derivative,K_phi\n";
  double min_margin = std::numeric_limits<double>::infinity();
  auto add_unit = [&](const std::string& name, const RationalUnit1D& u) {
    const auto rep = unit_lipschitz_bound(u, o.radius);
    min_margin = std::min(min_margin, rep.margin);
    auto j = lipschitz_json(rep);
    j["unit"] = name;
    units.push_back(j);
    for (const auto& [x, v] : derivative_profile(u, o.radius, o.profile_points))
      profile += name + "," + fmt(x) + "," + fmt(v) + "," + fmt(rep.K_phi) + "\n";
  };
  Json extra = Json::object();
  if (const auto* m = std::get_if<AnovaModel>(&any)) {
    for (std::size_t i = 0; i < m->main_units.size(); ++i) add_unit("main_" + std::to_string(i), m->main_units[i]);
  } else if (const auto* s = std::get_if<DeepRanStack>(&any)) {
    for (std::size_t l = 0; l < s->layers.size(); ++l)
      for (std::size_t k = 0; k < s->layers[l].units.size(); ++k)
        add_unit("layer" + std::to_string(l) + "_" + std::to_string(k), s->layers[l].units[k]);
    const auto nb = network_bound(*s, o.radius);
    Json layers = Json::array();
    for (const auto& lb : nb.layers)
      layers.push_back({{"alpha", real_json(lb.alpha)}, {"K_phi", real_json(lb.K_phi)},
                        {"spectral", real_json(lb.spectral)}, {"bound", real_json(lb.bound)}});
    extra = {{"layers", layers}, {"network_bound", real_json(nb.bound)}};
  } else {
    throw ConfigError("bound: the model has no rational units");
  }
  Json report = {{"radius", o.radius}, {"units", units}, {"min_margin", real_json(min_margin)}};
  report.update(extra);
  write_manifest(o, "bound", {{"subcommand", "bound"}, {"model", o.model}, {"radius", o.radius},
                              {"profile_points", o.profile_points}});
  write_json_atomic(fs::path(o.out) / "lipschitz.json", report);
  write_file_atomic(fs::path(o.out) / "lipschitz_profile.csv", profile);
  std::printf("units=%zu min_margin=%s\n", units.size(), fmt(min_margin).c_str());
  return 0;
}

int cmd_influence(const Options& o) {
  if (o.model.empty() || o.data.empty()) throw ConfigError("influence: --model and --data are required");
  if (o.query.empty() || o.update.empty()) throw ConfigError("influence: --query and --update index lists are required");
  if (!(o.eta > 0.0)) throw ConfigError("influence: --eta must be > 0");
  const auto any = load_model(o.model);
  const auto ds = load_data(o);
  const auto qs = int_list(o.query, "--query"), us = int_list(o.update, "--update");
  for (int i : qs)
    if (i < 0 || static_cast<std::size_t>(i) >= ds.size()) throw ConfigError("influence: query index " + std::to_string(i) + " out of range");
  for (int i : us)
    if (i < 0 || static_cast<std::size_t>(i) >= ds.size()) throw ConfigError("influence: update index " + std::to_string(i) + " out of range");
  const LossKind kind = ds.classification() ? LossKind::SoftmaxCe : LossKind::Mse;
  std::string csv = "t,x_u_index,x_o_index,channel,value\n";
  Json records = Json::array();
  double max_disc = 0.0;
  std::visit(
      [&](const auto& model) {
        if (model.input_dim() != ds.d) throw ConfigError("influence: model and data dimensions differ");
        for (std::size_t t = 0; t < us.size(); ++t) {
          const auto xu = ds.x(static_cast<std::size_t>(us[t]));
          UpdateExample u{{xu.begin(), xu.end()}, {}, -1};
          if (ds.classification()) {
            u.label = ds.labels[static_cast<std::size_t>(us[t])];
          } else {
            const auto y = ds.y(static_cast<std::size_t>(us[t]));
            u.y.assign(y.begin(), y.end());
          }
          for (int q : qs) {
            const auto rec = predict_influence(model, ds.x(static_cast<std::size_t>(q)), u, o.eta, kind);
            const std::size_t C = rec.predicted.size();
            auto label = [&](const std::string& ch, std::size_t c) { return C == 1 ? ch : ch + "[" + std::to_string(c) + "]"; };
            const std::string head = std::to_string(t) + "," + std::to_string(us[t]) + "," + std::to_string(q) + ",";
            for (std::size_t c = 0; c < C; ++c) {
              for (std::size_t k = 0; k < rec.channel_names.size(); ++k)
                csv += head + label(rec.channel_names[k], c) + "," + fmt(rec.channel_predicted[k][c]) + "\n";
              csv += head + label("total", c) + "," + fmt(rec.predicted[c]) + "\n";
              csv += head + label("realized", c) + "," + fmt(rec.realized[c]) + "\n";
            }
            max_disc = std::max(max_disc, rec.discrepancy);
            records.push_back({{"t", t}, {"x_u_index", us[t]}, {"x_o_index", q}, {"predicted", reals_json(rec.predicted)},
                               {"realized", reals_json(rec.realized)}, {"discrepancy", real_json(rec.discrepancy)}});
          }
        }
      },
      any);
  write_manifest(o, "influence", {{"subcommand", "influence"}, {"model", o.model}, {"data", o.data},
                                  {"query", qs}, {"update", us}, {"eta", o.eta}});
  write_file_atomic(fs::path(o.out) / "influence.csv", csv);
  write_json_atomic(fs::path(o.out) / "influence.json",
                    {{"eta", o.eta}, {"loss", std::string(to_string(kind))}, {"records", records},
                     {"max_discrepancy", real_json(max_disc)}});
  std::printf("records=%zu max_discrepancy=%s\n", records.size(), fmt(max_disc).c_str());
  return 0;
}

int cmd_ablate(const Options& o) {
  const std::string name = o.benchmark.empty() ? "needle" : o.benchmark;
  const auto t = find_target(name);
  Protocol p = default_protocol(name);
  p.model = model_spec(o, p.model);
  p.train = train_config(o, p.train);
  if (o.noise) p.noise_sigma = *o.noise;
  std::vector<std::string> modes = default_ablation_modes();
  if (!o.modes.empty()) {
    modes.clear();
    std::stringstream ss(o.modes);
    std::string item;
    while (std::getline(ss, item, ';')) modes.push_back(item);
  }
  for (const auto& m : modes) ablation_spec(m, p.model);  // reject bad modes before any work
  const int n_seeds = o.seeds.value_or(3);
  if (n_seeds < 1) throw ConfigError("--seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < n_seeds; ++k) seeds.push_back(o.seed + static_cast<std::uint64_t>(k));
  std::vector<BenchmarkResult> runs;
  const auto rows = run_ablation_topology(t, p, modes, seeds, thread_cap(), &runs);

  std::string results = BenchmarkResult::csv_header() + "\n", table = "mode,params,mean_test_mse,std_test_mse\n";
  for (const auto& r : runs) results += r.csv_row() + "\n";
  Json agg = Json::array();
  for (const auto& r : rows) {
    table += r.mode + "," + std::to_string(r.params) + "," + fmt(r.mean) + "," + fmt(r.stddev) + "\n";
    Json sel = Json::array();
    for (const auto& s : r.selected) {
      Json one = Json::array();
      for (const auto& [i, j] : s) one.push_back({i, j});
      sel.push_back(one);
    }
    agg.push_back({{"mode", r.mode}, {"params", r.params}, {"test_mse", reals_json(r.test_mse)},
                   {"mean", real_json(r.mean)}, {"std", real_json(r.stddev)}, {"selected_pairs", sel}});
  }
  Json cfg = {{"subcommand", "ablate"}, {"benchmark", name}, {"modes", modes}, {"seeds", seeds},
              {"model", spec_json(p.model)}, {"train", train_config_json(p.train)}};
  write_manifest(o, "ablate", cfg);
  write_file_atomic(fs::path(o.out) / "results.csv", results);
  write_file_atomic(fs::path(o.out) / "ablation.csv", table);
  write_json_atomic(fs::path(o.out) / "report.json", {{"benchmark", name}, {"rows", agg}});
  std::fputs(table.c_str(), stdout);
  for (const auto& r : runs)
    if (r.diverged) return kExitDiverged;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rational ANOVA networks: training, certificates, dynamics and symbolic readout", "ran"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RAN_VERSION);
  Options o;
  for (int i = 0; i < argc; ++i) o.argv.emplace_back(argv[i]);

  auto common = [&](CLI::App* s) {
    s->add_option("--out", o.out, "output directory")->capture_default_str();
    s->add_option("--seed", o.seed, "master seed")->capture_default_str();
  };
  auto fitting = [&](CLI::App* s) {
    s->add_option("--benchmark", o.benchmark, "built-in target");
    s->add_option("--data", o.data, "CSV dataset (x0..,y0.. or x0..,label)");
    s->add_option("--config", o.config, "JSON train config overlay");
    s->add_option("--epochs", o.epochs);
    s->add_option("--batch", o.batch, "mini-batch size, 0 = full batch");
    s->add_option("--lr", o.lr, "main learning rate");
    s->add_option("--lambda", o.lambda, "group-lasso strength on pair units");
    s->add_option("--degrees", o.degrees, "numerator,denominator degrees m,n");
    s->add_option("--topology", o.topology, "main | full | random:k | smart:k | pairs:i-j,...");
    s->add_option("--deep", o.deep, "deep stack L,width");
    s->add_option("--mlp", o.mlp, "ReLU baseline hidden widths h1[,h2...]");
    s->add_option("--noise", o.noise, "label noise sigma for benchmark data");
  };

  auto* train = app.add_subcommand("train", "fit a model to a benchmark or dataset");
  common(train);
  fitting(train);
  auto* eval = app.add_subcommand("eval", "score a saved model");
  common(eval);
  eval->add_option("--model", o.model, "model.json")->required();
  eval->add_option("--benchmark", o.benchmark);
  eval->add_option("--data", o.data);
  auto* discover = app.add_subcommand("discover", "prune, snap and print the symbolic form");
  common(discover);
  fitting(discover);
  discover->add_option("--model", o.model, "model.json (omit with --benchmark to fit first)");
  discover->add_option("--precision", o.precision, "snapping tolerance")->capture_default_str();
  discover->add_option("--threshold", o.threshold, "pair pruning threshold")->capture_default_str();
  auto* bound = app.add_subcommand("bound", "Lipschitz certificates for every univariate rational unit");
  common(bound);
  bound->add_option("--model", o.model, "model.json")->required();
  bound->add_option("--radius", o.radius, "input radius B")->capture_default_str();
  bound->add_option("--profile-points", o.profile_points)->capture_default_str();
  auto* influence = app.add_subcommand("influence", "first-order eNTK influence of updates on queries");
  common(influence);
  influence->add_option("--model", o.model, "model.json")->required();
  influence->add_option("--data", o.data, "CSV dataset")->required();
  influence->add_option("--query", o.query, "query row indices i,j,...")->required();
  influence->add_option("--update", o.update, "update row indices, applied in order")->required();
  influence->add_option("--eta", o.eta, "step size")->capture_default_str();
  auto* ablate = app.add_subcommand("ablate", "interaction-topology ablation over seeds");
  common(ablate);
  fitting(ablate);
  ablate->add_option("--seeds", o.seeds, "number of seeds, starting at --seed");
  ablate->add_option("--modes", o.modes, "';'-separated modes: main, random:k, smart:k, full, mlp:h");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "ran: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }
  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*discover) return cmd_discover(o);
    if (*bound) return cmd_bound(o);
    if (*influence) return cmd_influence(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const std::exception& e) {
    // bad flags, unreadable or malformed inputs, invalid configurations
    std::cerr << "ran: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
