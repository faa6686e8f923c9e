// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Model and config JSON, dataset CSV, atomic file output.
//
// Doubles are written with 17 significant digits and parsed with strtod, so
// save -> load is bit-identical. Non-finite values travel as the strings
// "inf", "-inf" and "nan".

#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "ran/anova.hpp"
#include "ran/benchmarks.hpp"
#include "ran/dataset.hpp"
#include "ran/deep.hpp"
#include "ran/mlp.hpp"
#include "ran/stability.hpp"
#include "ran/train.hpp"

namespace ran {

using Json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

/// Malformed file content; `what()` names the source and, for CSV, the line.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// numbers

inline Json real_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double json_real(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw FormatError("expected a number, got " + j.dump());
}

inline Json reals_json(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(real_json(x));
  return a;
}

inline std::vector<double> json_reals(const Json& j) {
  if (!j.is_array()) throw FormatError("expected an array of numbers, got " + j.dump());
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(json_real(e));
  return v;
}

namespace detail {
inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}
template <class T>
T get_as(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type");
  }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// units

inline Json basis_json(const std::vector<Monomial>& b) {
  Json a = Json::array();
  for (const auto& m : b) a.push_back({m.px, m.py});
  return a;
}

inline std::vector<Monomial> json_basis(const Json& j) {
  std::vector<Monomial> b;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw FormatError("basis entries are [px, py] pairs");
    b.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return b;
}

inline Json unit_json(const RationalUnit1D& u) {
  return {{"version", kModelFormatVersion},
          {"degree_num", u.degree_num()},
          {"degree_den", u.degree_den()},
          {"num_coeffs", reals_json(u.num_coeffs)},
          {"den_coeffs", reals_json(u.den_coeffs)},
          {"gate_logit", real_json(u.gate_logit)},
          {"eps", real_json(u.eps)}};
}

inline int total_degree(const std::vector<Monomial>& b) {
  int deg = 0;
  for (const auto& m : b) deg = std::max(deg, m.degree());
  return deg;
}

inline Json unit_json(const RationalUnit2D& u) {
  return {{"version", kModelFormatVersion},
          {"degree_num", total_degree(u.num_basis)},
          {"degree_den", total_degree(u.den_basis)},
          {"num_coeffs", reals_json(u.num_coeffs)},
          {"den_coeffs", reals_json(u.den_coeffs)},
          {"gate_logit", real_json(u.gate_logit)},
          {"eps", real_json(u.eps)},
          {"basis", {{"num", basis_json(u.num_basis)}, {"den", basis_json(u.den_basis)}}}};
}

inline RationalUnit1D unit1d_from_json(const Json& j) {
  RationalUnit1D u;
  u.num_coeffs = json_reals(detail::field(j, "num_coeffs"));
  u.den_coeffs = json_reals(detail::field(j, "den_coeffs"));
  u.gate_logit = json_real(detail::field(j, "gate_logit"));
  u.eps = json_real(detail::field(j, "eps"));
  if (detail::get_as<int>(j, "degree_num") != u.degree_num() || detail::get_as<int>(j, "degree_den") != u.degree_den())
    throw FormatError("unit degrees disagree with coefficient counts");
  u.validate();
  return u;
}

inline RationalUnit2D unit2d_from_json(const Json& j) {
  RationalUnit2D u;
  const auto& b = detail::field(j, "basis");
  u.num_basis = json_basis(detail::field(b, "num"));
  u.den_basis = json_basis(detail::field(b, "den"));
  u.num_coeffs = json_reals(detail::field(j, "num_coeffs"));
  u.den_coeffs = json_reals(detail::field(j, "den_coeffs"));
  u.gate_logit = json_real(detail::field(j, "gate_logit"));
  u.eps = json_real(detail::field(j, "eps"));
  u.validate();
  return u;
}

// ---------------------------------------------------------------------------
// models

inline Json model_json(const AnovaModel& m) {
  Json top = Json::array(), units = Json::array(), domain = Json::array();
  for (const auto& [i, j] : m.topology.pairs) top.push_back({i, j});
  for (const auto& u : m.main_units) units.push_back(unit_json(u));
  for (const auto& u : m.pair_units) units.push_back(unit_json(u));
  for (const auto& [lo, hi] : m.domain) domain.push_back({real_json(lo), real_json(hi)});
  return {{"version", kModelFormatVersion},
          {"kind", "anova"},
          {"d", m.d},
          {"C", m.C},
          {"topology", top},
          {"topology_seed", m.topology.seed},
          {"units", units},
          {"head", {{"W", reals_json(m.head_W)}, {"b", reals_json(m.head_b)}}},
          {"domain", domain},
          {"seed", m.seed}};
}

inline Json model_json(const DeepRanStack& s) {
  Json layers = Json::array();
  for (const auto& blk : s.layers) {
    Json units = Json::array();
    for (const auto& u : blk.units) units.push_back(unit_json(u));
    layers.push_back({{"W", reals_json(blk.W)}, {"block_gate_logit", real_json(blk.block_gate_logit)}, {"units", units}});
  }
  return {{"version", kModelFormatVersion},
          {"kind", "deep"},
          {"d", s.input_dim_},
          {"C", s.C},
          {"width", s.width},
          {"input", {{"W", reals_json(s.in_W)}, {"b", reals_json(s.in_b)}}},
          {"layers", layers},
          {"head", {{"W", reals_json(s.out_W)}, {"b", reals_json(s.out_b)}}},
          {"seed", s.seed}};
}

inline Json model_json(const Mlp& m) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < m.W.size(); ++l) layers.push_back({{"W", reals_json(m.W[l])}, {"b", reals_json(m.b[l])}});
  return {{"version", kModelFormatVersion},
          {"kind", "mlp"},
          {"d", m.widths.front()},
          {"C", m.widths.back()},
          {"widths", m.widths},
          {"layers", layers},
          {"seed", m.seed}};
}

inline Json model_json(const AnyModel& m) {
  return std::visit([](const auto& v) { return model_json(v); }, m);
}

inline AnovaModel anova_from_json(const Json& j) {
  AnovaModel m;
  m.d = detail::get_as<int>(j, "d");
  m.C = detail::get_as<int>(j, "C");
  m.seed = detail::get_as<std::uint64_t>(j, "seed");
  m.topology.d = m.d;
  m.topology.seed = j.value("topology_seed", std::uint64_t{0});
  for (const auto& p : detail::field(j, "topology")) {
    if (!p.is_array() || p.size() != 2) throw FormatError("topology entries are [i, j] pairs");
    m.topology.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
  }
  m.topology.validate();
  const auto& units = detail::field(j, "units");
  const std::size_t d = static_cast<std::size_t>(m.d), K = m.topology.size();
  if (units.size() != d + K)
    throw FormatError("expected " + std::to_string(d + K) + " units, found " + std::to_string(units.size()));
  for (std::size_t k = 0; k < d; ++k) m.main_units.push_back(unit1d_from_json(units[k]));
  for (std::size_t k = 0; k < K; ++k) m.pair_units.push_back(unit2d_from_json(units[d + k]));
  const auto& head = detail::field(j, "head");
  m.head_W = json_reals(detail::field(head, "W"));
  m.head_b = json_reals(detail::field(head, "b"));
  if (j.contains("domain"))
    for (const auto& b : j.at("domain")) m.domain.emplace_back(json_real(b.at(0)), json_real(b.at(1)));
  m.validate();
  return m;
}

inline DeepRanStack deep_from_json(const Json& j) {
  DeepRanStack s;
  s.input_dim_ = detail::get_as<int>(j, "d");
  s.C = detail::get_as<int>(j, "C");
  s.width = detail::get_as<int>(j, "width");
  s.seed = detail::get_as<std::uint64_t>(j, "seed");
  const auto& in = detail::field(j, "input");
  s.in_W = json_reals(detail::field(in, "W"));
  s.in_b = json_reals(detail::field(in, "b"));
  for (const auto& lj : detail::field(j, "layers")) {
    DeepBlock blk;
    blk.W = json_reals(detail::field(lj, "W"));
    blk.block_gate_logit = json_real(detail::field(lj, "block_gate_logit"));
    for (const auto& u : detail::field(lj, "units")) blk.units.push_back(unit1d_from_json(u));
    s.layers.push_back(std::move(blk));
  }
  const auto& head = detail::field(j, "head");
  s.out_W = json_reals(detail::field(head, "W"));
  s.out_b = json_reals(detail::field(head, "b"));
  const std::size_t w = static_cast<std::size_t>(s.width);
  bool ok = s.in_W.size() == w * s.input_dim() && s.in_b.size() == w && s.out_W.size() == s.output_dim() * w &&
            s.out_b.size() == s.output_dim();
  for (const auto& blk : s.layers) ok = ok && blk.W.size() == w * w && blk.units.size() == w;
  if (!ok) throw FormatError("deep model arrays do not match its declared shape");
  return s;
}

inline Mlp mlp_from_json(const Json& j) {
  Mlp m;
  m.widths = detail::get_as<std::vector<int>>(j, "widths");
  m.seed = detail::get_as<std::uint64_t>(j, "seed");
  for (const auto& lj : detail::field(j, "layers")) {
    m.W.push_back(json_reals(detail::field(lj, "W")));
    m.b.push_back(json_reals(detail::field(lj, "b")));
  }
  bool ok = m.widths.size() >= 2 && m.W.size() == m.widths.size() - 1;
  for (std::size_t l = 0; ok && l < m.W.size(); ++l)
    ok = m.W[l].size() == static_cast<std::size_t>(m.widths[l]) * m.widths[l + 1] &&
         m.b[l].size() == static_cast<std::size_t>(m.widths[l + 1]);
  if (!ok) throw FormatError("mlp arrays do not match its widths");
  return m;
}

inline AnyModel model_from_json(const Json& j) {
  try {
    if (detail::get_as<int>(j, "version") != kModelFormatVersion) throw FormatError("unsupported model file version");
    const auto kind = detail::get_as<std::string>(j, "kind");
    if (kind == "anova") return anova_from_json(j);
    if (kind == "deep") return deep_from_json(j);
    if (kind == "mlp") return mlp_from_json(j);
    throw FormatError("unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// files

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file, then renames it over the target.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  auto tmp = p;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename onto '" + p.string() + "': " + ec.message());
  }
}

inline void write_json_atomic(const std::filesystem::path& p, const Json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& p) {
  try {
    return Json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

inline void save_model(const std::filesystem::path& p, const AnyModel& m) { write_json_atomic(p, model_json(m)); }

inline AnyModel load_model(const std::filesystem::path& p) {
  try {
    return model_from_json(read_json(p));
  } catch (const FormatError& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// datasets

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (auto& s : cells) {
    const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
    s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
  }
  return cells;
}

inline bool indexed_name(const std::string& s, char prefix, std::size_t index) {
  return s == std::string(1, prefix) + std::to_string(index);
}
}  // namespace detail

/// Header `x0,...,x{d-1},y0[,y1...]` (regression) or `x0,...,x{d-1},label`
/// (classification, C = max label + 1).
inline Dataset parse_dataset_csv(const std::string& text, const std::string& source = "<csv>") {
  auto fail = [&](std::size_t line, const std::string& msg) -> FormatError {
    return FormatError(source + ":" + std::to_string(line) + ": " + msg);
  };
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw fail(lineno == 0 ? 1 : lineno, "empty file");
  const std::size_t header_line = lineno;
  std::size_t d = 0;
  while (d < header.size() && detail::indexed_name(header[d], 'x', d)) ++d;
  if (d == 0) throw fail(header_line, "header must start with x0");
  Dataset ds;
  ds.name = source;
  ds.d = d;
  const bool labels = header.size() == d + 1 && header[d] == "label";
  std::size_t C = header.size() - d;
  if (!labels) {
    if (C == 0) throw fail(header_line, "header has no target columns (y0... or label)");
    for (std::size_t c = 0; c < C; ++c)
      if (!detail::indexed_name(header[d + c], 'y', c))
        throw fail(header_line, "unexpected column '" + header[d + c] + "' (expected y" + std::to_string(c) + ")");
  }
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw fail(lineno, "expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto& cell = cells[k];
      char* end = nullptr;
      errno = 0;
      const double v = cell.empty() ? 0.0 : std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size())
        throw fail(lineno, "column '" + header[k] + "': not a number: '" + cell + "'");
      if (!std::isfinite(v)) throw fail(lineno, "column '" + header[k] + "': non-finite value '" + cell + "'");
      if (k < d) {
        ds.inputs.push_back(v);
      } else if (labels) {
        if (v != std::floor(v) || v < 0 || v > 1e6) throw fail(lineno, "label must be a non-negative integer: '" + cell + "'");
        ds.labels.push_back(static_cast<int>(v));
        max_label = std::max(max_label, static_cast<int>(v));
      } else {
        ds.targets.push_back(v);
      }
    }
  }
  if (ds.inputs.empty()) throw fail(lineno, "no data rows");
  ds.C = labels ? static_cast<std::size_t>(max_label + 1) : C;
  ds.validate();
  return ds;
}

inline Dataset load_dataset_csv(const std::filesystem::path& p) { return parse_dataset_csv(read_file(p), p.string()); }

inline std::string dataset_csv(const Dataset& ds) {
  std::string s;
  for (std::size_t i = 0; i < ds.d; ++i) s += (i ? ",x" : "x") + std::to_string(i);
  if (ds.classification()) {
    s += ",label";
  } else {
    for (std::size_t c = 0; c < ds.C; ++c) s += ",y" + std::to_string(c);
  }
  s += "\n";
  char buf[32];
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto x = ds.x(n);
    for (std::size_t i = 0; i < ds.d; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", x[i]);
      s += (i ? "," : "") + std::string(buf);
    }
    if (ds.classification()) {
      s += "," + std::to_string(ds.labels[n]);
    } else {
      for (double y : ds.y(n)) {
        std::snprintf(buf, sizeof buf, "%.17g", y);
        s += "," + std::string(buf);
      }
    }
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// configs and reports

inline Json train_config_json(const TrainConfig& c) {
  return {{"loss", std::string(to_string(c.loss))},
          {"lr_main", c.lr_main},
          {"lr_den_gate_scale", c.lr_den_gate_scale},
          {"weight_decay_den", c.weight_decay_den},
          {"group_lasso_lambda", c.group_lasso_lambda},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"val_fraction", c.val_fraction}};
}

/// Overlays the keys present in j onto base; unknown keys are rejected.
inline TrainConfig train_config_from_json(const Json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw FormatError("train config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "loss") base.loss = parse_loss(v.get<std::string>());
      else if (k == "lr_main") base.lr_main = v.get<double>();
      else if (k == "lr_den_gate_scale") base.lr_den_gate_scale = v.get<double>();
      else if (k == "weight_decay_den") base.weight_decay_den = v.get<double>();
      else if (k == "group_lasso_lambda") base.group_lasso_lambda = v.get<double>();
      else if (k == "batch_size") base.batch_size = v.get<std::size_t>();
      else if (k == "epochs") base.epochs = v.get<int>();
      else if (k == "seed") base.seed = v.get<std::uint64_t>();
      else if (k == "beta1") base.beta1 = v.get<double>();
      else if (k == "beta2") base.beta2 = v.get<double>();
      else if (k == "adam_eps") base.adam_eps = v.get<double>();
      else if (k == "val_fraction") base.val_fraction = v.get<double>();
      else throw FormatError("unknown train config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  base.validate();
  return base;
}

/// Wall time is left out so reruns produce identical files.
inline Json train_report_json(const TrainReport& r) {
  return {{"final_train_loss", real_json(r.final_train_loss)},
          {"final_val_loss", real_json(r.final_val_loss)},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run},
          {"skipped_steps", r.skipped_steps},
          {"diverged", r.diverged}};
}

inline std::string train_report_csv(const TrainReport& r) {
  std::string s = "epoch,train_loss,val_loss,grad_norm\n";
  char buf[128];
  for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
    const double v = e < r.val_loss.size() ? r.val_loss[e] : std::numeric_limits<double>::quiet_NaN();
    const double g = e < r.grad_norm.size() ? r.grad_norm[e] : std::numeric_limits<double>::quiet_NaN();
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e, r.train_loss[e], v, g);
    s += buf;
  }
  return s;
}

inline Json lipschitz_json(const LipschitzReport& r) {
  return {{"B", real_json(r.B)},
          {"W_P", real_json(r.W_P)},
          {"W_Q", real_json(r.W_Q)},
          {"S0_m", real_json(r.S0_m)},
          {"S1_m", real_json(r.S1_m)},
          {"S1_n", real_json(r.S1_n)},
          {"M_P", real_json(r.M_P)},
          {"M_Pp", real_json(r.M_Pp)},
          {"M_Qp", real_json(r.M_Qp)},
          {"K_phi", real_json(r.K_phi)},
          {"empirical_sup", real_json(r.empirical_sup)},
          {"margin", real_json(r.margin)},
          {"alpha", real_json(r.alpha)},
          {"gated_bound", real_json(r.gated_bound)},
          {"empirical_sup_gated", real_json(r.empirical_sup_gated)}};
}

}  // namespace ran
