// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Post-training interpretation: pruning, declared rational denominators,
// coefficient snapping, symbolic rendering, variance shares and the
// coupling-based pair selector.
//
// The trained denominator 1 + softplus(q) + eps is not a polynomial. Each unit
// is read out as P / D^, where D^ is a least-squares polynomial fit of d over
// the model's domain box; D^ is scaled to a unit constant term.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ran/anova.hpp"
#include "ran/dataset.hpp"
#include "ran/polynomial.hpp"
#include "ran/snap.hpp"
#include "ran/train.hpp"

namespace ran {

// ---------------------------------------------------------------------------
// pruning

struct PairReport {
  int i = 0, j = 0;
  double norm = 0.0;  // ||theta_ij||_2 * alpha_ij, the pruning score
  double raw_norm = 0.0;
  double gate = 0.0;
  bool survived = true;
  double coupling = std::numeric_limits<double>::quiet_NaN();
};

struct TopologyReport {
  std::vector<PairReport> pairs;
  double threshold = 0.0;
  double removed_bound = 0.0;    // certified sup over the box of |change in any output|
  double removed_sampled = 0.0;  // observed max change at probe points
};

namespace detail {

inline std::vector<std::pair<double, double>> model_box(const AnovaModel& m) {
  if (m.domain.size() == static_cast<std::size_t>(m.d)) return m.domain;
  return std::vector<std::pair<double, double>>(static_cast<std::size_t>(m.d), {-1.0, 1.0});
}

inline double abs_max(std::pair<double, double> b) { return std::max(std::abs(b.first), std::abs(b.second)); }

// sup over the box of |g(x_i, x_j)| for a gated pair unit, using d >= 1 + eps.
inline double pair_sup_bound(const RationalUnit2D& u, std::pair<double, double> bi, std::pair<double, double> bj) {
  const double a = u.gate(), xi = abs_max(bi), xj = abs_max(bj);
  double p = 0.0;
  for (std::size_t t = 0; t < u.num_basis.size(); ++t)
    p += std::abs(u.num_coeffs[t]) * std::pow(xi, u.num_basis[t].px) * std::pow(xj, u.num_basis[t].py);
  return (1.0 - a) * 0.5 * (xi + xj) + a * p / (1.0 + u.eps);
}

}  // namespace detail

inline std::vector<PairReport> topology_report(const AnovaModel& m) {
  std::vector<PairReport> out;
  for (std::size_t k = 0; k < m.pair_units.size(); ++k) {
    const auto& u = m.pair_units[k];
    double s = 0.0;
    for (double c : u.num_coeffs) s += c * c;
    for (double c : u.den_coeffs) s += c * c;
    PairReport r;
    r.i = m.topology.pairs[k].first;
    r.j = m.topology.pairs[k].second;
    r.raw_norm = std::sqrt(s);
    r.gate = u.gate();
    r.norm = r.raw_norm * r.gate;
    out.push_back(r);
  }
  return out;
}

/// Removes pair units whose gate-weighted group norm is below threshold and
/// the matching head columns.
inline std::pair<AnovaModel, TopologyReport> prune(const AnovaModel& m, double threshold, int probes = 2000,
                                                   std::uint64_t seed = 0) {
  if (!(threshold > 0.0)) throw std::invalid_argument("prune: threshold must be > 0");
  TopologyReport rep;
  rep.threshold = threshold;
  rep.pairs = topology_report(m);
  const auto box = detail::model_box(m);
  const std::size_t F = m.feature_count(), D = static_cast<std::size_t>(m.d);

  AnovaModel out = m;
  out.topology.pairs.clear();
  out.pair_units.clear();
  std::vector<std::size_t> keep_cols;
  for (std::size_t f = 0; f < D; ++f) keep_cols.push_back(f);
  std::vector<double> per_output(static_cast<std::size_t>(m.C), 0.0);
  for (std::size_t k = 0; k < m.pair_units.size(); ++k) {
    auto& r = rep.pairs[k];
    r.survived = !(r.norm < threshold);
    if (r.survived) {
      out.topology.pairs.push_back(m.topology.pairs[k]);
      out.pair_units.push_back(m.pair_units[k]);
      keep_cols.push_back(D + k);
    } else {
      const double sup = detail::pair_sup_bound(m.pair_units[k], box[static_cast<std::size_t>(r.i)],
                                                box[static_cast<std::size_t>(r.j)]);
      for (int c = 0; c < m.C; ++c)
        per_output[static_cast<std::size_t>(c)] += std::abs(m.head_W[static_cast<std::size_t>(c) * F + D + k]) * sup;
    }
  }
  out.head_W.clear();
  for (int c = 0; c < m.C; ++c)
    for (std::size_t f : keep_cols) out.head_W.push_back(m.head_W[static_cast<std::size_t>(c) * F + f]);
  out.validate();
  rep.removed_bound = per_output.empty() ? 0.0 : *std::max_element(per_output.begin(), per_output.end());

  if (out.pair_units.size() != m.pair_units.size()) {
    Rng rng = stream(seed, "probe");
    std::vector<double> x(D);
    for (int t = 0; t < probes; ++t) {
      for (std::size_t i = 0; i < D; ++i) x[i] = uniform(rng, box[i].first, box[i].second);
      const auto a = m.predict(x), b = out.predict(x);
      for (std::size_t c = 0; c < a.size(); ++c) rep.removed_sampled = std::max(rep.removed_sampled, std::abs(a[c] - b[c]));
    }
  }
  return {std::move(out), std::move(rep)};
}

// ---------------------------------------------------------------------------
// declared denominators and snapping

/// Sparse bivariate polynomial; main-effect terms use py == 0.
using MonoPoly = std::vector<std::pair<Monomial, Coef>>;

struct SnappedTerm {
  std::string kind;  // "main" or "pair"
  std::vector<int> indices;
  MonoPoly num;  // P
  MonoPoly den;  // D^, unit constant term
  Coef gate;
  double den_fit_rms = 0.0;
  double den_fit_max = 0.0;
};

/// A model read as sum_f W_cf t_f(x) + b_c, t_f = (1 - a) s + a P / D^.
struct SnappedModel {
  int d = 0;
  int C = 1;
  std::vector<SnappedTerm> terms;
  std::vector<Coef> head_W;  // C x F
  std::vector<Coef> head_b;
  int unsnapped = 0;
  double max_snap_error = 0.0;
  double precision = 0.0;

  static double eval_poly(const MonoPoly& p, double x, double y) {
    double s = 0.0;
    for (const auto& [mo, c] : p) s += c.value * std::pow(x, mo.px) * std::pow(y, mo.py);
    return s;
  }

  double term_value(std::size_t f, std::span<const double> x) const {
    const auto& t = terms[f];
    const double xi = x[static_cast<std::size_t>(t.indices[0])];
    const double yj = t.kind == "pair" ? x[static_cast<std::size_t>(t.indices[1])] : 0.0;
    const double s = t.kind == "pair" ? 0.5 * (xi + yj) : xi;
    const double a = t.gate.value;
    if (a == 0.0) return s;
    return (1.0 - a) * s + a * eval_poly(t.num, xi, yj) / eval_poly(t.den, xi, yj);
  }

  std::vector<double> eval(std::span<const double> x) const {
    const std::size_t F = terms.size();
    std::vector<double> tv(F);
    for (std::size_t f = 0; f < F; ++f) tv[f] = term_value(f, x);
    std::vector<double> z(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
      double v = head_b[static_cast<std::size_t>(c)].value;
      for (std::size_t f = 0; f < F; ++f) v += head_W[static_cast<std::size_t>(c) * F + f].value * tv[f];
      z[static_cast<std::size_t>(c)] = v;
    }
    return z;
  }
};

namespace detail {

inline Coef exact_or_real(double v) {
  if (std::isfinite(v) && std::abs(v) < 9.0e15 && v == std::round(v)) return Coef::integer(static_cast<long long>(v));
  return Coef::real(v);
}

struct DenFit {
  std::vector<double> coeffs;  // aligned with basis
  double rms = 0.0, max = 0.0;
};

inline DenFit fit_denominator_1d(const RationalUnit1D& u, std::pair<double, double> box, int points = 200) {
  const int n = u.degree_den();
  std::vector<double> xs(static_cast<std::size_t>(points)), ys(xs.size());
  for (int k = 0; k < points; ++k) {
    xs[static_cast<std::size_t>(k)] = box.first + (box.second - box.first) * k / (points - 1);
    ys[static_cast<std::size_t>(k)] = denominator_1d(u, xs[static_cast<std::size_t>(k)]);
  }
  DenFit fit;
  fit.coeffs = poly_fit(xs, ys, n);
  double ss = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = poly_eval(fit.coeffs, xs[k]) - ys[k];
    ss += r * r;
    fit.max = std::max(fit.max, std::abs(r));
  }
  fit.rms = std::sqrt(ss / static_cast<double>(xs.size()));
  return fit;
}

inline DenFit fit_denominator_2d(const RationalUnit2D& u, const std::vector<Monomial>& basis,
                                 std::pair<double, double> bx, std::pair<double, double> by, int side = 30) {
  const Eigen::Index rows = static_cast<Eigen::Index>(side) * side;
  Eigen::MatrixXd A(rows, static_cast<Eigen::Index>(basis.size()));
  Eigen::VectorXd y(rows);
  Eigen::Index r = 0;
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b, ++r) {
      const double x0 = bx.first + (bx.second - bx.first) * a / (side - 1);
      const double x1 = by.first + (by.second - by.first) * b / (side - 1);
      for (std::size_t s = 0; s < basis.size(); ++s)
        A(r, static_cast<Eigen::Index>(s)) = std::pow(x0, basis[s].px) * std::pow(x1, basis[s].py);
      y(r) = denominator_2d(u, x0, x1);
    }
  DenFit fit;
  fit.coeffs = least_squares(A, y);
  const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(fit.coeffs.data(), static_cast<Eigen::Index>(fit.coeffs.size()));
  const Eigen::VectorXd res = A * c - y;
  fit.rms = std::sqrt(res.squaredNorm() / static_cast<double>(rows));
  fit.max = res.cwiseAbs().maxCoeff();
  return fit;
}

// Scales P and D^ so D^ has constant term 1 (when that term is usable).
inline void normalize_constant(std::vector<double>& num, std::vector<double>& den) {
  const double c0 = den[0];
  if (!(std::abs(c0) > 1e-12)) return;
  for (double& v : num) v /= c0;
  for (double& v : den) v /= c0;
  den[0] = 1.0;
}

}  // namespace detail

/// Reads the model as P / D^ per unit with unsnapped coefficients.
inline SnappedModel declare_rational(const AnovaModel& m) {
  using detail::exact_or_real;
  SnappedModel s;
  s.d = m.d;
  s.C = m.C;
  const auto box = detail::model_box(m);
  for (int i = 0; i < m.d; ++i) {
    const auto& u = m.main_units[static_cast<std::size_t>(i)];
    SnappedTerm t;
    t.kind = "main";
    t.indices = {i};
    const auto fit = detail::fit_denominator_1d(u, box[static_cast<std::size_t>(i)]);
    auto num = u.num_coeffs;
    auto den = fit.coeffs;
    detail::normalize_constant(num, den);
    for (std::size_t k = 0; k < num.size(); ++k) t.num.push_back({Monomial{static_cast<int>(k), 0}, exact_or_real(num[k])});
    for (std::size_t k = 0; k < den.size(); ++k) t.den.push_back({Monomial{static_cast<int>(k), 0}, exact_or_real(den[k])});
    t.gate = exact_or_real(u.gate());
    t.den_fit_rms = fit.rms;
    t.den_fit_max = fit.max;
    s.terms.push_back(std::move(t));
  }
  for (std::size_t k = 0; k < m.pair_units.size(); ++k) {
    const auto& u = m.pair_units[k];
    const auto [i, j] = m.topology.pairs[k];
    SnappedTerm t;
    t.kind = "pair";
    t.indices = {i, j};
    std::vector<Monomial> basis{{0, 0}};
    basis.insert(basis.end(), u.den_basis.begin(), u.den_basis.end());
    const auto fit = detail::fit_denominator_2d(u, basis, box[static_cast<std::size_t>(i)], box[static_cast<std::size_t>(j)]);
    auto num = u.num_coeffs;
    auto den = fit.coeffs;
    detail::normalize_constant(num, den);
    for (std::size_t q = 0; q < num.size(); ++q) t.num.push_back({u.num_basis[q], exact_or_real(num[q])});
    for (std::size_t q = 0; q < den.size(); ++q) t.den.push_back({basis[q], exact_or_real(den[q])});
    t.gate = exact_or_real(u.gate());
    t.den_fit_rms = fit.rms;
    t.den_fit_max = fit.max;
    s.terms.push_back(std::move(t));
  }
  for (double w : m.head_W) s.head_W.push_back(exact_or_real(w));
  for (double b : m.head_b) s.head_b.push_back(exact_or_real(b));
  return s;
}

/// Snaps every coefficient of a declared model; unsnappable ones stay real.
inline SnappedModel snap_model(SnappedModel s, double precision, long long max_den = kMaxSnapDenominator) {
  if (!(precision > 0.0)) throw std::invalid_argument("snap: precision must be > 0");
  s.precision = precision;
  s.unsnapped = 0;
  s.max_snap_error = 0.0;
  auto snap = [&](Coef& c) {
    if (c.exact && c.q <= max_den) return;
    const auto r = snap_value(c.value, precision, max_den);
    if (r.snapped) {
      s.max_snap_error = std::max(s.max_snap_error, r.error);
      c = r.coef;
    } else {
      ++s.unsnapped;
    }
  };
  for (auto& t : s.terms) {
    for (auto& [mo, c] : t.num) snap(c);
    for (auto& [mo, c] : t.den) snap(c);
    snap(t.gate);
  }
  for (auto& c : s.head_W) snap(c);
  for (auto& c : s.head_b) snap(c);
  return s;
}

// ---------------------------------------------------------------------------
// rendering

struct SymbolicForm {
  SnappedModel model;
  std::vector<std::string> expressions;  // one per output
  int complexity = 0;

  std::string text() const {
    if (expressions.size() == 1) return expressions[0];
    std::string out;
    for (std::size_t c = 0; c < expressions.size(); ++c)
      out += "z_" + std::to_string(c) + " = " + expressions[c] + (c + 1 < expressions.size() ? "\n" : "");
    return out;
  }
};

namespace detail {

inline std::string var_name(int d, int i) { return d == 1 ? std::string("x") : "x_" + std::to_string(i); }

inline std::string coef_factor(const Coef& c) {
  const std::string s = c.str();
  return c.negative() ? "(" + s + ")" : s;
}

inline std::string mono_str(const Monomial& mo, const std::string& vx, const std::string& vy) {
  std::string out;
  auto add = [&](const std::string& v, int p) {
    if (p == 0) return;
    if (!out.empty()) out += "*";
    out += v;
    if (p > 1) out += "^" + std::to_string(p);
  };
  add(vx, mo.px);
  add(vy, mo.py);
  return out;
}

// Canonical order: total degree, then descending power of the first variable.
inline MonoPoly canonical(const MonoPoly& p) {
  std::map<std::pair<int, int>, Coef> acc;
  for (const auto& [mo, c] : p) {
    const std::pair<int, int> key{mo.degree(), -mo.px};
    auto it = acc.find(key);
    if (it == acc.end())
      acc.emplace(key, c);
    else
      it->second = it->second + c;
  }
  MonoPoly out;
  for (const auto& [key, c] : acc)
    if (!c.is_zero()) out.push_back({Monomial{-key.second, key.first + key.second}, c});
  return out;
}

inline std::string poly_str(const MonoPoly& p, const std::string& vx, const std::string& vy) {
  std::string out;
  for (const auto& [mo, c] : p) {
    if (!out.empty()) out += " + ";
    const std::string m = mono_str(mo, vx, vy);
    if (m.empty())
      out += coef_factor(c);
    else if (c.is_one())
      out += m;
    else
      out += coef_factor(c) + "*" + m;
  }
  return out.empty() ? "0" : out;
}

inline MonoPoly poly_product(const MonoPoly& a, const MonoPoly& b) {
  MonoPoly out;
  for (const auto& [ma, ca] : a)
    for (const auto& [mb, cb] : b) out.push_back({Monomial{ma.px + mb.px, ma.py + mb.py}, ca * cb});
  return out;
}

inline bool is_unit_poly(const MonoPoly& p) {
  const auto c = canonical(p);
  return c.size() == 1 && c[0].first.degree() == 0 && c[0].second.is_one();
}

inline bool is_constant_poly(const MonoPoly& p) {
  const auto c = canonical(p);
  return c.size() == 1 && c[0].first.degree() == 0;
}

}  // namespace detail

/// Folded numerator N = (1 - a) s D^ + a P of one term.
inline MonoPoly folded_numerator(const SnappedTerm& t) {
  const Coef one = Coef::integer(1);
  MonoPoly anchor;
  if (t.kind == "pair") {
    anchor = {{Monomial{1, 0}, Coef::fraction(1, 2)}, {Monomial{0, 1}, Coef::fraction(1, 2)}};
  } else {
    anchor = {{Monomial{1, 0}, one}};
  }
  MonoPoly n;
  const Coef keep = one - t.gate;
  if (!keep.is_zero())
    for (auto [mo, c] : detail::poly_product(anchor, t.den)) n.push_back({mo, keep * c});
  for (const auto& [mo, c] : t.num) n.push_back({mo, t.gate * c});
  return detail::canonical(n);
}

/// Renders one term t_f.
inline std::string term_str(const SnappedModel& s, const SnappedTerm& t) {
  const std::string vx = detail::var_name(s.d, t.indices[0]);
  const std::string vy = t.kind == "pair" ? detail::var_name(s.d, t.indices[1]) : std::string();
  if (t.gate.is_zero()) {
    if (t.kind == "main") return vx;
    return detail::poly_str({{Monomial{1, 0}, Coef::fraction(1, 2)}, {Monomial{0, 1}, Coef::fraction(1, 2)}}, vx, vy);
  }
  MonoPoly n = folded_numerator(t);
  if (detail::is_unit_poly(t.den)) return detail::poly_str(n, vx, vy);
  if (detail::is_constant_poly(t.den)) {
    const Coef c = detail::canonical(t.den)[0].second;
    for (auto& [mo, v] : n) v = v / c;
    return detail::poly_str(n, vx, vy);
  }
  return "(" + detail::poly_str(n, vx, vy) + ")/(" + detail::poly_str(detail::canonical(t.den), vx, vy) + ")";
}

inline int count_ops(const std::string& e) {
  return static_cast<int>(std::count_if(e.begin(), e.end(), [](char ch) { return ch == '+' || ch == '*' || ch == '/' || ch == '^'; }));
}

inline SymbolicForm symbolic_formula(const SnappedModel& s) {
  SymbolicForm f;
  f.model = s;
  const std::size_t F = s.terms.size();
  std::vector<std::string> ts;
  for (const auto& t : s.terms) ts.push_back(term_str(s, t));
  for (int c = 0; c < s.C; ++c) {
    std::string e;
    for (std::size_t k = 0; k < F; ++k) {
      const Coef& w = s.head_W[static_cast<std::size_t>(c) * F + k];
      if (w.is_zero() || ts[k] == "0") continue;
      const bool atomic = ts[k].find_first_of(" +*/^") == std::string::npos;
      const std::string body = atomic ? ts[k] : "(" + ts[k] + ")";
      if (!e.empty()) e += " + ";
      e += w.is_one() ? body : detail::coef_factor(w) + "*" + body;
    }
    const Coef& b = s.head_b[static_cast<std::size_t>(c)];
    if (!b.is_zero()) e += (e.empty() ? "" : " + ") + detail::coef_factor(b);
    if (e.empty()) e = "0";
    f.expressions.push_back(e);
    f.complexity += count_ops(e);
  }
  return f;
}

/// Rendering of the trained model without snapping.
inline SymbolicForm symbolic_formula(const AnovaModel& m) { return symbolic_formula(declare_rational(m)); }

/// Declares denominators, snaps every coefficient and renders the result.
inline SymbolicForm snap_to_rational(const AnovaModel& m, double precision) {
  return symbolic_formula(snap_model(declare_rational(m), precision));
}

/// terms.json payload (without a JSON dependency here; see io.hpp).
struct TermRecord {
  std::string kind;
  std::vector<int> indices;
  std::vector<std::string> num, den;
  std::vector<std::pair<int, int>> num_basis, den_basis;
  std::string gate;
};

inline std::vector<TermRecord> term_records(const SnappedModel& s) {
  std::vector<TermRecord> out;
  for (const auto& t : s.terms) {
    TermRecord r{t.kind, t.indices, {}, {}, {}, {}, t.gate.str()};
    for (const auto& [mo, c] : t.num) {
      r.num.push_back(c.str());
      r.num_basis.emplace_back(mo.px, mo.py);
    }
    for (const auto& [mo, c] : t.den) {
      r.den.push_back(c.str());
      r.den_basis.emplace_back(mo.px, mo.py);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// variance shares

struct AnovaShare {
  std::string term;
  double variance = 0.0;
  double share = 0.0;
};

struct AnovaReport {
  TopologyReport topology;
  std::vector<AnovaShare> shares;
  bool degenerate = false;

  std::string csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "term,share\n";
    for (const auto& s : shares) os << s.term << "," << s.share << "\n";
    return os.str();
  }
};

inline std::vector<std::string> feature_names(const AnovaModel& m) {
  std::vector<std::string> out;
  for (int i = 0; i < m.d; ++i) out.push_back("main_" + std::to_string(i));
  for (const auto& [i, j] : m.topology.pairs) out.push_back("pair_" + std::to_string(i) + "_" + std::to_string(j));
  return out;
}

/// Empirical variance of each head-weighted term over the dataset, summed over
/// outputs and normalized to sum to 1.
inline AnovaReport anova_report(const AnovaModel& m, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("anova_report: empty dataset");
  AnovaReport rep;
  rep.topology.pairs = topology_report(m);
  const std::size_t F = m.feature_count(), N = data.size();
  std::vector<double> sum(F * static_cast<std::size_t>(m.C), 0.0), sq(sum.size(), 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const auto fw = forward(m, data.x(n));
    for (int c = 0; c < m.C; ++c)
      for (std::size_t f = 0; f < F; ++f) {
        const double v = m.head_W[static_cast<std::size_t>(c) * F + f] * fw.features[f];
        sum[static_cast<std::size_t>(c) * F + f] += v;
        sq[static_cast<std::size_t>(c) * F + f] += v * v;
      }
  }
  const auto names = feature_names(m);
  double total = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    double var = 0.0;
    for (int c = 0; c < m.C; ++c) {
      const double mu = sum[static_cast<std::size_t>(c) * F + f] / static_cast<double>(N);
      var += std::max(0.0, sq[static_cast<std::size_t>(c) * F + f] / static_cast<double>(N) - mu * mu);
    }
    rep.shares.push_back({names[f], var, 0.0});
    total += var;
  }
  rep.degenerate = !(total > 0.0);
  if (!rep.degenerate)
    for (auto& s : rep.shares) s.share = s.variance / total;
  return rep;
}

// ---------------------------------------------------------------------------
// coupling-based pair selection

struct SmartSelectOptions {
  int main_epochs = 300;
  double lr = 1e-2;
  int knn = 8;
  int probes = 256;
  double step_fraction = 0.1;
  // A pair counts as coupled when its score exceeds the median by this many
  // scaled median absolute deviations; the remaining slots are filled in
  // seeded random order.
  double significance = 6.0;
};

struct SmartSelection {
  InteractionSet topology;
  std::vector<std::pair<std::pair<int, int>, double>> scores;  // every pair with C_ij
  double median = 0.0;
  double mad = 0.0;  // scaled by 1.4826
};

namespace detail {

// Mean target of the k nearest training points, distances scaled per dimension.
class KnnSurrogate {
 public:
  KnnSurrogate(const Dataset& data, std::vector<double> residual, std::vector<double> scale, int k)
      : data_(data), res_(std::move(residual)), scale_(std::move(scale)), k_(static_cast<std::size_t>(k)) {}

  double operator()(std::span<const double> x) const {
    const std::size_t N = data_.size(), D = data_.d;
    dist_.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
      const auto xn = data_.x(n);
      double s = 0.0;
      for (std::size_t i = 0; i < D; ++i) {
        const double t = (xn[i] - x[i]) / scale_[i];
        s += t * t;
      }
      dist_[n] = {s, n};
    }
    const std::size_t k = std::min(k_, N);
    std::partial_sort(dist_.begin(), dist_.begin() + static_cast<std::ptrdiff_t>(k), dist_.end());
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) acc += res_[dist_[t].second];
    return acc / static_cast<double>(k);
  }

 private:
  const Dataset& data_;
  std::vector<double> res_;
  std::vector<double> scale_;
  std::size_t k_;
  mutable std::vector<std::pair<double, std::size_t>> dist_;
};

}  // namespace detail

/// Fits main effects, then ranks pairs by the mean absolute mixed second
/// difference of a kNN residual surrogate.
inline SmartSelection smart_select_pairs(const Dataset& data, std::size_t k, std::uint64_t seed,
                                         const SmartSelectOptions& opt = {}) {
  if (k < 1) throw std::invalid_argument("smart_select_pairs: k must be >= 1");
  data.validate();
  if (data.classification()) throw std::invalid_argument("smart_select_pairs: regression targets required");
  const std::size_t D = data.d, N = data.size();
  if (N < 4 * D) throw std::invalid_argument("insufficient data for coupling estimate");
  const int d = static_cast<int>(D);
  SmartSelection sel;
  sel.topology = InteractionSet{d, {}, seed};
  if (k >= max_pairs(d)) {
    sel.topology.pairs = all_pairs(d);
  }

  AnovaModel main = make_anova_model(d, static_cast<int>(data.C), empty_topology(d));
  init_identity(main, seed);
  TrainConfig cfg;
  cfg.epochs = opt.main_epochs;
  cfg.lr_main = opt.lr;
  cfg.seed = seed;
  cfg.val_fraction = 0.0;
  train(main, data, cfg);

  auto box = data.domain.size() == D ? data.domain : data.bounding_box();
  std::vector<double> width(D);
  for (std::size_t i = 0; i < D; ++i) width[i] = std::max(box[i].second - box[i].first, 1e-12);

  std::vector<detail::KnnSurrogate> surrogates;
  for (std::size_t c = 0; c < data.C; ++c) {
    std::vector<double> res(N);
    for (std::size_t n = 0; n < N; ++n) res[n] = data.y(n)[c] - main.predict(data.x(n))[c];
    surrogates.emplace_back(data, std::move(res), width, opt.knn);
  }

  Rng rng = stream(seed, "probe");
  std::vector<std::vector<double>> probes;
  for (int t = 0; t < opt.probes; ++t) {
    std::vector<double> x(D);
    for (std::size_t i = 0; i < D; ++i) {
      const double h = opt.step_fraction * width[i];
      x[i] = uniform(rng, box[i].first + h, box[i].second - h);
    }
    probes.push_back(std::move(x));
  }

  for (const auto& [i, j] : all_pairs(d)) {
    const double hi = opt.step_fraction * width[static_cast<std::size_t>(i)];
    const double hj = opt.step_fraction * width[static_cast<std::size_t>(j)];
    double acc = 0.0;
    for (const auto& x0 : probes) {
      auto x = x0;
      auto at = [&](double si, double sj) {
        x[static_cast<std::size_t>(i)] = x0[static_cast<std::size_t>(i)] + si * hi;
        x[static_cast<std::size_t>(j)] = x0[static_cast<std::size_t>(j)] + sj * hj;
        double v = 0.0;
        for (const auto& s : surrogates) v += s(x);
        return v;
      };
      acc += std::abs((at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj));
    }
    sel.scores.push_back({{i, j}, acc / static_cast<double>(probes.size())});
  }

  std::vector<double> vals;
  for (const auto& s : sel.scores) vals.push_back(s.second);
  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  };
  sel.median = median_of(vals);
  std::vector<double> dev;
  for (double v : vals) dev.push_back(std::abs(v - sel.median));
  sel.mad = std::max(1.4826 * median_of(dev), 1e-3 * sel.median);
  if (!sel.topology.pairs.empty()) return sel;

  std::vector<std::size_t> coupled, rest;
  for (std::size_t p = 0; p < sel.scores.size(); ++p)
    (vals[p] > sel.median + opt.significance * sel.mad ? coupled : rest).push_back(p);
  std::sort(coupled.begin(), coupled.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
  Rng tie = stream(seed, "topology");
  for (std::size_t t = rest.size(); t > 1; --t) {
    std::uniform_int_distribution<std::size_t> pick(0, t - 1);
    std::swap(rest[t - 1], rest[pick(tie)]);
  }
  coupled.insert(coupled.end(), rest.begin(), rest.end());
  coupled.resize(k);
  for (std::size_t p : coupled) sel.topology.pairs.push_back(sel.scores[p].first);
  std::sort(sel.topology.pairs.begin(), sel.topology.pairs.end());
  return sel;
}

}  // namespace ran
