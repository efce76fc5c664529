/*
   Copyright 2026 The semiperm Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include "semiperm/coefficients.hpp"
#include "semiperm/io.hpp"
#include "semiperm/membranes.hpp"
#include "semiperm/oracles.hpp"
#include "semiperm/parallel.hpp"
#include "semiperm/scenario.hpp"
#include "semiperm/sim_limit.hpp"
#include "semiperm/sim_membrane.hpp"
#include "semiperm/stats.hpp"
#include "semiperm/svg.hpp"
#include "semiperm/transform.hpp"

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace semiperm {

using Cell = std::variant<double, long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw Error(ErrorKind::io_failure, "table row has the wrong width");
    rows.push_back(std::move(row));
  }

  void write(std::ostream& os, std::uint64_t hash) const {
    CsvWriter w(os, hash, columns);
    for (const auto& row : rows) {
      for (const auto& c : row) std::visit([&w](const auto& v) { w << v; }, c);
      w.end_row();
    }
  }
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  std::string experiment;
  Table table;
  std::vector<Check> checks;
  std::vector<std::pair<std::string, Plot>> plots;               // file stem after "plot_"
  std::vector<std::pair<std::string, std::string>> files;        // extra artifacts
  std::vector<std::string> notes;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

/*!
 * Batch experiment description. Experiment-specific settings live under
 * "options"; see docs/config.md for the schema.
 */
struct ExperimentConfig {
  std::string experiment;
  nlohmann::json scenario;
  std::vector<double> epsilons;
  std::size_t paths = 1000;
  double horizon = 1.0;
  double dt_base = 0.01;
  std::uint64_t seed = 1;
  std::string output = "out";
  nlohmann::json options = nlohmann::json::object();

  static ExperimentConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"experiment", "scenario", "epsilons", "paths", "horizon",
                                                "dt_base", "seed", "output", "options"};
    if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "config must be a JSON object");
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw Error(ErrorKind::invalid_argument, "unknown config key '" + k + "'");
    ExperimentConfig c;
    try {
      c.experiment = j.value("experiment", "");
      c.scenario = j.at("scenario");
      c.epsilons = j.value("epsilons", std::vector<double>{});
      c.paths = j.value("paths", c.paths);
      c.horizon = j.value("horizon", c.horizon);
      c.dt_base = j.value("dt_base", c.dt_base);
      c.seed = j.value("seed", c.seed);
      c.output = j.value("output", c.output);
      c.options = j.value("options", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::invalid_argument, std::string("config: ") + e.what());
    }
    return c;
  }

  /// Everything except the output directory; this is what the config hash covers.
  nlohmann::json to_json() const {
    return {{"experiment", experiment}, {"scenario", scenario}, {"epsilons", epsilons}, {"paths", paths},
            {"horizon", horizon},       {"dt_base", dt_base},   {"seed", seed},         {"options", options}};
  }

  std::uint64_t hash() const { return config_hash(to_json()); }

  void validate() const {
    static const std::set<std::string> names = {"validate", "exit-stats", "pseudo-gen", "homogenize", "fig2", "rates"};
    if (!names.count(experiment)) throw Error(ErrorKind::invalid_argument, "unknown experiment '" + experiment + "'");
    if (!options.is_object()) throw Error(ErrorKind::invalid_argument, "options must be an object");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      if (!(epsilons[i] > 0.0)) throw Error(ErrorKind::invalid_argument, "epsilons must be positive");
      if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
        throw Error(ErrorKind::invalid_argument, "epsilons must be strictly decreasing");
    }
    if (experiment != "validate" && experiment != "rates" && epsilons.empty())
      throw Error(ErrorKind::invalid_argument, "experiment needs at least one epsilon");
    if (experiment != "validate" && experiment != "rates" && paths < 2)
      throw Error(ErrorKind::invalid_argument, "paths must be at least 2");
    if (!(dt_base > 0.0) || !(horizon > 0.0)) throw Error(ErrorKind::invalid_argument, "dt_base and horizon must be positive");
  }

  template <class T>
  T opt(const char* key, T fallback) const {
    try {
      return options.value(key, fallback);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::invalid_argument, std::string("option '") + key + "': " + e.what());
    }
  }
};

namespace detail {

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

inline std::string scenario_name(const ExperimentConfig& c) { return c.scenario.value("name", "custom"); }

/// Selected checks: options.checks, or every applicable check.
class CheckSet {
 public:
  CheckSet(const ExperimentConfig& c, const std::vector<std::string>& known, const std::vector<std::string>& applicable) {
    if (c.options.contains("checks")) {
      for (const auto& n : c.options.at("checks").get<std::vector<std::string>>()) {
        if (std::find(known.begin(), known.end(), n) == known.end())
          throw Error(ErrorKind::invalid_argument, "unknown check '" + n + "' for " + c.experiment);
        if (std::find(applicable.begin(), applicable.end(), n) == applicable.end())
          throw Error(ErrorKind::invalid_argument, "check '" + n + "' does not apply to this configuration");
        names_.insert(n);
      }
    } else {
      names_.insert(applicable.begin(), applicable.end());
    }
  }
  bool operator()(const std::string& n) const { return names_.count(n) > 0; }

 private:
  std::set<std::string> names_;
};

inline Vec option_vec(const ExperimentConfig& c, const char* key, int n, double fallback = 0.0) {
  if (!c.options.contains(key)) return Vec::Constant(n, fallback);
  return vec_from_json(c.options.at(key), n, key);
}

inline SimConfig sim_config(const ExperimentConfig& c, double eps) {
  SimConfig s;
  s.epsilon = eps;
  s.dt_base = c.dt_base;
  s.horizon = c.horizon;
  s.seed = c.seed;
  s.path_count = c.paths;
  s.max_skew = c.opt("max_skew", 0.25);
  s.launch_frac = c.opt("launch_frac", 0.05);
  if (c.options.contains("box")) {
    const auto b = c.options.at("box").get<std::vector<double>>();
    if (b.size() != 2) throw Error(ErrorKind::invalid_argument, "box must be [lo, hi]");
    s.box_lo = b[0];
    s.box_hi = b[1];
  }
  s.validate();
  return s;
}

inline MembraneLayout make_layout(const FieldPtr& field, double eps, const SimConfig& s) {
  return MembraneLayout(field, eps, std::min(s.box_lo, 0.0), std::max(s.box_hi, 0.0));
}

inline ValidationReport run_validation(const ExperimentConfig& c, const CoefficientField& f) {
  const nlohmann::json g = c.opt("grid", nlohmann::json{{"lo", -5.0}, {"hi", 5.0}, {"count", 11}});
  const SamplingGrid grid = SamplingGrid::cube(f.dim(), g.value("lo", -5.0), g.value("hi", 5.0), g.value("count", 11));
  ValidationThresholds thr;
  thr.density_floor = c.opt("density_floor", thr.density_floor);
  thr.eigen_floor = c.opt("eigen_floor", thr.eigen_floor);
  thr.derivative_cap = c.opt("derivative_cap", thr.derivative_cap);
  return validate_assumptions(f, grid, thr);
}

inline std::string witness_text(const std::vector<Vec>& ws) {
  std::string s;
  for (const auto& w : ws) {
    if (!s.empty()) s += " ";
    s += "(";
    for (int i = 0; i < w.size(); ++i) s += (i ? ";" : "") + fmt(w(i));
    s += ")";
  }
  return s;
}

// Named scalar exit statistics with their MC errors and predictions.
struct Quantity {
  std::string name;
  double mc;
  double se;
  double predicted;
};

inline std::vector<Quantity> quantities(const ExitMomentEstimate& e, const ExitMoments& p) {
  const ExitMoments& m = e.value;
  std::vector<Quantity> q = {{"p_plus", m.p_plus, e.se.p_plus, p.p_plus},
                             {"mean_X", m.mean_X, e.se.mean_X, p.mean_X},
                             {"mean_X2", m.mean_X2, e.se.mean_X2, p.mean_X2},
                             {"mean_tau", m.mean_tau, e.se.mean_tau, p.mean_tau}};
  const int n = static_cast<int>(m.mean_dY.size());
  for (int i = 0; i < n; ++i)
    q.push_back({"mean_dY" + std::to_string(i + 1), m.mean_dY(i), e.se.mean_dY(i), p.mean_dY(i)});
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      q.push_back({"cov_YY" + std::to_string(i + 1) + std::to_string(j + 1), m.cov_YY(i, j), e.se.cov_YY(i, j),
                   p.cov_YY(i, j)});
  for (int i = 0; i < n; ++i)
    q.push_back({"cross_XY" + std::to_string(i + 1), m.cross_XY(i), e.se.cross_XY(i), p.cross_XY(i)});
  return q;
}

inline double zscore(double mc, double pred, double se) {
  // Degenerate quantities (X^2 on a symmetric strip) agree up to rounding.
  if (std::abs(mc - pred) <= 1e-9 * std::max(std::abs(mc), std::abs(pred))) return 0.0;
  if (se > 0.0) return (mc - pred) / se;
  return mc == pred ? 0.0 : std::numeric_limits<double>::infinity();
}

inline double max_min_ratio(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// validate

inline ExperimentResult run_validate(const ExperimentConfig& c, const CoefficientField& f) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const ValidationReport rep = detail::run_validation(c, f);
  r.table.columns = {"check", "passed", "measured", "detail", "witnesses"};
  for (const auto& ch : rep.checks) {
    r.table.add({ch.name, static_cast<long>(ch.passed), ch.measured, ch.detail, detail::witness_text(ch.witnesses)});
    std::string d = "measured " + detail::fmt(ch.measured) + "; " + ch.detail;
    if (!ch.witnesses.empty()) d += "; witnesses " + detail::witness_text(ch.witnesses);
    r.checks.push_back({ch.name, ch.passed, d});
  }
  r.files.emplace_back("validation.json", rep.to_json().dump(2) + "\n");
  r.files.emplace_back("validation.txt", rep.to_text());
  return r;
}

// ---------------------------------------------------------------------------
// exit-stats

inline ExperimentResult run_exit_stats(const ExperimentConfig& c, const FieldPtr& field) {
  const int n = field->n();
  const long k = c.opt("k", 0L);
  const Vec y = detail::option_vec(c, "y", n);
  const std::string scheme_opt = c.opt("scheme", std::string("transformed"));
  std::vector<Scheme> schemes;
  if (scheme_opt == "both") {
    schemes = {Scheme::transformed, Scheme::bernoulli};
  } else {
    schemes = {scheme_from_string(scheme_opt)};
  }
  const std::size_t ne = c.epsilons.size();
  std::vector<std::string> applicable = {"p_plus_points", "moments_3se", "normalized_10pct", "tau_finest"};
  if (ne >= 2) applicable.insert(applicable.end(), {"p_plus_slope", "stability"});
  if (ne >= 3) applicable.push_back("tau_rate");
  if (schemes.size() == 2) applicable.push_back("schemes_agree");
  const detail::CheckSet want(c,
                              {"p_plus_points", "p_plus_slope", "tau_finest", "tau_rate", "moments_3se",
                               "normalized_10pct", "schemes_agree", "stability"},
                              applicable);
  const std::size_t nu_paths = c.opt("nu_paths", std::size_t{100});

  ExperimentResult r;
  r.experiment = c.experiment;
  r.table.columns = {"scenario", "eps", "k", "scheme", "quantity", "mc", "se", "predicted", "z"};
  std::ostringstream moments_csv;
  CsvWriter mw(moments_csv, c.hash(), exit_moment_columns(n));

  std::vector<ExitMomentEstimate> est(ne * schemes.size());
  std::vector<ExitMoments> pred(ne);
  std::vector<std::vector<double>> stab(ne);  // E(t)^1..3, E exp(0.1 t), E sup|dY|^2 / eps^2, eps^2 nu
  for (std::size_t e = 0; e < ne; ++e) {
    const double eps = c.epsilons[e];
    SimConfig sc = detail::sim_config(c, eps);
    const MembraneLayout layout = detail::make_layout(field, eps, sc);
    pred[e] = asymptotic_exit_moments(layout, k, y, sc.max_skew);
    const double a_k = layout.position(k);
    const MomentKey key{detail::scenario_name(c), eps, k, y};
    write_exit_moments_row(mw, key, "asymptotic", pred[e]);
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      sc.scheme = schemes[s];
      const std::vector<ExitRecord> recs = sample_exits(layout, k, y, sc, 1 + s);
      ExitMomentEstimate& m = est[e * schemes.size() + s];
      m = estimate_exit_moments(recs, a_k);
      write_exit_moments_row(mw, key, std::string("mc-") + to_string(schemes[s]), m.value);
      for (const auto& q : detail::quantities(m, pred[e]))
        r.table.add({detail::scenario_name(c), eps, k, std::string(to_string(schemes[s])), q.name, q.mc, q.se,
                     q.predicted, detail::zscore(q.mc, q.predicted, q.se)});
      if (s == 0 && want("stability")) {
        std::vector<double> acc(5, 0.0);
        const double e2 = eps * eps;
        for (const auto& rec : recs) {
          const double t = rec.tau / e2;
          acc[0] += t;
          acc[1] += t * t;
          acc[2] += t * t * t;
          acc[3] += std::exp(0.1 * t);
          acc[4] += rec.sup_dy2 / e2;
        }
        for (double& v : acc) v /= static_cast<double>(recs.size());
        if (nu_paths > 0) {
          SimConfig pc = sc;
          pc.scheme = Scheme::transformed;
          pc.record_interval = c.horizon;
          pc.record_events = true;
          const std::vector<double> counts = parallel_map<double>(nu_paths, [&](std::size_t i) {
            RandomStream rng(c.seed, stream_id(40, i));
            const PathSample p = simulate_path(layout, a_k, y, c.horizon, pc, rng);
            return static_cast<double>(crossing_count(p, c.horizon));
          });
          double mean = 0.0;
          for (double v : counts) mean += v;
          acc.push_back(e2 * mean / static_cast<double>(nu_paths));
        }
        stab[e] = acc;
      }
    }
  }
  r.files.emplace_back("exit_moments.csv", moments_csv.str());

  const std::size_t fin = ne - 1;
  const ExitMomentEstimate& finest = est[fin * schemes.size()];
  if (want("p_plus_points")) {
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& m = est[e * schemes.size()];
      const double z = detail::zscore(m.value.p_plus, pred[e].p_plus, m.se.p_plus);
      r.checks.push_back({"p_plus_points eps=" + detail::fmt(c.epsilons[e]), std::abs(z) <= 3.0,
                          "p_plus " + detail::fmt(m.value.p_plus) + " vs " + detail::fmt(pred[e].p_plus) +
                              " (z = " + detail::fmt(z, 3) + ", tolerance 3 SE)"});
    }
  }
  if (want("p_plus_slope")) {
    std::vector<double> xs, ys, ses;
    double coef = 0.0;
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& m = est[e * schemes.size()];
      xs.push_back(c.epsilons[e]);
      ys.push_back(m.value.p_plus - 0.5);
      ses.push_back(m.se.p_plus);
      coef += (pred[e].p_plus - 0.5) / c.epsilons[e] / static_cast<double>(ne);
    }
    const auto [slope, se] = slope_through_origin(xs, ys, ses);
    r.checks.push_back({"p_plus_slope", std::abs(slope - coef) <= 0.1 * std::abs(coef),
                        "fitted slope " + detail::fmt(slope) + " (SE " + detail::fmt(se, 3) + ") vs predicted " +
                            detail::fmt(coef) + ", tolerance 10%"});
  }
  if (want("tau_finest")) {
    const double e2 = c.epsilons[fin] * c.epsilons[fin];
    const double got = finest.value.mean_tau / e2, want_v = pred[fin].mean_tau / e2;
    r.checks.push_back({"tau_finest", std::abs(got - want_v) <= 0.05 * want_v,
                        "E tau / eps^2 = " + detail::fmt(got) + " (SE " + detail::fmt(finest.se.mean_tau / e2, 3) +
                            ") vs " + detail::fmt(want_v) + " at eps=" + detail::fmt(c.epsilons[fin]) +
                            ", tolerance 5%"});
  }
  if (want("tau_rate")) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t e = 0; e < ne; ++e)
      pts.emplace_back(c.epsilons[e], std::abs(est[e * schemes.size()].value.mean_tau - pred[e].mean_tau));
    bool ok = true;
    std::string d;
    try {
      const RateFit f = fit_rate(pts);
      ok = f.slope >= 2.5;
      d = "log-log slope of |E tau - prediction| = " + detail::fmt(f.slope, 4) + ", required >= 2.5";
      r.files.emplace_back("tau_rate.json", f.to_json().dump(2) + "\n");
    } catch (const Error& ex) {
      ok = false;
      d = ex.what();
    }
    r.checks.push_back({"tau_rate", ok, d});
  }
  if (want("moments_3se")) {
    for (const auto& q : detail::quantities(finest, pred[fin])) {
      const double z = detail::zscore(q.mc, q.predicted, q.se);
      r.checks.push_back({"moments_3se " + q.name, std::abs(z) <= 3.0,
                          detail::fmt(q.mc) + " vs " + detail::fmt(q.predicted) + " (z = " + detail::fmt(z, 3) +
                              ") at eps=" + detail::fmt(c.epsilons[fin])});
    }
  }
  if (want("normalized_10pct")) {
    const double e2 = c.epsilons[fin] * c.epsilons[fin];
    const ExitMoments& m = finest.value;
    const ExitMoments& p = pred[fin];
    std::vector<std::tuple<std::string, double, double>> items = {
        {"E X / eps^2", m.mean_X / e2, p.mean_X / e2}, {"E X^2 / eps^2", m.mean_X2 / e2, p.mean_X2 / e2}};
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j)
        items.emplace_back("cov_YY" + std::to_string(i + 1) + std::to_string(j + 1) + " / E tau",
                           m.cov_YY(i, j) / m.mean_tau, p.cov_YY(i, j) / p.mean_tau);
      items.emplace_back("cross_XY" + std::to_string(i + 1) + " / E tau", m.cross_XY(i) / m.mean_tau,
                         p.cross_XY(i) / p.mean_tau);
    }
    for (const auto& [name, got, want_v] : items) {
      const double tol = std::abs(want_v) > 1e-12 ? 0.1 * std::abs(want_v) : 0.1;
      r.checks.push_back({"normalized_10pct " + name, std::abs(got - want_v) <= tol,
                          detail::fmt(got) + " vs " + detail::fmt(want_v) + ", tolerance " + detail::fmt(tol, 3)});
    }
  }
  if (want("schemes_agree")) {
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& a = est[e * 2];
      const auto& b = est[e * 2 + 1];
      const std::vector<std::tuple<std::string, double, double, double, double>> items = {
          {"p_plus", a.value.p_plus, a.se.p_plus, b.value.p_plus, b.se.p_plus},
          {"mean_tau", a.value.mean_tau, a.se.mean_tau, b.value.mean_tau, b.se.mean_tau},
          {"mean_X", a.value.mean_X, a.se.mean_X, b.value.mean_X, b.se.mean_X}};
      for (const auto& [name, va, sa, vb, sb] : items) {
        const double se = std::hypot(sa, sb);
        const double z = detail::zscore(va, vb, se);
        r.checks.push_back({"schemes_agree " + name + " eps=" + detail::fmt(c.epsilons[e]), std::abs(z) <= 3.0,
                            "transformed " + detail::fmt(va) + ", bernoulli " + detail::fmt(vb) + " (z = " +
                                detail::fmt(z, 3) + ", tolerance 3 combined SE)"});
      }
    }
  }
  if (want("stability")) {
    std::vector<std::string> names = {"E (tau/eps^2)^1", "E (tau/eps^2)^2", "E (tau/eps^2)^3", "E exp(0.1 tau/eps^2)",
                                      "E sup|Y-y|^2 / eps^2"};
    if (nu_paths > 0) names.push_back("eps^2 nu_T");
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j == 4 && n == 0) continue;
      std::vector<double> v;
      std::string vals;
      for (std::size_t e = 0; e < ne; ++e) {
        v.push_back(stab[e][j]);
        vals += (e ? ", " : "") + detail::fmt(stab[e][j], 4);
      }
      const double ratio = detail::max_min_ratio(v);
      r.checks.push_back({"stability " + names[j], ratio <= 2.0,
                          "values [" + vals + "], max/min " + detail::fmt(ratio, 4) + ", tolerance 2"});
    }
  }

  Plot pp{"exit probability shift", "eps", "p_plus - 1/2", false, false, false, {}};
  Series mc{"Monte Carlo", {}, {}, true}, pr{"asymptotic", {}, {}, false};
  Plot pt{"mean exit time", "eps", "E tau / eps^2", false, false, false, {}};
  Series tmc{"Monte Carlo", {}, {}, true}, tpr{"asymptotic", {}, {}, false};
  for (std::size_t e = 0; e < ne; ++e) {
    const double eps = c.epsilons[e];
    mc.x.push_back(eps);
    mc.y.push_back(est[e * schemes.size()].value.p_plus - 0.5);
    pr.x.push_back(eps);
    pr.y.push_back(pred[e].p_plus - 0.5);
    tmc.x.push_back(eps);
    tmc.y.push_back(est[e * schemes.size()].value.mean_tau / (eps * eps));
    tpr.x.push_back(eps);
    tpr.y.push_back(pred[e].mean_tau / (eps * eps));
  }
  pp.series = {mc, pr};
  pt.series = {tmc, tpr};
  r.plots.emplace_back("p_plus", pp);
  r.plots.emplace_back("mean_tau", pt);
  return r;
}

// ---------------------------------------------------------------------------
// pseudo-gen

inline ExperimentResult run_pseudo_gen(const ExperimentConfig& c, const FieldPtr& field) {
  const int n = field->n();
  const long k = c.opt("k", 0L);
  const Vec y = detail::option_vec(c, "y", n);
  std::vector<std::string> fallback = {"x", "x2"};
  if (n >= 1) fallback.insert(fallback.end(), {"y", "y2", "xy"});
  const auto fnames = c.opt("test_functions", fallback);
  const bool cv = c.opt("control_variate", true);
  const std::string scheme = c.opt("scheme", std::string("transformed"));
  const detail::CheckSet want(c, {"decreasing", "bound"}, {"decreasing", "bound"});

  ExperimentResult r;
  r.experiment = c.experiment;
  r.table.columns = {"scenario", "f", "eps", "estimate", "ci", "generator", "error"};
  Plot plot{"pseudo-generator error", "eps", "|L^eps f - L f|", true, true, false, {}};
  for (std::size_t fi = 0; fi < fnames.size(); ++fi) {
    const TestFunctionPtr tf = make_test_function(fnames[fi], field->dim());
    Series s{fnames[fi], {}, {}, true};
    std::vector<double> err, ci;
    double L = 0.0;
    for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
      const double eps = c.epsilons[e];
      SimConfig sc = detail::sim_config(c, eps);
      sc.scheme = scheme_from_string(scheme);
      const MembraneLayout layout = detail::make_layout(field, eps, sc);
      const Vec z = make_point(layout.position(k), y);
      L = apply_generator(*field, *tf, z);
      const RatioEstimate est = pseudo_generator_estimate(layout, *tf, k, y, sc, cv, 7 + fi);
      err.push_back(est.value - L);
      ci.push_back(est.ci);
      r.table.add({detail::scenario_name(c), fnames[fi], eps, est.value, est.ci, L, est.value - L});
      s.x.push_back(eps);
      s.y.push_back(std::abs(est.value - L));
    }
    plot.series.push_back(s);
    if (want("decreasing")) {
      bool ok = true;
      std::string vals;
      for (std::size_t e = 0; e < err.size(); ++e) {
        vals += (e ? ", " : "") + detail::fmt(std::abs(err[e]), 3) + " +- " + detail::fmt(ci[e], 2);
        if (e > 0 && std::abs(err[e]) > std::abs(err[e - 1]) + std::hypot(ci[e], ci[e - 1])) ok = false;
      }
      r.checks.push_back({"decreasing " + fnames[fi], ok,
                          "|error| along eps: [" + vals + "]; no step may grow by more than the combined CI"});
    }
    if (want("bound")) {
      const double tol = std::max(3.0 * ci.back(), 0.15 * (std::abs(L) + 0.1));
      r.checks.push_back({"bound " + fnames[fi], std::abs(err.back()) <= tol,
                          "|error| " + detail::fmt(std::abs(err.back()), 4) + " at eps=" +
                              detail::fmt(c.epsilons.back()) + ", L f = " + detail::fmt(L) + ", tolerance " +
                              detail::fmt(tol, 4)});
    }
  }
  r.plots.emplace_back("pseudo_gen", plot);
  return r;
}

// ---------------------------------------------------------------------------
// homogenize

inline ExperimentResult run_homogenize(const ExperimentConfig& c, const FieldPtr& field) {
  const int n = field->n();
  const double x0 = c.opt("x0", 0.0);
  const Vec y0 = detail::option_vec(c, "y0", n);
  const std::string reference = c.opt("reference", std::string("sample"));
  const double limit_dt = c.opt("limit_dt", 1e-3);
  const double tol = c.opt("ks_tolerance", 0.05);
  const long max_inv = c.opt("max_inversions", 1L);
  const double T = c.horizon;
  const std::vector<std::string> app = c.epsilons.size() >= 2 ? std::vector<std::string>{"ks_monotone", "ks_final"}
                                                              : std::vector<std::string>{"ks_final"};
  const detail::CheckSet want(c, {"ks_monotone", "ks_final"}, app);

  std::function<double(double)> cdf;
  std::vector<double> ref_sample;
  if (reference == "exact") {
    // Constant coefficients: the limit marginal of X is Gaussian.
    const Vec p0 = make_point(x0, y0);
    const double mean = x0 + limit_drift(*field, p0).total()(0) * T;
    const double sd = std::sqrt(sigma_gram(*field, p0)(0, 0) * T);
    const boost::math::normal_distribution<double> nd(mean, sd);
    cdf = [nd](double x) { return boost::math::cdf(nd, x); };
  } else if (reference == "sample") {
    ref_sample = parallel_map<double>(c.paths, [&](std::size_t i) {
      RandomStream rng(c.seed, stream_id(60, i));
      return simulate_limit_path(*field, x0, y0, T, limit_dt, rng, T).states.back()(0);
    });
  } else {
    throw Error(ErrorKind::invalid_argument, "reference must be 'exact' or 'sample'");
  }

  ExperimentResult r;
  r.experiment = c.experiment;
  r.table.columns = {"scenario", "eps", "paths", "ks", "mean_X", "var_X", "truncated"};
  std::vector<double> ks;
  std::vector<double> finest;
  for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
    const double eps = c.epsilons[e];
    SimConfig sc = detail::sim_config(c, eps);
    sc.record_interval = T;
    sc.record_events = false;
    const MembraneLayout layout = detail::make_layout(field, eps, sc);
    std::vector<int> trunc(c.paths, 0);
    std::vector<double> xs = parallel_map<double>(c.paths, [&](std::size_t i) {
      RandomStream rng(c.seed, stream_id(61 + e, i));
      const PathSample p = simulate_path(layout, x0, y0, T, sc, rng);
      trunc[i] = p.truncated;
      return p.states.back()(0);
    });
    const double d = reference == "exact" ? ks_statistic(xs, cdf) : ks_statistic(xs, ref_sample);
    ks.push_back(d);
    double m = 0.0, v = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    for (double x : xs) v += (x - m) * (x - m);
    v /= static_cast<double>(xs.size() - 1);
    long tr = 0;
    for (int t : trunc) tr += t;
    r.table.add({detail::scenario_name(c), eps, static_cast<long>(c.paths), d, m, v, tr});
    if (e + 1 == c.epsilons.size()) finest = std::move(xs);
  }

  std::string vals;
  long inversions = 0;
  for (std::size_t e = 0; e < ks.size(); ++e) {
    vals += (e ? ", " : "") + detail::fmt(ks[e], 4);
    if (e > 0 && ks[e] > ks[e - 1]) ++inversions;
  }
  if (want("ks_monotone"))
    r.checks.push_back({"ks_monotone", inversions <= max_inv,
                        "KS along eps: [" + vals + "], " + std::to_string(inversions) + " inversion(s), allowed " +
                            std::to_string(max_inv)});
  if (want("ks_final"))
    r.checks.push_back({"ks_final", ks.back() <= tol,
                        "KS " + detail::fmt(ks.back(), 4) + " at eps=" + detail::fmt(c.epsilons.back()) +
                            ", tolerance " + detail::fmt(tol, 3) + " (95% noise level about " +
                            detail::fmt(1.36 / std::sqrt(static_cast<double>(c.paths)), 3) + ")"});

  Plot kp{"KS distance to the limit law", "eps", "KS", true, false, false, {}};
  kp.series.push_back(Series{"KS", c.epsilons, ks, true});
  r.plots.emplace_back("ks", kp);
  Plot cp{"marginal CDF of X at T", "x", "F(x)", false, false, false, {}};
  std::sort(finest.begin(), finest.end());
  Series emp{"eps=" + detail::fmt(c.epsilons.back()), {}, {}, false};
  const std::size_t stride = std::max<std::size_t>(1, finest.size() / 400);
  for (std::size_t i = 0; i < finest.size(); i += stride) {
    emp.x.push_back(finest[i]);
    emp.y.push_back(static_cast<double>(i + 1) / static_cast<double>(finest.size()));
  }
  Series lim{"limit", {}, {}, false};
  if (reference == "exact") {
    for (double x : emp.x) {
      lim.x.push_back(x);
      lim.y.push_back(cdf(x));
    }
  } else {
    std::sort(ref_sample.begin(), ref_sample.end());
    for (std::size_t i = 0; i < ref_sample.size(); i += stride) {
      lim.x.push_back(ref_sample[i]);
      lim.y.push_back(static_cast<double>(i + 1) / static_cast<double>(ref_sample.size()));
    }
  }
  cp.series = {emp, lim};
  r.plots.emplace_back("cdf", cp);
  return r;
}

// ---------------------------------------------------------------------------
// fig2

inline ExperimentResult run_fig2(const ExperimentConfig& c, const FieldPtr& field) {
  if (field->n() != 1) throw Error(ErrorKind::dimension_mismatch, "fig2 needs a planar scenario");
  const auto start = c.opt("start", std::vector<double>{2.0, 2.0});
  if (start.size() != 2) throw Error(ErrorKind::invalid_argument, "start must be [x, y]");
  const double x0 = start[0];
  const Vec y0 = Vec::Constant(1, start[1]);
  const double T = c.horizon;
  const double eps = c.epsilons.front();
  const double free_dt = c.opt("free_dt", 1e-3);
  const double limit_dt = c.opt("limit_dt", 1e-3);
  const double rec = c.opt("record_interval", 1e-2);
  const double alpha = c.opt("alpha", 0.01);
  const detail::CheckSet want(c, {"free_positive", "eps_negative", "limit_negative", "sign_test"},
                              {"free_positive", "eps_negative", "limit_negative", "sign_test"});

  SimConfig sc = detail::sim_config(c, eps);
  sc.record_interval = rec;
  sc.record_events = false;
  const MembraneLayout layout = detail::make_layout(field, eps, sc);

  struct Run {
    double angle;
    double skipped;
    bool truncated;
  };
  PathSample first_free, first_limit, first_eps;
  auto run = [&](int system, std::size_t i, PathSample* keep) {
    RandomStream rng(c.seed, stream_id(80 + system, i));
    PathSample p;
    if (system == 0) p = simulate_free_path(*field, x0, y0, T, free_dt, rng, rec);
    if (system == 1) p = simulate_path(layout, x0, y0, T, sc, rng);
    if (system == 2) p = simulate_limit_path(*field, x0, y0, T, limit_dt, rng, rec);
    const WindingAngle w = winding_angle(p);
    if (keep) *keep = p;
    return Run{w.angle, w.skipped_fraction, p.truncated};
  };

  ExperimentResult r;
  r.experiment = c.experiment;
  r.table.columns = {"system", "path", "winding", "skipped_fraction", "truncated"};
  const char* names[] = {"free", "eps", "limit"};
  PathSample* keeps[] = {&first_free, &first_eps, &first_limit};
  for (int s = 0; s < 3; ++s) {
    std::vector<Run> runs = parallel_map<Run>(c.paths, [&](std::size_t i) { return run(s, i, nullptr); });
    run(s, 0, keeps[s]);
    double mean = 0.0;
    std::size_t pos = 0, nonzero = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      r.table.add({std::string(names[s]), static_cast<long>(i), runs[i].angle, runs[i].skipped,
                   static_cast<long>(runs[i].truncated)});
      mean += runs[i].angle;
      pos += runs[i].angle > 0.0;
      nonzero += runs[i].angle != 0.0;
    }
    mean /= static_cast<double>(runs.size());
    const double pval = sign_test_p_value(pos, nonzero);
    const bool expect_positive = s == 0;
    const std::string check = s == 0 ? "free_positive" : (s == 1 ? "eps_negative" : "limit_negative");
    if (want(check))
      r.checks.push_back({check, expect_positive ? mean > 0.0 : mean < 0.0,
                          "mean winding " + detail::fmt(mean, 4) + " rad over " + std::to_string(runs.size()) +
                              " paths"});
    if (want("sign_test")) {
      const bool dir = expect_positive ? 2 * pos > nonzero : 2 * pos < nonzero;
      r.checks.push_back({std::string("sign_test ") + names[s], dir && pval < alpha,
                          std::to_string(pos) + " of " + std::to_string(nonzero) + " positive, p = " +
                              detail::fmt(pval, 3) + ", level " + detail::fmt(alpha, 3)});
    }
  }

  auto path_plot = [&](const std::string& title, const PathSample& p) {
    Plot pl{title, "x", "y", false, false, true, {}};
    Series s{"path from (" + detail::fmt(x0) + ", " + detail::fmt(start[1]) + ")", {}, {}, false};
    for (const Vec& v : p.states) {
      s.x.push_back(v(0));
      s.y.push_back(v(1));
    }
    pl.series.push_back(s);
    return pl;
  };
  r.plots.emplace_back("free_path", path_plot("without membranes", first_free));
  r.plots.emplace_back("limit_path", path_plot("homogenized limit", first_limit));
  r.plots.emplace_back("eps_path", path_plot("membranes, eps=" + detail::fmt(eps), first_eps));
  std::ostringstream frame;
  write_path_frame(frame, first_eps, c.hash());
  r.files.emplace_back("path_eps.sppf", frame.str());
  return r;
}

// ---------------------------------------------------------------------------
// rates

namespace detail {

struct ChartRegion {
  double center;
  double y_lo;
  double y_hi;
};

inline std::vector<ChartRegion> regions_from(const nlohmann::json& j) {
  std::vector<ChartRegion> out;
  for (const auto& g : j)
    out.push_back({g.value("center", 0.0), g.value("y_lo", -2.0), g.value("y_hi", 2.0)});
  return out;
}

}  // namespace detail

inline ExperimentResult run_rates(const ExperimentConfig& c, const FieldPtr& field) {
  const detail::CheckSet want(
      c, {"roundtrip", "expansion", "oracle_identities", "oracle_mc", "tanaka"},
      {"roundtrip", "expansion", "oracle_identities", "oracle_mc", "tanaka"});
  ExperimentResult r;
  r.experiment = c.experiment;
  r.table.columns = {"measurement", "label", "eps", "value"};

  if (want("roundtrip")) {
    nlohmann::json sets = c.opt("roundtrip", nlohmann::json::array());
    if (sets.empty()) sets.push_back({{"scenario", c.scenario}});
    const double eps = c.opt("roundtrip_eps", 0.05);
    const std::size_t points = c.opt("roundtrip_points", std::size_t{10000});
    const double max_skew = c.opt("max_skew", 0.25);
    for (std::size_t si = 0; si < sets.size(); ++si) {
      const nlohmann::json spec = sets[si].value("scenario", c.scenario);
      const FieldPtr f = build_scenario(spec);
      std::vector<detail::ChartRegion> regions =
          sets[si].contains("regions") ? detail::regions_from(sets[si]["regions"])
                                       : std::vector<detail::ChartRegion>{{0.0, -2.0, 2.0}};
      RandomStream rng(c.seed, stream_id(90, si));
      double worst = 0.0;
      for (std::size_t gi = 0; gi < regions.size(); ++gi) {
        const auto& g = regions[gi];
        const StripChart chart(f, 0, g.center, eps, max_skew);
        const std::size_t count = points / regions.size() + (gi < points % regions.size());
        for (std::size_t i = 0; i < count; ++i) {
          const double u = (2.0 * rng.uniform() - 1.0) * eps * f->density(g.center);
          Vec v(f->n());
          for (int a = 0; a < f->n(); ++a) v(a) = g.y_lo + (g.y_hi - g.y_lo) * rng.uniform();
          const ChartPoint p = chart.inverse(u, v);
          const ChartPoint q = StripChart::forward(p.x, p.y, chart.jet(p.y, 0));
          double res = std::abs(q.x - u);
          if (f->n() > 0) res = std::max(res, (q.y - v).cwiseAbs().maxCoeff());
          worst = std::max(worst, res);
        }
      }
      const std::string label = spec.value("name", "custom") + "#" + std::to_string(si);
      r.table.add({std::string("roundtrip_max_residual"), label, eps, worst});
      r.checks.push_back({"roundtrip " + label, worst <= 1e-10,
                          "max residual " + detail::fmt(worst, 3) + " over " + std::to_string(points) +
                              " points, tolerance 1e-10"});
    }
  }

  if (want("expansion")) {
    if (c.epsilons.size() < 3) throw Error(ErrorKind::invalid_argument, "expansion rates need at least three epsilons");
    const double center = c.opt("center", 0.5);
    const auto vs = c.opt("v", std::vector<double>{-0.8, -0.6, -0.4, 0.4, 0.6, 0.8});
    const auto ts = c.opt("t", std::vector<double>{-1.0, -0.5, 0.5, 1.0});
    const double max_skew = c.opt("max_skew", 0.25);
    std::vector<std::pair<double, double>> psi_pts, phi_pts;
    for (double eps : c.epsilons) {
      const StripChart chart(field, 0, center, eps, max_skew);
      double sp = 0.0, sf = 0.0;
      for (double t : ts)
        for (double v0 : vs) {
          const Vec v = Vec::Constant(field->n(), v0);
          const double u = t * eps;
          const ChartPoint p = chart.inverse(u, v);
          const MembraneJet mj = field->membrane_jet(center, v, 0);
          if (field->n() > 0) sp = std::max(sp, (p.y - v - mj.theta * u).cwiseAbs().maxCoeff());
          if (u > 0.0) sf = std::max(sf, std::abs(p.x - u * (1.0 + 2.0 * eps * mj.beta)));
        }
      r.table.add({std::string("psi_residual"), std::string("sup"), eps, sp});
      r.table.add({std::string("phi_residual"), std::string("sup"), eps, sf});
      psi_pts.emplace_back(eps, sp);
      phi_pts.emplace_back(eps, sf);
    }
    Plot pl{"inverse-map expansion residuals", "eps", "sup residual", true, true, false, {}};
    for (const auto& [name, pts, need] : {std::tuple{std::string("psi"), psi_pts, 2.0},
                                          std::tuple{std::string("phi"), phi_pts, 3.0}}) {
      if (name == "psi" && field->n() == 0) continue;
      bool ok;
      std::string d;
      try {
        const RateFit f = fit_rate(pts);
        ok = f.slope >= need;
        d = "fitted slope " + detail::fmt(f.slope, 4) + ", required >= " + detail::fmt(need, 2);
      } catch (const Error& e) {
        ok = false;
        d = e.what();
      }
      r.checks.push_back({"expansion " + name, ok, d});
      Series s{name, {}, {}, true};
      for (const auto& [e, v] : pts) {
        s.x.push_back(e);
        s.y.push_back(v);
      }
      pl.series.push_back(s);
    }
    r.plots.emplace_back("expansion", pl);
  }

  if (want("oracle_identities")) {
    double wald = 0.0;
    bool exact = true;
    for (double am : {0.1, 0.5, 1.0, 3.0})
      for (double ap : {0.2, 1.0, 2.5})
        for (double var : {0.3, 1.0, 4.0}) {
          for (double drift : {-5.0, -1.0, -0.1, -1e-7, 1e-9, 0.05, 0.7, 3.0}) {
            const ExitProbabilities p = bm_exit_prob(am, ap, drift, var);
            wald = std::max(wald, std::abs(drift * bm_exit_time(am, ap, drift, var) -
                                           (ap * p.p_plus - am * p.p_minus)));
          }
          exact = exact && bm_exit_prob(am, ap, 0.0, var).p_plus == am / (am + ap) &&
                  bm_exit_time(am, ap, 0.0, var) == am * ap / var;
        }
    r.table.add({std::string("wald_max_violation"), std::string("grid"), 0.0, wald});
    r.checks.push_back({"oracle_identities wald", wald <= 1e-12,
                        "max |drift E tau - (a+ p+ - a- p-)| = " + detail::fmt(wald, 3) + ", tolerance 1e-12"});
    r.checks.push_back({"oracle_identities zero_drift", exact,
                        "zero drift: p+ = a-/(a- + a+) and E tau = a- a+ / variance reproduced exactly"});
  }

  if (want("oracle_mc")) {
    const double drift = c.opt("oracle_drift", 1.0);
    const double var = c.opt("oracle_variance", 1.0);
    const double a = c.opt("oracle_a", 1.0);
    const std::size_t N = c.opt("oracle_paths", std::size_t{1000000});
    // Drifted BM on (-a, a): one strip of a membrane-free layout at eps = 1.
    const FieldPtr bm = std::make_shared<ConstantField>("drifted-bm", Vec::Constant(1, drift),
                                                        Mat::Constant(1, 1, std::sqrt(var)), 0.0, Vec(0),
                                                        DensityProfile::constant(a));
    const MembraneLayout layout(bm, 1.0);
    SimConfig sc;
    sc.epsilon = 1.0;
    sc.dt_base = c.dt_base;
    sc.seed = c.seed;
    sc.path_count = N;
    const auto recs = sample_exits(layout, 0, Vec(0), sc, 95);
    const ExitMomentEstimate est = estimate_exit_moments(recs, 0.0);
    const ExitProbabilities p = bm_exit_prob(a, a, drift, var);
    const double t = bm_exit_time(a, a, drift, var);
    const double zp = detail::zscore(est.value.p_plus, p.p_plus, est.se.p_plus);
    const double zt = detail::zscore(est.value.mean_tau, t, est.se.mean_tau);
    r.table.add({std::string("oracle_mc_p_plus"), std::string("mc"), 1.0, est.value.p_plus});
    r.table.add({std::string("oracle_mc_p_plus"), std::string("exact"), 1.0, p.p_plus});
    r.table.add({std::string("oracle_mc_tau"), std::string("mc"), 1.0, est.value.mean_tau});
    r.table.add({std::string("oracle_mc_tau"), std::string("exact"), 1.0, t});
    r.checks.push_back({"oracle_mc p_plus", std::abs(zp) <= 3.0,
                        detail::fmt(est.value.p_plus) + " vs " + detail::fmt(p.p_plus) + " (z = " +
                            detail::fmt(zp, 3) + ", " + std::to_string(N) + " paths, tolerance 3 SE)"});
    r.checks.push_back({"oracle_mc mean_tau", std::abs(zt) <= 3.0,
                        detail::fmt(est.value.mean_tau) + " vs " + detail::fmt(t) + " (z = " + detail::fmt(zt, 3) +
                            ", tolerance 3 SE)"});
  }

  if (want("tanaka")) {
    const double delta = c.opt("tanaka_delta", 0.01);
    const double dt = c.opt("tanaka_dt", 1e-6);
    const std::size_t N = c.opt("tanaka_paths", std::size_t{100});
    const FieldPtr bm = build_scenario({{"name", "constant"}});
    struct Pair {
      double occ;
      double tan;
    };
    const std::vector<Pair> v = parallel_map<Pair>(N, [&](std::size_t i) {
      RandomStream rng(c.seed, stream_id(96, i));
      const PathSample p = simulate_free_path(*bm, 0.0, Vec(0), 1.0, dt, rng);
      return Pair{local_time_estimate(p, 0.0, delta, *bm).value, tanaka_local_time(p, 0.0)};
    });
    double occ = 0.0, tan = 0.0;
    for (const auto& q : v) {
      occ += q.occ;
      tan += q.tan;
    }
    const double rel = std::abs(occ - tan) / tan;
    r.table.add({std::string("local_time_occupation"), std::string("mean"), 0.0, occ / static_cast<double>(N)});
    r.table.add({std::string("local_time_tanaka"), std::string("mean"), 0.0, tan / static_cast<double>(N)});
    r.checks.push_back({"tanaka", rel <= 0.05,
                        "occupation " + detail::fmt(occ / static_cast<double>(N)) + " vs Tanaka " +
                            detail::fmt(tan / static_cast<double>(N)) + " (relative " + detail::fmt(rel, 3) +
                            ", " + std::to_string(N) + " paths, tolerance 5%)"});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Driver.

/*!
 * Runs the configured experiment. Unless `force` is set, the scenario is
 * first checked with validate_assumptions and an assumption failure is
 * raised with the witnesses in the message.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& c, bool force = false) {
  c.validate();
  const FieldPtr field = build_scenario(c.scenario);
  if (c.experiment == "validate") return run_validate(c, *field);
  if (!force) {
    const ValidationReport rep = detail::run_validation(c, *field);
    if (!rep.passed()) throw Error(ErrorKind::assumption_failure, rep.to_text());
  }
  if (c.experiment == "exit-stats") return run_exit_stats(c, field);
  if (c.experiment == "pseudo-gen") return run_pseudo_gen(c, field);
  if (c.experiment == "homogenize") return run_homogenize(c, field);
  if (c.experiment == "fig2") return run_fig2(c, field);
  return run_rates(c, field);
}

inline std::string summary_text(const ExperimentConfig& c, const ExperimentResult& r) {
  std::ostringstream os;
  os << "# semiperm config_hash=" << hash_hex(c.hash()) << "\n";
  os << "experiment: " << c.experiment << "\n";
  os << "scenario: " << c.scenario.dump() << "\n";
  for (const auto& n : r.notes) os << "note: " << n << "\n";
  for (const auto& ch : r.checks) os << (ch.passed ? "PASS " : "FAIL ") << ch.name << ": " << ch.detail << "\n";
  os << "overall: " << (r.passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

/// Writes results.csv, summary.txt, plot_*.svg and any extra files into dir.
inline void write_artifacts(const ExperimentConfig& c, const ExperimentResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io_failure, "cannot create " + dir.string() + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream os(dir / name, std::ios::binary);
    os << content;
    if (!os) throw Error(ErrorKind::io_failure, "cannot write " + (dir / name).string());
  };
  std::ostringstream results;
  r.table.write(results, c.hash());
  write("results.csv", results.str());
  write("summary.txt", summary_text(c, r));
  for (const auto& [stem, plot] : r.plots) write("plot_" + stem + ".svg", render_svg(plot));
  for (const auto& [name, content] : r.files) write(name, content);
}

}  // namespace semiperm
