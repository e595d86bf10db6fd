#pragma once

// Monte-Carlo comparison of the four control schemes:
//   1  dispatch only, inverters hold their base set-point
//   2  dispatch + affine rule, Jacobian sensitivities, centralized LP
//   3  dispatch + affine rule, Jacobian sensitivities, consensus ADMM
//   4  dispatch + affine rule, learned sensitivities, consensus ADMM
// Every scheme sees the same scenarios. Voltages come from the AC solver with
// tap and capacitor positions frozen at the dispatch values.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/aarc.hpp"
#include "voltvar/consensus.hpp"
#include "voltvar/dataset.hpp"
#include "voltvar/grid.hpp"
#include "voltvar/mlp.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/selection.hpp"
#include "voltvar/stage1.hpp"

namespace voltvar {

enum class SensitivitySource { none, jacobian, learned };
enum class SolveMode { none, centralized, consensus };
enum class RatioMode { bus_scenario_pairs, buses_ever_violated };

struct SchemeConfig {
  int id = 1;
  SensitivitySource source = SensitivitySource::none;
  SolveMode mode = SolveMode::none;
  double uncertainty = 0.5;
  std::size_t scenarios = 500;
  std::uint64_t seed = 1;

  static SchemeConfig scheme(int id, double uncertainty = 0.5, std::size_t scenarios = 500, std::uint64_t seed = 1) {
    SchemeConfig c;
    c.id = id;
    c.uncertainty = uncertainty;
    c.scenarios = scenarios;
    c.seed = seed;
    switch (id) {
      case 1:
        break;
      case 2:
        c.source = SensitivitySource::jacobian;
        c.mode = SolveMode::centralized;
        break;
      case 3:
        c.source = SensitivitySource::jacobian;
        c.mode = SolveMode::consensus;
        break;
      case 4:
        c.source = SensitivitySource::learned;
        c.mode = SolveMode::consensus;
        break;
      default:
        throw std::invalid_argument("scheme id must be 1, 2, 3 or 4");
    }
    return c;
  }
};

struct EvaluationOptions {
  double v_min = 0.95;
  double v_max = 1.05;
  RatioMode ratio_mode = RatioMode::bus_scenario_pairs;
  AcOptions ac;
  AarcOptions aarc;
  ConsensusOptions consensus;
};

struct EvaluationReport {
  int scheme = 0;
  std::size_t scenario_count = 0;
  std::uint64_t scenario_fingerprint = 0;
  std::size_t violation_bus_count = 0;  // extreme low-PV scenario
  double violation_ratio = 0.0;         // percent
  double lowest_voltage = std::numeric_limits<double>::infinity();
  std::size_t failed_scenarios = 0;
  std::size_t clipped_setpoints = 0;
  SlopeVector alpha;
  Eigen::MatrixXd voltages;  // scenario x non-slack bus; NaN rows for failed scenarios
  Eigen::VectorXd extreme_voltages;
};

// FNV-1a over the bit patterns of every scenario value.
inline std::uint64_t scenario_fingerprint(const std::vector<Scenario>& scenarios) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (const Scenario& s : scenarios) {
    for (double v : s.load_multiplier) mix(v);
    for (double v : s.pv_p) mix(v);
  }
  return h;
}

struct SlopeResult {
  SlopeVector alpha;
  SensitivityMatrix K;
  double objective = 0.0;
  bool converged = true;
  std::size_t iterations = 0;
};

// Sensitivities at the scheduled forecast point, from the Jacobian or from a
// trained model.
inline SensitivityMatrix scheme_sensitivities(const RadialNetwork& scheduled, SensitivitySource src,
                                              const MlpModel* model, const AcOptions& ac = {}) {
  const OperatingPoint op = nominal_operating_point(scheduled);
  if (src == SensitivitySource::jacobian) return sensitivities_jacobian(scheduled, op, ac);
  if (src == SensitivitySource::learned) {
    if (!model) throw std::invalid_argument("learned sensitivities need a trained model");
    const PowerFlowSolution sol = solve_ac(scheduled, op, ac);
    if (!sol.converged) throw PowerFlowError("forecast point did not converge: " + sol.message);
    return predict(*model, select_features(*model, operating_features(scheduled, op, sol)));
  }
  throw std::invalid_argument("scheme has no sensitivity source");
}

inline SlopeResult compute_slopes(const SensitivityMatrix& K, const UncertaintySet& U, SolveMode mode,
                                  const EvaluationOptions& opt = {}) {
  SlopeResult r;
  r.K = K;
  if (mode == SolveMode::centralized) {
    const AarcSolution s = solve_aarc_centralized(K, U, opt.aarc);
    r.alpha = s.alpha;
    r.objective = s.objective;
    r.iterations = static_cast<std::size_t>(s.iterations);
  } else if (mode == SolveMode::consensus) {
    const ConsensusResult c = run_consensus(K, U, opt.consensus);
    r.alpha = c.alpha;
    r.objective = aarc_objective(K, c.alpha, U);
    r.converged = c.converged;
    r.iterations = c.trace.size();
  } else {
    r.alpha = SlopeVector::Zero(K.cols());
    r.objective = aarc_objective(K, r.alpha, U);
  }
  return r;
}

namespace detail {

struct ScenarioOutcome {
  bool converged = false;
  Eigen::VectorXd v;  // non-slack buses
  std::size_t clipped = 0;
};

inline ScenarioOutcome evaluate_scenario(const RadialNetwork& scheduled, const Stage1Schedule& schedule,
                                         const SlopeVector& alpha, const Scenario& sc, const AcOptions& ac) {
  const auto& pvb = scheduled.pv_buses();
  std::vector<double> dp, cap, p;
  for (std::size_t k = 0; k < pvb.size(); ++k) {
    const PvUnit& u = *scheduled.bus(pvb[k]).pv;
    dp.push_back(sc.pv_p[k] - u.forecast_p);
    cap.push_back(u.capacity);
    p.push_back(sc.pv_p[k]);
  }
  const RuleOutput rule = apply_rule(schedule.q_base, alpha, dp, cap, p);
  DeviceState dev;
  dev.tap = schedule.tap;
  dev.cap_steps = schedule.cap_steps;
  dev.pv_q = rule.q;
  ScenarioOutcome out;
  out.clipped = static_cast<std::size_t>(std::count(rule.clipped.begin(), rule.clipped.end(), true));
  const PowerFlowSolution sol = solve_ac(scheduled, make_operating_point(scheduled, sc, dev), ac);
  out.converged = sol.converged;
  if (sol.converged) out.v = sol.voltage.tail(sol.voltage.size() - 1);
  return out;
}

}  // namespace detail

inline EvaluationReport run_scheme(const RadialNetwork& scheduled, const Stage1Schedule& schedule, int scheme_id,
                                   const SlopeVector& alpha, const std::vector<Scenario>& scenarios,
                                   double uncertainty, const EvaluationOptions& opt = {}) {
  if (!(opt.v_min < opt.v_max)) throw std::invalid_argument("run_scheme: v_min must be below v_max");
  const SlopeVector a = scheme_id == 1 ? SlopeVector::Zero(static_cast<Eigen::Index>(schedule.q_base.size())) : alpha;
  const auto nb = static_cast<Eigen::Index>(scheduled.bus_count()) - 1;
  EvaluationReport rep;
  rep.scheme = scheme_id;
  rep.alpha = a;
  rep.scenario_count = scenarios.size();
  rep.scenario_fingerprint = scenario_fingerprint(scenarios);
  rep.voltages = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(scenarios.size()), nb,
                                           std::numeric_limits<double>::quiet_NaN());
  auto outside = [&](double v) { return v < opt.v_min || v > opt.v_max; };
  std::size_t pairs = 0, bad_pairs = 0;
  std::vector<char> ever(static_cast<std::size_t>(nb), 0);
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto out = detail::evaluate_scenario(scheduled, schedule, a, scenarios[s], opt.ac);
    rep.clipped_setpoints += out.clipped;
    if (!out.converged) {
      ++rep.failed_scenarios;
      continue;
    }
    rep.voltages.row(static_cast<Eigen::Index>(s)) = out.v.transpose();
    for (Eigen::Index b = 0; b < nb; ++b) {
      ++pairs;
      if (outside(out.v[b])) {
        ++bad_pairs;
        ever[static_cast<std::size_t>(b)] = 1;
      }
      rep.lowest_voltage = std::min(rep.lowest_voltage, out.v[b]);
    }
  }
  if (opt.ratio_mode == RatioMode::bus_scenario_pairs)
    rep.violation_ratio = pairs ? 100.0 * static_cast<double>(bad_pairs) / static_cast<double>(pairs) : 0.0;
  else
    rep.violation_ratio = nb ? 100.0 * static_cast<double>(std::count(ever.begin(), ever.end(), 1)) / static_cast<double>(nb) : 0.0;

  const auto ext = detail::evaluate_scenario(scheduled, schedule, a, extreme_low_scenario(scheduled, uncertainty), opt.ac);
  if (ext.converged) {
    rep.extreme_voltages = ext.v;
    for (Eigen::Index b = 0; b < nb; ++b) rep.violation_bus_count += outside(ext.v[b]) ? 1 : 0;
  } else {
    rep.violation_bus_count = static_cast<std::size_t>(nb);
  }
  return rep;
}

// Everything a four-scheme comparison needs, computed once.
struct ComparisonSetup {
  Stage1Schedule schedule;
  RadialNetwork scheduled;
  UncertaintySet uncertainty;
  std::vector<Scenario> scenarios;
  SensitivityMatrix k_jacobian;
  std::optional<SensitivityMatrix> k_learned;
};

struct Comparison {
  std::vector<EvaluationReport> reports;
  std::vector<SlopeResult> slopes;  // aligned with reports
};

inline ComparisonSetup prepare_comparison(const RadialNetwork& net, double uncertainty, std::size_t scenarios,
                                          std::uint64_t seed, const Stage1Options& s1 = {}) {
  ComparisonSetup c;
  c.schedule = solve_stage1(make_stage1_problem(net), s1);
  c.scheduled = apply_schedule(net, c.schedule);
  c.uncertainty = build_uncertainty(c.scheduled, uncertainty);
  c.scenarios = sample_scenarios(c.scheduled, scenarios, uncertainty, seed);
  c.k_jacobian = scheme_sensitivities(c.scheduled, SensitivitySource::jacobian, nullptr);
  return c;
}

inline Comparison run_comparison(const ComparisonSetup& setup, const std::vector<int>& schemes, double uncertainty,
                                 const EvaluationOptions& opt = {}) {
  Comparison out;
  for (int id : schemes) {
    const SchemeConfig cfg = SchemeConfig::scheme(id, uncertainty);
    SlopeResult sr;
    if (cfg.source == SensitivitySource::none) {
      sr = compute_slopes(setup.k_jacobian, setup.uncertainty, SolveMode::none, opt);
    } else if (cfg.source == SensitivitySource::jacobian) {
      sr = compute_slopes(setup.k_jacobian, setup.uncertainty, cfg.mode, opt);
    } else {
      if (!setup.k_learned) throw std::invalid_argument("scheme 4 needs learned sensitivities");
      sr = compute_slopes(*setup.k_learned, setup.uncertainty, cfg.mode, opt);
    }
    out.reports.push_back(run_scheme(setup.scheduled, setup.schedule, id, sr.alpha, setup.scenarios, uncertainty, opt));
    out.slopes.push_back(std::move(sr));
  }
  return out;
}

// Metric rows, one column per scheme.
inline std::string compare_report(const std::vector<EvaluationReport>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("compare_report needs at least two reports");
  for (const auto& r : reports)
    if (r.scenario_fingerprint != reports.front().scenario_fingerprint || r.scenario_count != reports.front().scenario_count)
      throw std::invalid_argument("compare_report: reports were run on different scenario sets");
  std::ostringstream os;
  os << std::setprecision(17);
  os << "metric";
  for (const auto& r : reports) os << ",scheme_" << r.scheme;
  os << "\n";
  auto row = [&](const char* name, auto get) {
    os << name;
    for (const auto& r : reports) os << "," << get(r);
    os << "\n";
  };
  row("violation_bus_count", [](const EvaluationReport& r) { return r.violation_bus_count; });
  row("violation_ratio_percent", [](const EvaluationReport& r) { return r.violation_ratio; });
  row("lowest_voltage", [](const EvaluationReport& r) { return r.lowest_voltage; });
  row("failed_scenarios", [](const EvaluationReport& r) { return r.failed_scenarios; });
  row("clipped_setpoints", [](const EvaluationReport& r) { return r.clipped_setpoints; });
  row("scenario_count", [](const EvaluationReport& r) { return r.scenario_count; });
  return os.str();
}

struct ComparisonTable {
  std::vector<std::string> columns;
  std::map<std::string, std::vector<double>> rows;
};

inline ComparisonTable parse_compare_report(const std::string& csv) {
  ComparisonTable t;
  std::istringstream is(csv);
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (cells.empty()) continue;
    if (header) {
      t.columns.assign(cells.begin() + 1, cells.end());
      header = false;
      continue;
    }
    if (cells.size() != t.columns.size() + 1) throw std::invalid_argument("comparison row has the wrong width: " + cells[0]);
    std::vector<double> v;
    for (std::size_t k = 1; k < cells.size(); ++k) v.push_back(std::stod(cells[k]));
    t.rows[cells[0]] = std::move(v);
  }
  return t;
}

// Scenario x bus voltage table for distribution plots.
inline std::string voltages_csv(const RadialNetwork& net, const EvaluationReport& rep) {
  std::ostringstream os;
  os << std::setprecision(17) << "scenario";
  for (BusIndex b = 1; b < net.bus_count(); ++b) os << ",v_" << net.label(b);
  os << "\n";
  for (Eigen::Index s = 0; s < rep.voltages.rows(); ++s) {
    os << s;
    for (Eigen::Index b = 0; b < rep.voltages.cols(); ++b) os << "," << rep.voltages(s, b);
    os << "\n";
  }
  return os.str();
}

struct SweepPoint {
  std::size_t n_sel = 0;
  std::size_t model_buses = 0;  // after merging with the PV buses
  double validation_mae = 0.0;
  double train_mae = 0.0;
  double proxy_error = 0.0;  // selection indicator at the final step
  double seconds = 0.0;
};

inline std::vector<SweepPoint> mae_vs_nsel_sweep(const RadialNetwork& net, const Dataset& ds,
                                                 const std::vector<std::size_t>& n_sel, const MlpHyper& hp = {},
                                                 double ridge_lambda = 1e-4) {
  if (!std::is_sorted(n_sel.begin(), n_sel.end())) throw std::invalid_argument("n_sel list must be ascending");
  std::vector<SweepPoint> out;
  for (std::size_t n : n_sel) {
    const auto t0 = std::chrono::steady_clock::now();
    const BusSelection sel = select_buses(ds, n, ridge_lambda);
    const std::vector<BusIndex> buses = merge_with_pv(sel.selected, net);
    const TrainResult tr = train_on_buses(ds, buses, net.pv_buses(), hp);
    SweepPoint p;
    p.n_sel = n;
    p.model_buses = buses.size();
    p.validation_mae = tr.report.validation_mae;
    p.train_mae = tr.report.train_mae;
    p.proxy_error = sel.raw.eta.empty() ? 0.0 : sel.raw.eta.back();
    p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(p);
  }
  return out;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& pts) {
  std::ostringstream os;
  os << std::setprecision(17) << "n_sel,model_buses,validation_mae,train_mae,proxy_error\n";
  for (const auto& p : pts)
    os << p.n_sel << "," << p.model_buses << "," << p.validation_mae << "," << p.train_mae << "," << p.proxy_error << "\n";
  return os.str();
}

}  // namespace voltvar
