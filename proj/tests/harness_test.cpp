#include <gtest/gtest.h>

#include <cmath>

#include "test_feeders.hpp"
#include "voltvar/harness.hpp"

namespace voltvar {
namespace {

ComparisonSetup setup13(double uncertainty, std::size_t count, std::uint64_t seed) {
  ComparisonSetup s = prepare_comparison(testing::feeder13(), uncertainty, count, seed);
  s.k_learned = s.k_jacobian;
  return s;
}

double recorded_min(const EvaluationReport& r) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < r.voltages.rows(); ++i)
    for (Eigen::Index j = 0; j < r.voltages.cols(); ++j)
      if (!std::isnan(r.voltages(i, j))) m = std::min(m, r.voltages(i, j));
  return m;
}

TEST(SchemeConfig, Table) {
  EXPECT_EQ(SchemeConfig::scheme(1).source, SensitivitySource::none);
  EXPECT_EQ(SchemeConfig::scheme(2).mode, SolveMode::centralized);
  EXPECT_EQ(SchemeConfig::scheme(3).source, SensitivitySource::jacobian);
  EXPECT_EQ(SchemeConfig::scheme(3).mode, SolveMode::consensus);
  EXPECT_EQ(SchemeConfig::scheme(4).source, SensitivitySource::learned);
  EXPECT_THROW(SchemeConfig::scheme(5), std::invalid_argument);
}

TEST(RunScheme, ZeroUncertaintyMakesSchemesIdentical) {
  ComparisonSetup s = setup13(0.0, 10, 3);
  Comparison c = run_comparison(s, {1, 2, 3, 4}, 0.0);
  for (std::size_t k = 1; k < c.reports.size(); ++k) {
    EXPECT_EQ(c.reports[k].voltages, c.reports[0].voltages);
    EXPECT_EQ(c.reports[k].violation_bus_count, c.reports[0].violation_bus_count);
    EXPECT_EQ(c.reports[k].violation_ratio, c.reports[0].violation_ratio);
  }
}

TEST(RunScheme, ReportIsInternallyConsistent) {
  ComparisonSetup s = setup13(0.5, 40, 5);
  Comparison c = run_comparison(s, {1, 2, 3, 4}, 0.5);
  for (const auto& r : c.reports) {
    EXPECT_GE(r.violation_ratio, 0.0);
    EXPECT_LE(r.violation_ratio, 100.0);
    EXPECT_EQ(r.failed_scenarios, 0u);
    EXPECT_DOUBLE_EQ(r.lowest_voltage, recorded_min(r));
    EXPECT_LE(r.lowest_voltage, 1.05);
  }
}

TEST(RunScheme, CentralizedAndConsensusGiveTheSameVoltages) {
  ComparisonSetup s = setup13(0.5, 50, 7);
  Comparison c = run_comparison(s, {2, 3}, 0.5);
  EXPECT_LE((c.reports[0].voltages - c.reports[1].voltages).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(RunScheme, ScenarioVoltagesMatchADirectSolve) {
  ComparisonSetup s = setup13(0.5, 3, 9);
  Comparison c = run_comparison(s, {3}, 0.5);
  const Scenario& sc = s.scenarios[2];
  DeviceState dev;
  dev.tap = s.schedule.tap;
  dev.cap_steps = s.schedule.cap_steps;
  const auto& pvb = s.scheduled.pv_buses();
  for (std::size_t k = 0; k < pvb.size(); ++k) {
    const PvUnit& u = *s.scheduled.bus(pvb[k]).pv;
    const double lim = u.q_limit(sc.pv_p[k]);
    dev.pv_q.push_back(std::clamp(s.schedule.q_base[k] + c.slopes[0].alpha[static_cast<Eigen::Index>(k)] * (sc.pv_p[k] - u.forecast_p), -lim, lim));
  }
  const PowerFlowSolution sol = solve_ac(s.scheduled, make_operating_point(s.scheduled, sc, dev));
  ASSERT_TRUE(sol.converged);
  for (Eigen::Index b = 1; b < sol.voltage.size(); ++b) EXPECT_NEAR(c.reports[0].voltages(2, b - 1), sol.voltage[b], 1e-12);
}

TEST(RunScheme, AlternativeRatioCountsBusesThatEverViolate) {
  ComparisonSetup s = setup13(0.5, 30, 11);
  EvaluationOptions pairs, buses;
  buses.ratio_mode = RatioMode::buses_ever_violated;
  // A tight band makes violations common.
  pairs.v_min = buses.v_min = 0.99;
  pairs.v_max = buses.v_max = 1.01;
  const auto a = run_comparison(s, {1}, 0.5, pairs).reports[0];
  const auto b = run_comparison(s, {1}, 0.5, buses).reports[0];
  EXPECT_GE(b.violation_ratio, a.violation_ratio);
  std::size_t ever = 0;
  for (Eigen::Index j = 0; j < a.voltages.cols(); ++j) {
    bool v = false;
    for (Eigen::Index i = 0; i < a.voltages.rows(); ++i) v |= a.voltages(i, j) < 0.99 || a.voltages(i, j) > 1.01;
    ever += v;
  }
  EXPECT_NEAR(b.violation_ratio, 100.0 * static_cast<double>(ever) / static_cast<double>(a.voltages.cols()), 1e-12);
}

TEST(CompareReport, RoundTripAndShape) {
  ComparisonSetup s = setup13(0.5, 20, 13);
  Comparison c = run_comparison(s, {1, 2, 3, 4}, 0.5);
  const std::string csv = compare_report(c.reports);
  ComparisonTable t = parse_compare_report(csv);
  EXPECT_EQ(t.columns, (std::vector<std::string>{"scheme_1", "scheme_2", "scheme_3", "scheme_4"}));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(t.rows.at("violation_ratio_percent")[k], c.reports[k].violation_ratio);
    EXPECT_EQ(t.rows.at("lowest_voltage")[k], c.reports[k].lowest_voltage);
    EXPECT_EQ(t.rows.at("violation_bus_count")[k], static_cast<double>(c.reports[k].violation_bus_count));
  }
  // Same scheme twice gives identical columns.
  const ComparisonTable same = parse_compare_report(compare_report({c.reports[1], c.reports[1]}));
  for (const auto& [name, row] : same.rows) EXPECT_EQ(row[0], row[1]) << name;
}

TEST(CompareReport, RejectsMismatchedScenarioSets) {
  ComparisonSetup a = setup13(0.5, 10, 1), b = setup13(0.5, 10, 2);
  auto ra = run_comparison(a, {1}, 0.5).reports[0], rb = run_comparison(b, {1}, 0.5).reports[0];
  EXPECT_THROW(compare_report({ra, rb}), std::invalid_argument);
  EXPECT_THROW(compare_report({ra}), std::invalid_argument);
}

TEST(CompareReport, SameSeedSameBytes) {
  auto once = [] {
    ComparisonSetup s = setup13(0.5, 15, 21);
    Comparison c = run_comparison(s, {1, 2, 3}, 0.5);
    return compare_report(c.reports) + voltages_csv(s.scheduled, c.reports[2]);
  };
  EXPECT_EQ(once(), once());
}

TEST(Sweep, RowsAndFullSelection) {
  RadialNetwork net = testing::random_tree(8, 3, 2);
  DatasetOptions dopt;
  dopt.count = 80;
  Dataset ds = generate_dataset(net, dopt);
  MlpHyper hp;
  hp.hidden = {8, 8};
  hp.epochs = 5;
  auto pts = mae_vs_nsel_sweep(net, ds, {1, 3, 7}, hp);
  ASSERT_EQ(pts.size(), 3u);
  const std::string csv = sweep_csv(pts);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  // n_sel = n selects every bus; the model sees the merged full set.
  std::vector<BusIndex> all;
  for (BusIndex b = 1; b < net.bus_count(); ++b) all.push_back(b);
  const TrainResult full = train_on_buses(ds, merge_with_pv(all, net), net.pv_buses(), hp);
  EXPECT_EQ(pts[2].model_buses, merge_with_pv(all, net).size());
  EXPECT_EQ(pts[2].validation_mae, full.report.validation_mae);
  EXPECT_THROW(mae_vs_nsel_sweep(net, ds, {3, 1}, hp), std::invalid_argument);
}

}  // namespace
}  // namespace voltvar
