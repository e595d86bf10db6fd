#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_feeders.hpp"
#include "voltvar/aarc.hpp"

namespace voltvar {
namespace {

SensitivityMatrix make_k(const Eigen::MatrixXd& kp, const Eigen::MatrixXd& kq) {
  SensitivityMatrix k;
  k.kp = kp;
  k.kq = kq;
  for (Eigen::Index j = 0; j < kp.cols(); ++j) k.columns.push_back(static_cast<BusIndex>(j + 1));
  return k;
}

UncertaintySet box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  UncertaintySet u;
  u.dp_min = Eigen::Map<const Eigen::VectorXd>(lo.begin(), static_cast<Eigen::Index>(lo.size()));
  u.dp_max = Eigen::Map<const Eigen::VectorXd>(hi.begin(), static_cast<Eigen::Index>(hi.size()));
  return u;
}

// Extremes over the 2^m box vertices.
std::pair<double, double> vertex_extremes(const SensitivityMatrix& K, const SlopeVector& a, const UncertaintySet& U,
                                          Eigen::Index i) {
  const Eigen::Index m = K.cols();
  double hi = -1e300, lo = 1e300;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      d += (K.kp(i, j) + a[j] * K.kq(i, j)) * ((mask >> j) & 1u ? U.dp_max[j] : U.dp_min[j]);
    hi = std::max(hi, d);
    lo = std::min(lo, d);
  }
  return {hi, lo};
}

RadialNetwork pv_feeder(double forecast, double capacity) {
  NetworkRecord rec;
  rec.buses = {BusRecord{0, {}, 0, 0}, BusRecord{1, {0}, 0.5, 0.1}};
  rec.lines = {LineRecord{0, 1, 0.01, 0.02}};
  rec.pv = {PvRecord{1, PvUnit{capacity, forecast, 0.0}}};
  return RadialNetwork::build(rec);
}

TEST(BuildUncertainty, ClipsAtCapacity) {
  UncertaintySet z = build_uncertainty(pv_feeder(0.8, 1.0), 0.0);
  EXPECT_EQ(z.dp_min[0], 0.0);
  EXPECT_EQ(z.dp_max[0], 0.0);
  UncertaintySet c = build_uncertainty(pv_feeder(0.8, 1.0), 0.5);
  EXPECT_NEAR(c.dp_min[0], -0.4, 1e-15);
  EXPECT_NEAR(c.dp_max[0], 0.2, 1e-15);
  UncertaintySet s = build_uncertainty(pv_feeder(0.4, 1.0), 0.5);
  EXPECT_NEAR(s.dp_min[0], -0.2, 1e-15);
  EXPECT_NEAR(s.dp_max[0], 0.2, 1e-15);
  EXPECT_THROW(build_uncertainty(pv_feeder(0.4, 1.0), 1.5), std::invalid_argument);
}

TEST(WorstCase, OneTermBox) {
  auto K = make_k(Eigen::MatrixXd::Constant(1, 1, 0.1), Eigen::MatrixXd::Constant(1, 1, 0.2));
  auto d = worst_case_deviation(K, SlopeVector::Zero(1), box({-0.2}, {0.2}));
  EXPECT_NEAR(d.max[0], 0.02, 1e-15);
  EXPECT_NEAR(d.min[0], -0.02, 1e-15);
}

TEST(WorstCase, MatchesVertexEnumeration) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd kp(3, 4), kq(3, 4);
    for (Eigen::Index i = 0; i < kp.size(); ++i) {
      kp(i) = 0.05 * u(rng);
      kq(i) = 0.05 * u(rng);
    }
    auto K = make_k(kp, kq);
    UncertaintySet U;
    U.dp_min = -Eigen::VectorXd::Random(4).cwiseAbs();
    U.dp_max = Eigen::VectorXd::Random(4).cwiseAbs();
    SlopeVector a(4);
    for (Eigen::Index j = 0; j < 4; ++j) a[j] = 2.0 * u(rng);
    auto d = worst_case_deviation(K, a, U);
    for (Eigen::Index i = 0; i < 3; ++i) {
      auto [hi, lo] = vertex_extremes(K, a, U, i);
      EXPECT_NEAR(d.max[i], hi, 1e-14);
      EXPECT_NEAR(d.min[i], lo, 1e-14);
    }
  }
}

TEST(WorstCase, ExactCancellation) {
  auto K = make_k(Eigen::MatrixXd::Constant(1, 1, 0.03), Eigen::MatrixXd::Constant(1, 1, 0.06));
  auto d = worst_case_deviation(K, SlopeVector::Constant(1, -0.5), box({-0.3}, {0.1}));
  EXPECT_NEAR(d.max[0], 0.0, 1e-16);
  EXPECT_NEAR(d.min[0], 0.0, 1e-16);
}

TEST(CentralizedAarc, NoUncertaintyGivesZero) {
  Eigen::MatrixXd kp(3, 2), kq(3, 2);
  kp << 0.01, 0.02, 0.03, 0.01, 0.02, 0.02;
  kq << 0.02, 0.03, 0.04, 0.02, 0.03, 0.05;
  auto sol = solve_aarc_centralized(make_k(kp, kq), box({0, 0}, {0, 0}));
  EXPECT_NEAR(sol.objective, 0.0, 1e-12);
  EXPECT_LE(sol.alpha.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(CentralizedAarc, ProportionalColumnsCancelExactly) {
  Eigen::MatrixXd kp(2, 1), kq(2, 1);
  kp << 0.01, 0.025;
  kq << 0.02, 0.05;
  auto sol = solve_aarc_centralized(make_k(kp, kq), box({-0.3}, {0.2}));
  EXPECT_NEAR(sol.alpha[0], -0.5, 1e-6);
  EXPECT_NEAR(sol.objective, 0.0, 1e-8);
}

// Four buses, two PV columns: compare to a grid search over alpha.
TEST(CentralizedAarc, MatchesGridSearch) {
  Eigen::MatrixXd kp(4, 2), kq(4, 2);
  kp << 0.010, 0.006, 0.018, 0.011, 0.012, 0.020, 0.019, 0.024;
  kq << 0.015, 0.008, 0.030, 0.016, 0.017, 0.031, 0.029, 0.040;
  auto K = make_k(kp, kq);
  UncertaintySet U = box({-0.4, -0.3}, {0.2, 0.3});
  auto sol = solve_aarc_centralized(K, U);
  double best = 1e300;
  SlopeVector arg(2);
  for (int a = 0; a <= 1200; ++a)
    for (int b = 0; b <= 1200; ++b) {
      SlopeVector x(2);
      x << -3.0 + 0.005 * a, -3.0 + 0.005 * b;
      double f = 0.0;
      for (Eigen::Index i = 0; i < 4; ++i) {
        auto [hi, lo] = vertex_extremes(K, x, U, i);
        f += std::max(hi, -lo);
      }
      if (f < best) {
        best = f;
        arg = x;
      }
    }
  EXPECT_NEAR(sol.objective, best, 1e-2);
  EXPECT_LE(sol.objective, best + 1e-9);
  EXPECT_LE((sol.alpha - arg).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LE(sol.duality_gap, 1e-6);
}

TEST(CentralizedAarc, CertificateStructureOnFeeder) {
  RadialNetwork net = testing::feeder13();
  auto K = sensitivities_jacobian(net, nominal_operating_point(net));
  UncertaintySet U = build_uncertainty(net, 0.5);
  auto sol = solve_aarc_centralized(K, U);
  EXPECT_LE(sol.duality_gap, 1e-6);
  auto d = worst_case_deviation(K, sol.alpha, U);
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    EXPECT_GE(sol.v_aux[i], d.max[i] - 1e-8);
    EXPECT_GE(sol.v_aux[i], -d.min[i] - 1e-8);
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      const double c = K.kp(i, j) + sol.alpha[j] * K.kq(i, j);
      EXPECT_NEAR(sol.theta_p(i, j), std::max(0.0, c), 1e-15);
      EXPECT_NEAR(sol.theta_n(i, j), std::min(0.0, c), 1e-15);
    }
  }
  EXPECT_NEAR(sol.objective, sol.v_aux.sum(), 1e-14);
  // Local optimality: no coordinate perturbation helps.
  for (Eigen::Index j = 0; j < K.cols(); ++j)
    for (double step : {-1e-3, 1e-3}) {
      SlopeVector a = sol.alpha;
      a[j] += step;
      EXPECT_GE(aarc_objective(K, a, U), sol.objective - 1e-10);
    }
}

// Any feasible box-dual pair bounds the worst case from above.
TEST(CentralizedAarc, WeakDualityOnRandomFeasiblePoints) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index m = 3;
    Eigen::MatrixXd kp = 0.05 * Eigen::MatrixXd::Random(1, m), kq = 0.05 * Eigen::MatrixXd::Random(1, m);
    auto K = make_k(kp, kq);
    UncertaintySet U = box({-u(rng), -u(rng), -u(rng)}, {u(rng), u(rng), u(rng)});
    SlopeVector a = 2.0 * SlopeVector::Random(m);
    double up = 0.0, dn = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = kp(0, j) + a[j] * kq(0, j);
      const double tp = std::max(0.0, c) + u(rng), tn = std::min(0.0, c) - u(rng);
      up += tp * U.dp_max[j] + tn * U.dp_min[j];
      dn += -(tp * U.dp_min[j] + tn * U.dp_max[j]);
    }
    auto [hi, lo] = vertex_extremes(K, a, U, 0);
    EXPECT_GE(up, hi - 1e-14);
    EXPECT_GE(dn, -lo - 1e-14);
  }
}

TEST(CentralizedAarc, ObjectiveIsHomogeneousInUncertainty) {
  RadialNetwork net = testing::feeder33();
  auto K = sensitivities_jacobian(net, nominal_operating_point(net));
  UncertaintySet U = build_uncertainty(net, 0.25);
  auto one = solve_aarc_centralized(K, U);
  auto two = solve_aarc_centralized(K, U.scaled(2.0));
  EXPECT_NEAR(two.objective, 2.0 * one.objective, 1e-6);
  EXPECT_NEAR(aarc_objective(K, one.alpha, U.scaled(2.0)), two.objective, 1e-6);
}

TEST(ApplyRule, Examples) {
  auto r = apply_rule({0.1}, SlopeVector::Constant(1, -0.5), {0.0}, {1.0}, {0.5});
  EXPECT_EQ(r.q[0], 0.1);
  EXPECT_FALSE(r.clipped[0]);
  r = apply_rule({0.1}, SlopeVector::Constant(1, -0.5), {0.2}, {1.0}, {0.5});
  EXPECT_NEAR(r.q[0], 0.0, 1e-16);
  EXPECT_FALSE(r.clipped[0]);
  r = apply_rule({0.3}, SlopeVector::Constant(1, 1.0), {0.4}, {0.6}, {0.5});
  EXPECT_NEAR(r.q[0], std::sqrt(0.36 - 0.25), 1e-15);
  EXPECT_TRUE(r.clipped[0]);
  EXPECT_THROW(apply_rule({0.0}, SlopeVector::Zero(1), {0.0}, {0.6}, {0.7}), std::invalid_argument);
}

}  // namespace
}  // namespace voltvar
