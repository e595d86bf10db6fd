#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_feeders.hpp"
#include "voltvar/consensus.hpp"

namespace voltvar {
namespace {

SensitivityMatrix make_k(const Eigen::MatrixXd& kp, const Eigen::MatrixXd& kq) {
  SensitivityMatrix k;
  k.kp = kp;
  k.kq = kq;
  for (Eigen::Index j = 0; j < kp.cols(); ++j) k.columns.push_back(static_cast<BusIndex>(j + 1));
  return k;
}

// The local subproblem written out as a QP over (V, T', T'', z).
double local_qp_oracle(const Eigen::RowVectorXd& kp, const Eigen::RowVectorXd& kq, const UncertaintySet& U,
                       const SlopeVector& alpha, const Eigen::RowVectorXd& lambda, double rho,
                       Eigen::VectorXd* z_out) {
  const Eigen::Index m = kp.size(), nx = 1 + 3 * m;
  auto tp = [&](Eigen::Index j) { return 1 + j; };
  auto tn = [&](Eigen::Index j) { return 1 + m + j; };
  auto zz = [&](Eigen::Index j) { return 1 + 2 * m + j; };
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 + 4 * m, nx);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(2 + 4 * m);
  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    G(0, tp(j)) = U.dp_max[j];
    G(0, tn(j)) = U.dp_min[j];
    G(1, tp(j)) = -U.dp_min[j];
    G(1, tn(j)) = -U.dp_max[j];
  }
  G(0, 0) = G(1, 0) = -1.0;
  r = 2;
  for (Eigen::Index j = 0; j < m; ++j) {
    G(r, tp(j)) = -1.0;
    h[r++] = 0.0;
    G(r, tn(j)) = 1.0;
    h[r++] = 0.0;
    G(r, tp(j)) = -1.0;
    G(r, zz(j)) = kq[j];
    h[r++] = -kp[j];
    G(r, tn(j)) = 1.0;
    G(r, zz(j)) = -kq[j];
    h[r++] = kp[j];
  }
  QpProblem p;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(nx, nx);
  p.c = Eigen::VectorXd::Zero(nx);
  p.c[0] = 1.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    P(zz(j), zz(j)) = rho;
    p.c[zz(j)] = lambda[j] - rho * alpha[j];
  }
  p.P = P.sparseView();
  p.G = G.sparseView();
  p.h = h;
  QpResult res = solve_qp(p);
  EXPECT_TRUE(res.optimal());
  *z_out = res.x.tail(m);
  return res.primal_objective + 0.5 * rho * alpha.squaredNorm() - lambda.dot(alpha);
}

TEST(LocalSubproblem, MatchesQpFormulation) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index m = 1 + trial % 4;
    Eigen::RowVectorXd kp(m), kq(m), lambda(m);
    SlopeVector alpha(m);
    UncertaintySet U;
    U.dp_min.resize(m);
    U.dp_max.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      kp[j] = 0.02 * u(rng);
      kq[j] = 0.03 * u(rng);
      lambda[j] = 0.01 * u(rng);
      alpha[j] = u(rng);
      U.dp_min[j] = -std::abs(u(rng));
      U.dp_max[j] = std::abs(u(rng));
    }
    const double rho = trial % 2 ? 0.01 : 0.5;
    LocalSolution loc = solve_local(kp, kq, U, alpha, lambda, rho);
    Eigen::VectorXd z_qp;
    const double f_qp = local_qp_oracle(kp, kq, U, alpha, lambda, rho, &z_qp);
    EXPECT_LE(loc.gap, 1e-12) << trial;
    EXPECT_NEAR(loc.objective, f_qp, 1e-8) << trial;
    EXPECT_LE((loc.z - z_qp).cwiseAbs().maxCoeff(), 1e-5) << trial;
  }
}

TEST(AdmmStep, ZeroUncertaintyIsAFixedPoint) {
  Eigen::MatrixXd kp(3, 2), kq(3, 2);
  kp << 0.01, 0.02, 0.03, 0.01, 0.02, 0.02;
  kq << 0.02, 0.03, 0.04, 0.02, 0.03, 0.05;
  UncertaintySet U{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  ConsensusState s = ConsensusState::zero(3, 2, 0.01);
  ConsensusState next = admm_step(s, make_k(kp, kq), U);
  EXPECT_EQ(next.k, 1);
  EXPECT_EQ(next.alpha, SlopeVector::Zero(2));
  EXPECT_EQ(next.z, Eigen::MatrixXd::Zero(3, 2));
  EXPECT_EQ(next.primal_residual, 0.0);
  EXPECT_THROW(admm_step(ConsensusState::zero(2, 2, 0.01), make_k(kp, kq), U), std::invalid_argument);
}

TEST(RunConsensus, InfiniteToleranceStopsAfterOneRound) {
  Eigen::MatrixXd kp = Eigen::MatrixXd::Constant(2, 1, 0.02), kq = Eigen::MatrixXd::Constant(2, 1, 0.03);
  ConsensusOptions opt;
  opt.tol = std::numeric_limits<double>::infinity();
  UncertaintySet U{Eigen::VectorXd::Constant(1, -0.2), Eigen::VectorXd::Constant(1, 0.2)};
  auto res = run_consensus(make_k(kp, kq), U, opt);
  EXPECT_EQ(res.trace.size(), 1u);
  EXPECT_TRUE(res.converged);
  opt.rho = 0.0;
  EXPECT_THROW(run_consensus(make_k(kp, kq), U, opt), std::invalid_argument);
}

TEST(RunConsensus, TwoBusToyMatchesCentralized) {
  RadialNetwork net = testing::two_bus(0.01, 0.02, 0.5, 0.2);
  NetworkRecord rec = net.to_record();
  rec.pv = {PvRecord{1, PvUnit{0.6, 0.4, 0.0}}};
  net = RadialNetwork::build(rec);
  auto K = sensitivities_jacobian(net, nominal_operating_point(net));
  UncertaintySet U = build_uncertainty(net, 0.5);
  auto central = solve_aarc_centralized(K, U);
  ConsensusOptions opt;
  auto res = run_consensus(K, U, opt);
  EXPECT_LE((res.alpha - central.alpha).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(RunConsensus, ThirteenBusConvergesToBenchmark) {
  RadialNetwork net = testing::feeder13();
  auto K = sensitivities_jacobian(net, nominal_operating_point(net));
  UncertaintySet U = build_uncertainty(net, 0.5);
  auto central = solve_aarc_centralized(K, U);
  auto res = run_consensus(K, U);
  ASSERT_EQ(res.trace.size(), 100u);
  EXPECT_LE((res.alpha - central.alpha).cwiseAbs().maxCoeff(), 1e-3);

  // Residuals settle after the transient: the largest combined residual in
  // the last quarter is below the smallest in the first quarter.
  auto combined = [&](std::size_t k) {
    return std::max(res.trace[k].primal_residual, res.trace[k].dual_residual);
  };
  const std::size_t q = res.trace.size() / 4;
  double first_min = 1e300, last_max = 0.0;
  for (std::size_t k = 0; k < q; ++k) first_min = std::min(first_min, combined(k));
  for (std::size_t k = res.trace.size() - q; k < res.trace.size(); ++k) last_max = std::max(last_max, combined(k));
  EXPECT_LT(last_max, first_min);
}

TEST(RunConsensus, AlternativeDivisorIsSelectable) {
  RadialNetwork net = testing::feeder13();
  auto K = sensitivities_jacobian(net, nominal_operating_point(net));
  UncertaintySet U = build_uncertainty(net, 0.5);
  ConsensusOptions a, b;
  b.divide_by_n_plus_one = true;
  auto ra = run_consensus(K, U, a), rb = run_consensus(K, U, b);
  EXPECT_GT((ra.alpha - rb.alpha).cwiseAbs().maxCoeff(), 0.0);
  ConsensusState s = ConsensusState::zero(K.rows(), K.cols(), 0.01);
  s = admm_step(s, K, U, b);
  EXPECT_NEAR(s.alpha[0], s.z.col(0).sum() / static_cast<double>(K.rows() + 1), 1e-15);
}

}  // namespace
}  // namespace voltvar
