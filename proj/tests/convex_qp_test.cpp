#include <gtest/gtest.h>

#include <random>

#include "voltvar/convex_qp.hpp"

namespace voltvar {
namespace {

SparseMatrixd dense_to_sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

TEST(ConvexQp, BoxProjectionOfUnconstrainedMinimizer) {
  // min (x - 3)^2 subject to -1 <= x <= 1 -> x = 1.
  QpProblem p;
  p.P = dense_to_sparse(Eigen::MatrixXd::Constant(1, 1, 2.0));
  p.c = Eigen::VectorXd::Constant(1, -6.0);
  Eigen::MatrixXd G(2, 1);
  G << 1, -1;
  p.G = dense_to_sparse(G);
  p.h = Eigen::VectorXd::Ones(2);
  auto r = solve_qp(p);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 1.0, 1e-8);
  EXPECT_NEAR(r.z[0], 4.0, 1e-6);
  EXPECT_LE(kkt_residual(p, r.x, r.z), 1e-7);
}

TEST(ConvexQp, SmallLp) {
  // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2).
  QpProblem p;
  p.c = Eigen::Vector2d(-1, -1);
  Eigen::MatrixXd G(4, 2);
  G << 1, 2, 3, 1, -1, 0, 0, -1;
  p.G = dense_to_sparse(G);
  p.h = Eigen::Vector4d(4, 6, 0, 0);
  auto r = solve_qp(p);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 1.6, 1e-8);
  EXPECT_NEAR(r.x[1], 1.2, 1e-8);
  EXPECT_NEAR(r.primal_objective, r.dual_objective, 1e-8);
}

// Random strictly convex QPs with a known feasible interior point: KKT
// residual must be small and objective no worse than random feasible points.
TEST(ConvexQp, RandomInstancesSatisfyKkt) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 5, m = 2 * n + 3;
    Eigen::MatrixXd A(n, n), G(m, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = nd(rng);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = nd(rng);
    Eigen::VectorXd x0(n), c(n);
    for (int j = 0; j < n; ++j) {
      x0[j] = nd(rng);
      c[j] = 5.0 * nd(rng);
    }
    QpProblem p;
    p.P = dense_to_sparse(A.transpose() * A + 0.1 * Eigen::MatrixXd::Identity(n, n));
    p.c = c;
    p.G = dense_to_sparse(G);
    p.h = G * x0 + Eigen::VectorXd::Constant(m, 0.5);
    auto r = solve_qp(p);
    ASSERT_TRUE(r.optimal()) << "trial " << trial;
    EXPECT_LE(kkt_residual(p, r.x, r.z), 1e-6);
    auto f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(p.P * x) + c.dot(x); };
    EXPECT_LE(f(r.x), f(x0) + 1e-9);
  }
}

}  // namespace
}  // namespace voltvar
