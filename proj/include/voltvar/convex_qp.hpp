#pragma once

// Primal-dual interior-point solver (Mehrotra predictor-corrector) for
//
//     minimize    1/2 x'Px + c'x
//     subject to  Gx <= h
//
// with P positive semidefinite. LPs are the P = 0 case. The reduced Newton
// system (P + G'WG) dx = r is factored with a sparse LDL', so block-sparse
// problems with a few thousand variables stay cheap.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace voltvar {

using SparseMatrixd = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct QpProblem {
  SparseMatrixd P;   // n x n, may be empty (LP)
  Eigen::VectorXd c;
  SparseMatrixd G;   // m x n
  Eigen::VectorXd h;
};

enum class QpStatus { optimal, max_iterations, numerical_error };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iterations: return "max_iterations";
    case QpStatus::numerical_error: return "numerical_error";
  }
  return "unknown";
}

struct QpOptions {
  double feas_tol = 1e-10;
  double gap_tol = 1e-10;
  int max_iter = 100;
  double regularization = 1e-13;
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd s;  // slack h - Gx
  Eigen::VectorXd z;  // inequality multipliers, >= 0
  double primal_objective = 0.0;
  double dual_objective = -std::numeric_limits<double>::infinity();
  double gap = 0.0;          // s'z
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  QpStatus status = QpStatus::max_iterations;

  [[nodiscard]] bool optimal() const { return status == QpStatus::optimal; }
};

// KKT residual of a candidate (x, z): max of stationarity, primal
// infeasibility, dual infeasibility and complementarity violations.
inline double kkt_residual(const QpProblem& prob, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  Eigen::VectorXd grad = prob.c + prob.G.transpose() * z;
  if (prob.P.size() > 0) grad += prob.P * x;
  const Eigen::VectorXd slack = prob.h - prob.G * x;
  double r = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    r = std::max(r, std::max(0.0, -slack[i]));
    r = std::max(r, std::max(0.0, -z[i]));
    r = std::max(r, std::abs(z[i] * slack[i]));
  }
  return r;
}

namespace detail {

inline double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

}  // namespace detail

inline QpResult solve_qp(const QpProblem& prob, const QpOptions& opt = {}) {
  using Eigen::VectorXd;
  const Eigen::Index n = prob.c.size();
  const Eigen::Index m = prob.h.size();
  if (prob.G.rows() != m || prob.G.cols() != n) throw std::invalid_argument("solve_qp: G has the wrong shape");
  const bool has_p = prob.P.size() > 0;
  if (has_p && (prob.P.rows() != n || prob.P.cols() != n)) throw std::invalid_argument("solve_qp: P has the wrong shape");

  QpResult res;
  const SparseMatrixd Gt = prob.G.transpose();
  SparseMatrixd eye(n, n);
  eye.setIdentity();

  auto assemble = [&](const VectorXd& w) {
    SparseMatrixd M = Gt * w.asDiagonal() * prob.G;
    if (has_p) M += prob.P;
    M += opt.regularization * eye;
    return M;
  };

  Eigen::SimplicialLDLT<SparseMatrixd> ldlt;

  // Initial point: x solves (P + G'G) x = -c + G'h, so z = -(h - Gx) zeroes
  // the dual residual; both s and z are then shifted into the interior.
  VectorXd x(n), s(m), z(m);
  {
    SparseMatrixd M = assemble(VectorXd::Ones(m));
    ldlt.compute(M);
    if (ldlt.info() != Eigen::Success) {
      res.status = QpStatus::numerical_error;
      return res;
    }
    x = ldlt.solve(-prob.c + Gt * prob.h);
    VectorXd r = prob.h - prob.G * x;
    s = r;
    z = -r;
    const double ds = m ? std::max(0.0, -1.5 * s.minCoeff()) : 0.0;
    const double dz = m ? std::max(0.0, -1.5 * z.minCoeff()) : 0.0;
    s.array() += ds;
    z.array() += dz;
    if (m) {
      double sz = s.dot(z);
      double shift_s = 0.5 * sz / std::max(z.sum(), 1e-300);
      double shift_z = 0.5 * sz / std::max(s.sum(), 1e-300);
      s.array() += shift_s;
      z.array() += shift_z;
      const double floor = 1e-4 * std::max(1.0, std::max(s.maxCoeff(), z.maxCoeff()));
      s = s.cwiseMax(floor);
      z = z.cwiseMax(floor);
    }
  }

  const double hnorm = m ? prob.h.cwiseAbs().maxCoeff() : 0.0;
  const double cnorm = n ? prob.c.cwiseAbs().maxCoeff() : 0.0;

  for (int it = 0; it <= opt.max_iter; ++it) {
    VectorXd rd = prob.c + Gt * z;
    if (has_p) rd += prob.P * x;
    VectorXd rp = prob.G * x + s - prob.h;
    const double gap = s.dot(z);
    res.iterations = it;
    res.primal_residual = m ? rp.cwiseAbs().maxCoeff() : 0.0;
    res.dual_residual = n ? rd.cwiseAbs().maxCoeff() : 0.0;
    res.gap = gap;
    if (!std::isfinite(gap) || !std::isfinite(res.primal_residual) || !std::isfinite(res.dual_residual)) {
      res.status = QpStatus::numerical_error;
      break;
    }
    if (res.primal_residual <= opt.feas_tol * (1.0 + hnorm) && res.dual_residual <= opt.feas_tol * (1.0 + cnorm) &&
        gap <= opt.gap_tol) {
      res.status = QpStatus::optimal;
      break;
    }
    if (it == opt.max_iter) break;

    const VectorXd w = z.cwiseQuotient(s);
    ldlt.compute(assemble(w));
    if (ldlt.info() != Eigen::Success) {
      res.status = QpStatus::numerical_error;
      break;
    }
    auto newton = [&](const VectorXd& rc, VectorXd& dx, VectorXd& ds, VectorXd& dz) {
      VectorXd rhs = -rd + Gt * (rc - z.cwiseProduct(rp)).cwiseQuotient(s);
      dx = ldlt.solve(rhs);
      // One step of iterative refinement against the unregularized matrix.
      VectorXd Mdx = Gt * (w.cwiseProduct(prob.G * dx));
      if (has_p) Mdx += prob.P * dx;
      dx += ldlt.solve(rhs - Mdx);
      ds = -rp - prob.G * dx;
      dz = -(rc + z.cwiseProduct(ds)).cwiseQuotient(s);
    };

    const double mu = gap / static_cast<double>(std::max<Eigen::Index>(m, 1));
    VectorXd dxa, dsa, dza;
    newton(s.cwiseProduct(z), dxa, dsa, dza);
    const double aa = std::min(detail::max_step(s, dsa), detail::max_step(z, dza));
    const double mu_aff = (s + aa * dsa).dot(z + aa * dza) / static_cast<double>(std::max<Eigen::Index>(m, 1));
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    VectorXd rc = s.cwiseProduct(z) + dsa.cwiseProduct(dza);
    rc.array() -= sigma * mu;
    VectorXd dx, ds, dz;
    newton(rc, dx, ds, dz);
    const double a = std::min(1.0, 0.99 * std::min(detail::max_step(s, ds), detail::max_step(z, dz)));
    x += a * dx;
    s += a * ds;
    z += a * dz;
  }

  res.x = x;
  res.s = prob.h - prob.G * x;
  res.z = z;
  res.primal_objective = prob.c.dot(x);
  double quad = 0.0;
  if (has_p) quad = 0.5 * x.dot(prob.P * x);
  res.primal_objective += quad;
  res.dual_objective = -prob.h.dot(z) - quad;
  return res;
}

}  // namespace voltvar
