#pragma once

// Distributed solve of the robust slope problem by consensus ADMM. Every
// monitored bus i keeps a local copy z_i of the slope vector and solves
//
//   min_z  f_i(z) + lambda_i'(z - alpha) + rho/2 |z - alpha|^2
//
// where f_i(z) is bus i's worst-case deviation magnitude; the central agent
// only averages the copies.
//
// f_i = max(A_i, B_i) with A_i, B_i separable and piecewise linear in z, so
// the local problem is solved exactly through its saddle form over the mixing
// weight t in [0, 1]: for fixed t each coordinate is a one-breakpoint
// proximal step, and the best t is found by bisection on A_i - B_i.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/aarc.hpp"

namespace voltvar {

struct ConsensusOptions {
  double rho = 0.01;
  int max_iter = 100;
  double tol = 1e-6;
  bool divide_by_n_plus_one = false;  // central average over n + 1 instead of the n contributors
  double local_gap_tol = 1e-8;
};

struct ConsensusState {
  int k = 0;
  Eigen::MatrixXd z;       // n x m local copies
  Eigen::MatrixXd lambda;  // n x m
  SlopeVector alpha;
  Eigen::VectorXd v_aux;   // local worst-case deviation at z_i
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double rho = 0.01;

  static ConsensusState zero(Eigen::Index n, Eigen::Index m, double rho) {
    ConsensusState s;
    s.z = Eigen::MatrixXd::Zero(n, m);
    s.lambda = Eigen::MatrixXd::Zero(n, m);
    s.alpha = SlopeVector::Zero(m);
    s.v_aux = Eigen::VectorXd::Zero(n);
    s.rho = rho;
    return s;
  }
};

struct LocalSolution {
  Eigen::VectorXd z;
  double v_aux = 0.0;
  double objective = 0.0;  // f_i(z) + penalty terms
  double dual_bound = 0.0;
  double gap = 0.0;
  double t = 0.0;
};

// Exact minimizer of one bus's augmented local problem.
inline LocalSolution solve_local(const Eigen::Ref<const Eigen::RowVectorXd>& kp,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& kq, const UncertaintySet& U,
                                 const SlopeVector& alpha, const Eigen::Ref<const Eigen::RowVectorXd>& lambda,
                                 double rho) {
  const Eigen::Index m = kp.size();
  auto z_of = [&](double t) {
    Eigen::VectorXd z(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double w = alpha[j] - lambda[j] / rho;
      const double q = kq[j];
      if (q == 0.0) {
        z[j] = w;
        continue;
      }
      const double s_pos = t * U.dp_max[j] - (1.0 - t) * U.dp_min[j];  // slope in c for c > 0
      const double s_neg = t * U.dp_min[j] - (1.0 - t) * U.dp_max[j];  // slope in c for c < 0
      const double right = (q > 0.0 ? s_pos : s_neg) * q;
      const double left = (q > 0.0 ? s_neg : s_pos) * q;
      const double z0 = -kp[j] / q;
      const double zr = w - right / rho, zl = w - left / rho;
      z[j] = zr > z0 ? zr : (zl < z0 ? zl : z0);
    }
    return z;
  };
  auto parts = [&](const Eigen::VectorXd& z) {
    double a = 0.0, b = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = kp[j] + z[j] * kq[j];
      a += std::max(c * U.dp_max[j], c * U.dp_min[j]);
      b += std::max(-c * U.dp_min[j], -c * U.dp_max[j]);
    }
    return std::pair{a, b};
  };
  auto penalty = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd d = z - alpha;
    return lambda.dot(d) + 0.5 * rho * d.squaredNorm();
  };

  double t;
  {
    auto [a0, b0] = parts(z_of(0.0));
    auto [a1, b1] = parts(z_of(1.0));
    if (a0 - b0 <= 0.0) {
      t = 0.0;
    } else if (a1 - b1 >= 0.0) {
      t = 1.0;
    } else {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
        const double mid = 0.5 * (lo + hi);
        auto [a, b] = parts(z_of(mid));
        (a - b > 0.0 ? lo : hi) = mid;
      }
      t = 0.5 * (lo + hi);
    }
  }
  LocalSolution out;
  out.t = t;
  out.z = z_of(t);
  auto [a, b] = parts(out.z);
  out.v_aux = std::max(a, b);
  out.objective = out.v_aux + penalty(out.z);
  out.dual_bound = t * a + (1.0 - t) * b + penalty(out.z);
  out.gap = out.objective - out.dual_bound;
  return out;
}

// One synchronous round: local solves, central average, dual ascent.
inline ConsensusState admm_step(const ConsensusState& s, const SensitivityMatrix& K, const UncertaintySet& U,
                                const ConsensusOptions& opt = {}) {
  const Eigen::Index n = K.rows(), m = K.cols();
  if (s.z.rows() != n || s.z.cols() != m || s.lambda.rows() != n || s.lambda.cols() != m || s.alpha.size() != m)
    throw std::invalid_argument("admm_step: state dimensions do not match the sensitivities");
  ConsensusState next = s;
  next.rho = opt.rho;
  for (Eigen::Index i = 0; i < n; ++i) {
    const LocalSolution loc = solve_local(K.kp.row(i), K.kq.row(i), U, s.alpha, s.lambda.row(i), opt.rho);
    if (loc.gap > opt.local_gap_tol * std::max(1.0, std::abs(loc.objective)))
      throw std::runtime_error("admm_step: local subproblem did not reach its tolerance");
    next.z.row(i) = loc.z.transpose();
    next.v_aux[i] = loc.v_aux;
  }
  const double divisor = static_cast<double>(n) + (opt.divide_by_n_plus_one ? 1.0 : 0.0);
  next.alpha = next.z.colwise().sum().transpose() / divisor;
  const Eigen::MatrixXd r = next.z.rowwise() - next.alpha.transpose();
  next.lambda += opt.rho * r;
  next.primal_residual = n > 0 && m > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
  next.dual_residual = m > 0 ? (next.alpha - s.alpha).cwiseAbs().maxCoeff() : 0.0;
  next.k = s.k + 1;
  return next;
}

struct ConsensusRecord {
  int k = 0;
  SlopeVector alpha;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;  // robust objective at the current alpha
};

struct ConsensusResult {
  SlopeVector alpha;
  std::vector<ConsensusRecord> trace;
  ConsensusState final_state;
  bool converged = false;
};

inline ConsensusResult run_consensus(const SensitivityMatrix& K, const UncertaintySet& U,
                                     const ConsensusOptions& opt = {}) {
  if (!(opt.rho > 0.0)) throw std::invalid_argument("run_consensus: rho must be positive");
  if (opt.max_iter < 1) throw std::invalid_argument("run_consensus: max_iter must be at least 1");
  detail::check_dims(K, U);
  U.validate();
  ConsensusResult res;
  ConsensusState s = ConsensusState::zero(K.rows(), K.cols(), opt.rho);
  while (s.k < opt.max_iter) {
    s = admm_step(s, K, U, opt);
    res.trace.push_back(ConsensusRecord{s.k, s.alpha, s.primal_residual, s.dual_residual,
                                        aarc_objective(K, s.alpha, U)});
    if (s.primal_residual <= opt.tol && s.dual_residual <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.alpha = s.alpha;
  res.final_state = std::move(s);
  return res;
}

}  // namespace voltvar
