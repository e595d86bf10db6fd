#pragma once

// Second-stage robust Volt/VAr control. Each PV inverter follows the affine
// rule q = q_base + alpha * dp. For a box of PV deviations the worst-case
// voltage deviation at bus i is linear in the box dual variables, which
// turns the min-max problem over alpha into an LP:
//
//   min  sum_i V_i
//   s.t. V_i >=  sum_j (T'_ij dp_max_j + T''_ij dp_min_j)
//        V_i >= -sum_j (T'_ij dp_min_j + T''_ij dp_max_j)
//        T'_ij >= max(0, c_ij),  T''_ij <= min(0, c_ij),  c_ij = Kp_ij + alpha_j Kq_ij

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/convex_qp.hpp"
#include "voltvar/grid.hpp"
#include "voltvar/powerflow.hpp"

namespace voltvar {

using SlopeVector = Eigen::VectorXd;

struct UncertaintySet {
  Eigen::VectorXd dp_min;  // <= 0, per PV column
  Eigen::VectorXd dp_max;  // >= 0

  [[nodiscard]] Eigen::Index size() const { return dp_min.size(); }

  void validate() const {
    if (dp_min.size() != dp_max.size()) throw std::invalid_argument("uncertainty bounds differ in length");
    for (Eigen::Index j = 0; j < dp_min.size(); ++j)
      if (!(dp_min[j] <= 0.0) || !(dp_max[j] >= 0.0))
        throw std::invalid_argument("uncertainty interval must contain zero");
  }

  [[nodiscard]] UncertaintySet scaled(double f) const { return {dp_min * f, dp_max * f}; }
};

// Deviation box around the forecast: [-f * forecast, min(f * forecast, S - forecast)].
inline UncertaintySet build_uncertainty(const RadialNetwork& net, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("uncertainty fraction must lie in [0, 1]");
  const auto& pvb = net.pv_buses();
  UncertaintySet u;
  u.dp_min.resize(static_cast<Eigen::Index>(pvb.size()));
  u.dp_max.resize(static_cast<Eigen::Index>(pvb.size()));
  for (std::size_t k = 0; k < pvb.size(); ++k) {
    const PvUnit& pv = *net.bus(pvb[k]).pv;
    u.dp_min[static_cast<Eigen::Index>(k)] = -fraction * pv.forecast_p;
    u.dp_max[static_cast<Eigen::Index>(k)] = std::max(0.0, std::min(fraction * pv.forecast_p, pv.capacity - pv.forecast_p));
  }
  return u;
}

struct DeviationRange {
  Eigen::VectorXd max;  // per monitored bus
  Eigen::VectorXd min;
};

namespace detail {

inline void check_dims(const SensitivityMatrix& K, const UncertaintySet& U) {
  if (K.kp.rows() != K.kq.rows() || K.kp.cols() != K.kq.cols())
    throw std::invalid_argument("Kp and Kq shapes differ");
  if (K.cols() != U.size()) throw std::invalid_argument("sensitivity columns do not match the uncertainty set");
}

}  // namespace detail

// Extremes of sum_j (Kp_ij + alpha_j Kq_ij) dp_j over the box, per bus.
inline DeviationRange worst_case_deviation(const SensitivityMatrix& K, const SlopeVector& alpha,
                                           const UncertaintySet& U) {
  detail::check_dims(K, U);
  if (alpha.size() != K.cols()) throw std::invalid_argument("slope vector has the wrong length");
  DeviationRange d;
  d.max = Eigen::VectorXd::Zero(K.rows());
  d.min = Eigen::VectorXd::Zero(K.rows());
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      const double c = K.kp(i, j) + alpha[j] * K.kq(i, j);
      const double a = c * U.dp_max[j], b = c * U.dp_min[j];
      d.max[i] += std::max(a, b);
      d.min[i] += std::min(a, b);
    }
  }
  return d;
}

// Objective of the robust LP at a given alpha: sum over buses of the larger
// worst-case deviation magnitude.
inline double aarc_objective(const SensitivityMatrix& K, const SlopeVector& alpha, const UncertaintySet& U) {
  const DeviationRange d = worst_case_deviation(K, alpha, U);
  double s = 0.0;
  for (Eigen::Index i = 0; i < d.max.size(); ++i) s += std::max(d.max[i], -d.min[i]);
  return s;
}

struct AarcSolution {
  SlopeVector alpha;
  Eigen::VectorXd v_aux;
  Eigen::MatrixXd theta_p;  // >= 0
  Eigen::MatrixXd theta_n;  // <= 0
  double objective = 0.0;
  double duality_gap = 0.0;
  int iterations = 0;
};

struct AarcOptions {
  double alpha_regularization = 1e-9;  // picks the minimum-norm alpha on flat optima
  QpOptions qp;
};

// Box-dual variables and V_aux consistent with a given alpha.
inline AarcSolution aarc_certificate(const SensitivityMatrix& K, const SlopeVector& alpha, const UncertaintySet& U) {
  AarcSolution s;
  s.alpha = alpha;
  const Eigen::MatrixXd c = K.kp + K.kq * alpha.asDiagonal();
  s.theta_p = c.cwiseMax(0.0);
  s.theta_n = c.cwiseMin(0.0);
  const Eigen::VectorXd up = s.theta_p * U.dp_max + s.theta_n * U.dp_min;
  const Eigen::VectorXd dn = -(s.theta_p * U.dp_min + s.theta_n * U.dp_max);
  s.v_aux = up.cwiseMax(dn);
  s.objective = s.v_aux.sum();
  return s;
}

inline AarcSolution solve_aarc_centralized(const SensitivityMatrix& K, const UncertaintySet& U,
                                           const AarcOptions& opt = {}) {
  detail::check_dims(K, U);
  U.validate();
  const Eigen::Index n = K.rows(), m = K.cols();
  // x = [alpha (m), V (n), T' (n*m), T'' (n*m)], T blocks row-major.
  const Eigen::Index nx = m + n + 2 * n * m;
  auto tp = [&](Eigen::Index i, Eigen::Index j) { return m + n + i * m + j; };
  auto tn = [&](Eigen::Index i, Eigen::Index j) { return m + n + n * m + i * m + j; };
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(10 * n * m + 2 * n));
  Eigen::VectorXd h(4 * n * m + 2 * n);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double kp = K.kp(i, j), kq = K.kq(i, j);
      trip.emplace_back(row, tp(i, j), -1.0);  // T' >= 0
      h[row++] = 0.0;
      trip.emplace_back(row, tn(i, j), 1.0);  // T'' <= 0
      h[row++] = 0.0;
      if (kq != 0.0) trip.emplace_back(row, j, kq);  // T' >= Kp + alpha Kq
      trip.emplace_back(row, tp(i, j), -1.0);
      h[row++] = -kp;
      if (kq != 0.0) trip.emplace_back(row, j, -kq);  // T'' <= Kp + alpha Kq
      trip.emplace_back(row, tn(i, j), 1.0);
      h[row++] = kp;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (U.dp_max[j] != 0.0) {
        trip.emplace_back(row, tp(i, j), U.dp_max[j]);
        trip.emplace_back(row + 1, tn(i, j), -U.dp_max[j]);
      }
      if (U.dp_min[j] != 0.0) {
        trip.emplace_back(row, tn(i, j), U.dp_min[j]);
        trip.emplace_back(row + 1, tp(i, j), -U.dp_min[j]);
      }
    }
    trip.emplace_back(row, m + i, -1.0);
    trip.emplace_back(row + 1, m + i, -1.0);
    h[row++] = 0.0;
    h[row++] = 0.0;
  }
  QpProblem lp;
  lp.G.resize(row, nx);
  lp.G.setFromTriplets(trip.begin(), trip.end());
  lp.h = h;
  lp.c = Eigen::VectorXd::Zero(nx);
  lp.c.segment(m, n).setOnes();
  lp.P.resize(nx, nx);
  std::vector<Triplet> ptrip;
  for (Eigen::Index j = 0; j < m; ++j) ptrip.emplace_back(j, j, 2.0 * opt.alpha_regularization);
  lp.P.setFromTriplets(ptrip.begin(), ptrip.end());

  const QpResult r = solve_qp(lp, opt.qp);
  if (r.status == QpStatus::numerical_error) throw std::runtime_error("robust LP: solver failed");
  AarcSolution s = aarc_certificate(K, r.x.head(m), U);
  s.iterations = r.iterations;
  s.duality_gap = std::max(0.0, s.objective + opt.alpha_regularization * s.alpha.squaredNorm() - r.dual_objective);
  return s;
}

struct RuleOutput {
  std::vector<double> q;
  std::vector<bool> clipped;
};

// q = q_base + alpha * dp, clipped to the inverter capability at the realized
// active output.
inline RuleOutput apply_rule(const std::vector<double>& q_base, const SlopeVector& alpha,
                             const std::vector<double>& dp, const std::vector<double>& capacity,
                             const std::vector<double>& p_actual) {
  const std::size_t m = q_base.size();
  if (static_cast<std::size_t>(alpha.size()) != m || dp.size() != m || capacity.size() != m || p_actual.size() != m)
    throw std::invalid_argument("apply_rule: inputs are not aligned");
  RuleOutput out;
  out.q.resize(m);
  out.clipped.assign(m, false);
  for (std::size_t k = 0; k < m; ++k) {
    if (p_actual[k] > capacity[k] * (1.0 + 1e-12)) throw std::invalid_argument("apply_rule: active output exceeds rating");
    const double lim = std::sqrt(std::max(0.0, capacity[k] * capacity[k] - p_actual[k] * p_actual[k]));
    const double q = q_base[k] + alpha[static_cast<Eigen::Index>(k)] * dp[k];
    out.q[k] = std::clamp(q, -lim, lim);
    out.clipped[k] = out.q[k] != q;
  }
  return out;
}

}  // namespace voltvar
