#pragma once

// Exact AC power flow (polar Newton-Raphson), the LinDistFlow linear model,
// and voltage-magnitude sensitivities by Jacobian inversion and by
// perturb-and-observe.

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/grid.hpp"

namespace voltvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class PowerFlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Net bus injections (generation minus load) and the squared slack voltage.
struct OperatingPoint {
  VectorXd p;       // per bus; entry 0 (slack) is ignored
  VectorXd q;
  double v0 = 1.0;  // squared slack voltage magnitude
};

// Device state used to build an operating point.
struct DeviceState {
  int tap = 0;
  std::vector<int> cap_steps;  // aligned with capbank_buses()
  std::vector<double> pv_q;    // aligned with pv_buses()
};

inline DeviceState current_devices(const RadialNetwork& net) {
  DeviceState d;
  d.tap = net.oltc().tap;
  for (BusIndex b : net.capbank_buses()) d.cap_steps.push_back(net.bus(b).capbank->steps);
  for (BusIndex b : net.pv_buses()) d.pv_q.push_back(net.bus(b).pv->q_base);
  return d;
}

// Injections for a scenario with the given device state. The slack voltage
// uses the exact tap relation V0 = 1 + n * step.
inline OperatingPoint make_operating_point(const RadialNetwork& net, const Scenario& sc, const DeviceState& dev) {
  const std::size_t n = net.bus_count();
  OperatingPoint op;
  op.p = VectorXd::Zero(static_cast<Eigen::Index>(n));
  op.q = VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (BusIndex b = 0; b < n; ++b) {
    double m = sc.load_multiplier.empty() ? 1.0 : sc.load_multiplier[b];
    op.p[b] = -net.bus(b).load_p * m;
    op.q[b] = -net.bus(b).load_q * m;
  }
  const auto& pvb = net.pv_buses();
  for (std::size_t k = 0; k < pvb.size(); ++k) {
    op.p[pvb[k]] += sc.pv_p.at(k);
    op.q[pvb[k]] += dev.pv_q.at(k);
  }
  const auto& cb = net.capbank_buses();
  for (std::size_t k = 0; k < cb.size(); ++k) op.q[cb[k]] += dev.cap_steps.at(k) * net.bus(cb[k]).capbank->step_q;
  double v = net.oltc().slack_voltage(dev.tap);
  op.v0 = v * v;
  return op;
}

inline OperatingPoint nominal_operating_point(const RadialNetwork& net) {
  return make_operating_point(net, forecast_scenario(net), current_devices(net));
}

struct PowerFlowSolution {
  VectorXd voltage;  // |V| per bus
  VectorXd angle;    // radians per bus
  VectorXd line_p;   // sending-end flow, indexed like net.lines()
  VectorXd line_q;
  double total_loss = 0.0;
  bool converged = false;
  int iterations = 0;
  double mismatch = 0.0;
  std::string message;
};

struct AcOptions {
  double tol = 1e-8;
  int max_iter = 30;
};

namespace detail {

// Series admittances of the radial feeder, one per line.
struct Admittance {
  std::vector<double> g, b;      // series admittance per line
  std::vector<double> gii, bii;  // diagonal of the bus admittance matrix
};

inline Admittance admittance(const RadialNetwork& net) {
  Admittance y;
  const std::size_t n = net.bus_count();
  y.gii.assign(n, 0.0);
  y.bii.assign(n, 0.0);
  for (const Line& l : net.lines()) {
    std::complex<double> ys = 1.0 / std::complex<double>(l.r, l.x);
    y.g.push_back(ys.real());
    y.b.push_back(ys.imag());
    y.gii[l.from] += ys.real();
    y.gii[l.to] += ys.real();
    y.bii[l.from] += ys.imag();
    y.bii[l.to] += ys.imag();
  }
  return y;
}

// Computed injections P_i, Q_i for all buses.
inline void injections(const RadialNetwork& net, const Admittance& y, const VectorXd& vm, const VectorXd& va,
                       VectorXd& pc, VectorXd& qc) {
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  pc = VectorXd::Zero(n);
  qc = VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pc[i] = vm[i] * vm[i] * y.gii[i];
    qc[i] = -vm[i] * vm[i] * y.bii[i];
  }
  const auto& lines = net.lines();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    // Off-diagonal admittance is -y_series.
    const double g = -y.g[k], b = -y.b[k];
    const auto i = static_cast<Eigen::Index>(lines[k].from), j = static_cast<Eigen::Index>(lines[k].to);
    const double tij = va[i] - va[j];
    const double c = std::cos(tij), s = std::sin(tij);
    pc[i] += vm[i] * vm[j] * (g * c + b * s);
    qc[i] += vm[i] * vm[j] * (g * s - b * c);
    pc[j] += vm[j] * vm[i] * (g * c - b * s);
    qc[j] += vm[j] * vm[i] * (-g * s - b * c);
  }
}

// Polar Jacobian over the non-slack buses; unknown order [theta_1..n, V_1..n],
// equation order [P_1..n, Q_1..n].
inline MatrixXd jacobian(const RadialNetwork& net, const Admittance& y, const VectorXd& vm, const VectorXd& va,
                         const VectorXd& pc, const VectorXd& qc) {
  const auto nb = static_cast<Eigen::Index>(net.bus_count()) - 1;
  MatrixXd J = MatrixXd::Zero(2 * nb, 2 * nb);
  for (Eigen::Index i = 1; i <= nb; ++i) {
    const Eigen::Index r = i - 1;
    J(r, r) = -qc[i] - y.bii[i] * vm[i] * vm[i];
    J(r, nb + r) = pc[i] / vm[i] + y.gii[i] * vm[i];
    J(nb + r, r) = pc[i] - y.gii[i] * vm[i] * vm[i];
    J(nb + r, nb + r) = qc[i] / vm[i] - y.bii[i] * vm[i];
  }
  const auto& lines = net.lines();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const double g = -y.g[k], b = -y.b[k];
    const auto a = static_cast<Eigen::Index>(lines[k].from), c = static_cast<Eigen::Index>(lines[k].to);
    for (int dir = 0; dir < 2; ++dir) {
      const Eigen::Index i = dir == 0 ? a : c;
      const Eigen::Index k2 = dir == 0 ? c : a;
      if (i == 0) continue;
      const double tik = va[i] - va[k2];
      const double cs = std::cos(tik), sn = std::sin(tik);
      const Eigen::Index r = i - 1;
      if (k2 != 0) {
        const Eigen::Index col = k2 - 1;
        J(r, col) = vm[i] * vm[k2] * (g * sn - b * cs);
        J(r, nb + col) = vm[i] * (g * cs + b * sn);
        J(nb + r, col) = -vm[i] * vm[k2] * (g * cs + b * sn);
        J(nb + r, nb + col) = vm[i] * (g * sn - b * cs);
      }
    }
  }
  return J;
}

inline void fill_flows(const RadialNetwork& net, const Admittance& y, PowerFlowSolution& sol) {
  const auto& lines = net.lines();
  sol.line_p = VectorXd::Zero(static_cast<Eigen::Index>(lines.size()));
  sol.line_q = VectorXd::Zero(static_cast<Eigen::Index>(lines.size()));
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(lines[k].from), j = static_cast<Eigen::Index>(lines[k].to);
    std::complex<double> vi = std::polar(sol.voltage[i], sol.angle[i]);
    std::complex<double> vj = std::polar(sol.voltage[j], sol.angle[j]);
    std::complex<double> cur = (vi - vj) * std::complex<double>(y.g[k], y.b[k]);
    std::complex<double> s = vi * std::conj(cur);
    sol.line_p[static_cast<Eigen::Index>(k)] = s.real();
    sol.line_q[static_cast<Eigen::Index>(k)] = s.imag();
  }
}

}  // namespace detail

struct AcState {
  PowerFlowSolution solution;
  VectorXd p_calc, q_calc;
};

// Newton-Raphson from a flat start (or the given initial state). Never
// throws on divergence; inspect `converged` and `message`.
inline PowerFlowSolution solve_ac(const RadialNetwork& net, const OperatingPoint& op, const AcOptions& opt = {},
                                  const PowerFlowSolution* warm = nullptr) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("solve_ac: tolerance must be positive");
  if (!(op.v0 > 0.0)) throw std::invalid_argument("solve_ac: slack squared voltage must be positive");
  const auto nbus = static_cast<Eigen::Index>(net.bus_count());
  const Eigen::Index nb = nbus - 1;
  const detail::Admittance y = detail::admittance(net);

  PowerFlowSolution sol;
  if (warm && warm->voltage.size() == nbus && warm->angle.size() == nbus) {
    sol.voltage = warm->voltage;
    sol.angle = warm->angle;
  } else {
    sol.voltage = VectorXd::Constant(nbus, std::sqrt(op.v0));
    sol.angle = VectorXd::Zero(nbus);
  }
  sol.voltage[0] = std::sqrt(op.v0);
  sol.angle[0] = 0.0;

  VectorXd pc, qc, mis(2 * nb);
  for (int it = 0;; ++it) {
    detail::injections(net, y, sol.voltage, sol.angle, pc, qc);
    for (Eigen::Index i = 1; i <= nbus - 1; ++i) {
      mis[i - 1] = pc[i] - op.p[i];
      mis[nb + i - 1] = qc[i] - op.q[i];
    }
    sol.mismatch = nb > 0 ? mis.cwiseAbs().maxCoeff() : 0.0;
    sol.iterations = it;
    if (!std::isfinite(sol.mismatch)) {
      sol.message = "power flow diverged (non-finite mismatch)";
      break;
    }
    if (sol.mismatch <= opt.tol) {
      sol.converged = true;
      break;
    }
    if (it >= opt.max_iter) {
      sol.message = "power flow did not converge in " + std::to_string(opt.max_iter) + " iterations (mismatch " +
                    std::to_string(sol.mismatch) + ")";
      break;
    }
    MatrixXd J = detail::jacobian(net, y, sol.voltage, sol.angle, pc, qc);
    Eigen::PartialPivLU<MatrixXd> lu(J);
    if (!(lu.rcond() > 1e-14)) {
      sol.message = "singular power flow Jacobian";
      break;
    }
    VectorXd dx = lu.solve(-mis);
    for (Eigen::Index i = 1; i <= nb; ++i) {
      sol.angle[i] += dx[i - 1];
      sol.voltage[i] += dx[nb + i - 1];
    }
    if ((sol.voltage.array() <= 0.0).any() || sol.voltage.maxCoeff() > 10.0) {
      sol.message = "power flow diverged (voltage out of range)";
      break;
    }
  }
  detail::injections(net, y, sol.voltage, sol.angle, pc, qc);
  sol.total_loss = pc.sum();
  detail::fill_flows(net, y, sol);
  return sol;
}

// LinDistFlow: lossless flows by leaf-to-root accumulation, squared voltages
// by a root-to-leaf sweep. Angles are reported as zero; total_loss reports
// sum r (P^2 + Q^2) with v_nom = 1.
inline PowerFlowSolution solve_lindistflow(const RadialNetwork& net, const OperatingPoint& op) {
  const auto nbus = static_cast<Eigen::Index>(net.bus_count());
  PowerFlowSolution sol;
  sol.line_p = VectorXd::Zero(static_cast<Eigen::Index>(net.lines().size()));
  sol.line_q = VectorXd::Zero(static_cast<Eigen::Index>(net.lines().size()));
  VectorXd P = VectorXd::Zero(nbus), Q = VectorXd::Zero(nbus);  // flow into bus j
  const auto& topo = net.topological_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    BusIndex j = *it;
    if (j == net.slack()) continue;
    double pj = -op.p[static_cast<Eigen::Index>(j)], qj = -op.q[static_cast<Eigen::Index>(j)];
    for (BusIndex c : net.children(j)) {
      pj += P[static_cast<Eigen::Index>(c)];
      qj += Q[static_cast<Eigen::Index>(c)];
    }
    P[static_cast<Eigen::Index>(j)] = pj;
    Q[static_cast<Eigen::Index>(j)] = qj;
  }
  VectorXd v = VectorXd::Zero(nbus);
  v[0] = op.v0;
  sol.total_loss = 0.0;
  for (BusIndex j : topo) {
    if (j == net.slack()) continue;
    const Line& l = net.line_into(j);
    const auto jj = static_cast<Eigen::Index>(j);
    v[jj] = v[static_cast<Eigen::Index>(l.from)] - 2.0 * (l.r * P[jj] + l.x * Q[jj]);
    const auto k = static_cast<Eigen::Index>(net.line_index_into(j));
    sol.line_p[k] = P[jj];
    sol.line_q[k] = Q[jj];
    sol.total_loss += l.r * (P[jj] * P[jj] + Q[jj] * Q[jj]);
  }
  sol.converged = (v.array() > 0.0).all();
  if (!sol.converged) sol.message = "negative squared voltage in LinDistFlow";
  sol.voltage = v.cwiseMax(0.0).cwiseSqrt();
  sol.angle = VectorXd::Zero(nbus);
  return sol;
}

// dV/dp and dV/dq. Rows are the non-slack buses (row r <-> bus index r + 1),
// columns follow `columns` (the PV buses unless a full matrix is requested).
struct SensitivityMatrix {
  MatrixXd kp;
  MatrixXd kq;
  std::vector<BusIndex> columns;

  [[nodiscard]] Eigen::Index rows() const { return kp.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return kp.cols(); }
  [[nodiscard]] static Eigen::Index row_of(BusIndex bus) { return static_cast<Eigen::Index>(bus) - 1; }

  // Kp then Kq, each row-major.
  [[nodiscard]] VectorXd flatten() const {
    const Eigen::Index n = kp.size();
    VectorXd out(2 * n);
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < kp.rows(); ++r)
      for (Eigen::Index c = 0; c < kp.cols(); ++c) out[k++] = kp(r, c);
    for (Eigen::Index r = 0; r < kq.rows(); ++r)
      for (Eigen::Index c = 0; c < kq.cols(); ++c) out[k++] = kq(r, c);
    return out;
  }

  static SensitivityMatrix unflatten(const VectorXd& flat, Eigen::Index rows, std::vector<BusIndex> columns) {
    const auto cols = static_cast<Eigen::Index>(columns.size());
    if (flat.size() != 2 * rows * cols) throw std::invalid_argument("sensitivity vector has the wrong length");
    SensitivityMatrix s;
    s.columns = std::move(columns);
    s.kp.resize(rows, cols);
    s.kq.resize(rows, cols);
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) s.kp(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) s.kq(r, c) = flat[k++];
    return s;
  }
};

// Jacobian inversion at an already converged AC solution.
inline SensitivityMatrix sensitivities_at(const RadialNetwork& net, const PowerFlowSolution& sol,
                                          const std::vector<BusIndex>& columns) {
  const detail::Admittance y = detail::admittance(net);
  VectorXd pc, qc;
  detail::injections(net, y, sol.voltage, sol.angle, pc, qc);
  MatrixXd J = detail::jacobian(net, y, sol.voltage, sol.angle, pc, qc);
  Eigen::PartialPivLU<MatrixXd> lu(J);
  if (!(lu.rcond() > 1e-14)) throw PowerFlowError("singular Jacobian: operating point near voltage collapse");
  const MatrixXd Jinv = lu.inverse();
  const Eigen::Index nb = static_cast<Eigen::Index>(net.bus_count()) - 1;
  SensitivityMatrix s;
  s.columns = columns;
  const auto m = static_cast<Eigen::Index>(columns.size());
  s.kp.resize(nb, m);
  s.kq.resize(nb, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(columns[static_cast<std::size_t>(c)]) - 1;
    if (col < 0) throw std::invalid_argument("sensitivity column at the slack bus");
    s.kp.col(c) = Jinv.block(nb, col, nb, 1);
    s.kq.col(c) = Jinv.block(nb, nb + col, nb, 1);
  }
  return s;
}

inline std::vector<BusIndex> all_load_buses(const RadialNetwork& net) {
  std::vector<BusIndex> out;
  for (BusIndex b = 1; b < net.bus_count(); ++b) out.push_back(b);
  return out;
}

// Solves the AC flow at `op`, then inverts the Jacobian there.
inline SensitivityMatrix sensitivities_jacobian(const RadialNetwork& net, const OperatingPoint& op,
                                                const std::vector<BusIndex>& columns, const AcOptions& opt = {}) {
  PowerFlowSolution sol = solve_ac(net, op, opt);
  if (!sol.converged) throw PowerFlowError("sensitivities_jacobian: " + sol.message);
  return sensitivities_at(net, sol, columns);
}

inline SensitivityMatrix sensitivities_jacobian(const RadialNetwork& net, const OperatingPoint& op,
                                                const AcOptions& opt = {}) {
  return sensitivities_jacobian(net, op, net.pv_buses(), opt);
}

// Central differences: re-solve with +/- eps at each column bus for p and q.
inline SensitivityMatrix sensitivities_perturb(const RadialNetwork& net, const OperatingPoint& op, double eps,
                                               const std::vector<BusIndex>& columns) {
  if (!(eps > 0.0)) throw std::invalid_argument("sensitivities_perturb: eps must be positive");
  AcOptions opt;
  opt.tol = 1e-12;
  opt.max_iter = 50;
  const PowerFlowSolution base = solve_ac(net, op, opt);
  if (!base.converged) throw PowerFlowError("sensitivities_perturb: " + base.message);
  const Eigen::Index nb = static_cast<Eigen::Index>(net.bus_count()) - 1;
  SensitivityMatrix s;
  s.columns = columns;
  const auto m = static_cast<Eigen::Index>(columns.size());
  s.kp.resize(nb, m);
  s.kq.resize(nb, m);
  auto probe = [&](OperatingPoint o) {
    PowerFlowSolution r = solve_ac(net, o, opt, &base);
    if (!r.converged) throw PowerFlowError("sensitivities_perturb: perturbed point: " + r.message);
    return VectorXd(r.voltage.tail(nb));
  };
  for (Eigen::Index c = 0; c < m; ++c) {
    const auto b = static_cast<Eigen::Index>(columns[static_cast<std::size_t>(c)]);
    OperatingPoint up = op, dn = op;
    up.p[b] += eps;
    dn.p[b] -= eps;
    s.kp.col(c) = (probe(up) - probe(dn)) / (2.0 * eps);
    up = op;
    dn = op;
    up.q[b] += eps;
    dn.q[b] -= eps;
    s.kq.col(c) = (probe(up) - probe(dn)) / (2.0 * eps);
  }
  return s;
}

inline SensitivityMatrix sensitivities_perturb(const RadialNetwork& net, const OperatingPoint& op,
                                               double eps = 1e-5) {
  return sensitivities_perturb(net, op, eps, net.pv_buses());
}

}  // namespace voltvar
