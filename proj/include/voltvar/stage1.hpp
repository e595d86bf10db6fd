#pragma once

// First-stage dispatch: OLTC tap, capacitor steps and inverter base
// reactive set-points minimizing LinDistFlow losses subject to device and
// voltage limits, for one period given the previous device positions.
//
// For fixed discrete positions the problem is a convex QP in the inverter
// set-points (flows are affine in q under LinDistFlow). Discrete positions
// are enumerated when the ramp-feasible set is small, otherwise searched by
// best-first branch-and-bound on the continuous relaxation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/convex_qp.hpp"
#include "voltvar/grid.hpp"
#include "voltvar/powerflow.hpp"

namespace voltvar {

struct Stage1Problem {
  RadialNetwork net;
  Scenario forecast;             // load multipliers and forecast PV output
  int previous_tap = 0;
  std::vector<int> previous_cap_steps;  // aligned with capbank_buses()
  double v_min = 0.95 * 0.95;    // squared voltage bounds
  double v_max = 1.05 * 1.05;
  double v_nom = 1.0;
};

// Previous positions are the network's current device positions.
inline Stage1Problem make_stage1_problem(const RadialNetwork& net) {
  Stage1Problem p;
  p.net = net;
  p.forecast = forecast_scenario(net);
  p.previous_tap = net.oltc().tap;
  for (BusIndex b : net.capbank_buses()) p.previous_cap_steps.push_back(net.bus(b).capbank->steps);
  return p;
}

struct DiscreteChoice {
  int tap = 0;
  std::vector<int> cap_steps;

  bool operator==(const DiscreteChoice&) const = default;
};

struct Stage1Schedule {
  int tap = 0;
  std::vector<int> cap_steps;  // aligned with capbank_buses()
  std::vector<double> q_base;  // aligned with pv_buses()
  double objective_loss = 0.0;
  bool feasible = false;
  double max_violation = 0.0;  // squared-voltage units; 0 when feasible
};

struct Stage1Options {
  std::size_t enumeration_limit = 10000;
  double feasibility_tol = 1e-8;
  QpOptions qp;
};

struct Stage1Stats {
  std::size_t combinations = 0;  // ramp-feasible discrete combinations
  std::size_t visited = 0;       // combinations evaluated by the enumerator
  std::size_t qp_solves = 0;
  std::size_t nodes = 0;         // branch-and-bound nodes
  bool used_branch_and_bound = false;
};

struct QpSubsolution {
  std::vector<double> q;
  double objective = std::numeric_limits<double>::infinity();
  bool feasible = false;
  double max_violation = 0.0;
  double kkt_residual = 0.0;
  // Multipliers of the voltage limits per non-slack bus (row r <-> bus r + 1).
  Eigen::VectorXd lambda_lower, lambda_upper;
  Eigen::VectorXd v;  // LinDistFlow squared voltages, non-slack buses
};

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Affine LinDistFlow model over y = [q_pv (m), tap (1), cap steps (c)]:
// squared voltages v = v_const + V y, losses 1/2 y'Hy + g'y + k.
struct Stage1Model {
  std::size_t m = 0, c = 0;
  Eigen::VectorXd v_const;  // non-slack buses
  Eigen::MatrixXd V;
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double k = 0.0;
  Eigen::VectorXd q_limit;

  [[nodiscard]] std::size_t dim() const { return m + 1 + c; }
};

inline Stage1Model build_stage1_model(const Stage1Problem& prob) {
  const RadialNetwork& net = prob.net;
  const std::size_t nbus = net.bus_count();
  const auto& pvb = net.pv_buses();
  const auto& cb = net.capbank_buses();
  Stage1Model md;
  md.m = pvb.size();
  md.c = cb.size();
  const std::size_t dim = md.dim();

  // Base injections with no inverter or capacitor reactive output.
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nbus));
  Eigen::VectorXd q0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nbus));
  for (BusIndex b = 0; b < nbus; ++b) {
    const double mult = prob.forecast.load_multiplier.empty() ? 1.0 : prob.forecast.load_multiplier[b];
    p0[static_cast<Eigen::Index>(b)] = -net.bus(b).load_p * mult;
    q0[static_cast<Eigen::Index>(b)] = -net.bus(b).load_q * mult;
  }
  for (std::size_t k = 0; k < pvb.size(); ++k) p0[static_cast<Eigen::Index>(pvb[k])] += prob.forecast.pv_p.at(k);

  // Per bus j (line into j): base flows and the column pattern B[j] such
  // that Q_j = Q0_j - B[j] . y.
  Eigen::VectorXd P0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nbus));
  Eigen::VectorXd Q0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nbus));
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nbus), static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < pvb.size(); ++k) B(static_cast<Eigen::Index>(pvb[k]), static_cast<Eigen::Index>(k)) = 1.0;
  for (std::size_t k = 0; k < cb.size(); ++k)
    B(static_cast<Eigen::Index>(cb[k]), static_cast<Eigen::Index>(md.m + 1 + k)) = net.bus(cb[k]).capbank->step_q;
  const auto& topo = net.topological_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const auto j = static_cast<Eigen::Index>(*it);
    P0[j] -= p0[j];
    Q0[j] -= q0[j];
    if (*it == net.slack()) continue;
    const auto parent = static_cast<Eigen::Index>(*net.bus(*it).parent);
    if (parent != 0) {
      P0[parent] += P0[j];
      Q0[parent] += Q0[j];
      B.row(parent) += B.row(j);
    }
  }

  md.H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  md.g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  md.k = 0.0;
  for (BusIndex j = 1; j < nbus; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double r = net.line_into(j).r / prob.v_nom;
    md.H.noalias() += 2.0 * r * B.row(jj).transpose() * B.row(jj);
    md.g -= 2.0 * r * Q0[jj] * B.row(jj).transpose();
    md.k += r * (P0[jj] * P0[jj] + Q0[jj] * Q0[jj]);
  }

  const Eigen::Index nb = static_cast<Eigen::Index>(nbus) - 1;
  Eigen::VectorXd vfull_const = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nbus));
  Eigen::MatrixXd Vfull = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nbus), static_cast<Eigen::Index>(dim));
  vfull_const[0] = 1.0;
  Vfull(0, static_cast<Eigen::Index>(md.m)) = 2.0 * net.oltc().tap_step;
  for (BusIndex j : topo) {
    if (j == net.slack()) continue;
    const Line& l = net.line_into(j);
    const auto jj = static_cast<Eigen::Index>(j), ii = static_cast<Eigen::Index>(l.from);
    vfull_const[jj] = vfull_const[ii] - 2.0 * (l.r * P0[jj] + l.x * Q0[jj]);
    Vfull.row(jj) = Vfull.row(ii) + 2.0 * l.x * B.row(jj);
  }
  md.v_const = vfull_const.tail(nb);
  md.V = Vfull.bottomRows(nb);

  md.q_limit.resize(static_cast<Eigen::Index>(md.m));
  for (std::size_t k = 0; k < pvb.size(); ++k)
    md.q_limit[static_cast<Eigen::Index>(k)] = net.bus(pvb[k]).pv->q_limit(prob.forecast.pv_p.at(k));
  return md;
}

// Interval bounds for the discrete variables [tap, caps...].
struct DiscreteBox {
  std::vector<int> lo, hi;

  [[nodiscard]] bool fixed(std::size_t d) const { return lo[d] == hi[d]; }
};

inline DiscreteBox ramp_box(const Stage1Problem& prob) {
  const RadialNetwork& net = prob.net;
  DiscreteBox box;
  const OltcConfig& o = net.oltc();
  box.lo.push_back(std::max(o.n_min, prob.previous_tap - o.ramp_limit));
  box.hi.push_back(std::min(o.n_max, prob.previous_tap + o.ramp_limit));
  const auto& cb = net.capbank_buses();
  if (prob.previous_cap_steps.size() != cb.size())
    throw std::invalid_argument("stage1: previous capacitor steps do not match the capacitor banks");
  for (std::size_t k = 0; k < cb.size(); ++k) {
    const CapBank& c = *net.bus(cb[k]).capbank;
    box.lo.push_back(std::max(0, prob.previous_cap_steps[k] - c.ramp_limit));
    box.hi.push_back(std::min(c.max_steps, prob.previous_cap_steps[k] + c.ramp_limit));
  }
  for (std::size_t d = 0; d < box.lo.size(); ++d)
    if (box.lo[d] > box.hi[d]) throw InfeasibleError("stage1: previous device position outside its range");
  return box;
}

// Continuous QP over the free variables for a discrete box. Variable order:
// q (m), then the non-fixed discrete variables in [tap, caps] order.
struct RelaxedQp {
  QpProblem qp;
  QpProblem phase1;  // minimize t: voltage limits relaxed by t >= 0
  std::vector<std::size_t> free_discrete;  // indices into [tap, caps]
  double constant = 0.0;
  Eigen::Index n_voltage_rows = 0;
};

inline RelaxedQp build_relaxed_qp(const Stage1Model& md, const DiscreteBox& box, double v_min, double v_max) {
  const std::size_t nd = 1 + md.c;
  RelaxedQp out;
  std::vector<Eigen::Index> free_cols;
  for (std::size_t k = 0; k < md.m; ++k) free_cols.push_back(static_cast<Eigen::Index>(k));
  Eigen::VectorXd y_fixed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(md.dim()));
  for (std::size_t d = 0; d < nd; ++d) {
    const auto col = static_cast<Eigen::Index>(md.m + d);
    if (box.fixed(d)) {
      y_fixed[col] = box.lo[d];
    } else {
      free_cols.push_back(col);
      out.free_discrete.push_back(d);
    }
  }
  const auto nf = static_cast<Eigen::Index>(free_cols.size());
  Eigen::MatrixXd Hf(nf, nf);
  Eigen::VectorXd gf(nf);
  const Eigen::VectorXd Hy = md.H * y_fixed;
  for (Eigen::Index a = 0; a < nf; ++a) {
    gf[a] = md.g[free_cols[static_cast<std::size_t>(a)]] + Hy[free_cols[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < nf; ++b)
      Hf(a, b) = md.H(free_cols[static_cast<std::size_t>(a)], free_cols[static_cast<std::size_t>(b)]);
  }
  out.constant = md.k + md.g.dot(y_fixed) + 0.5 * y_fixed.dot(Hy);
  const Eigen::VectorXd v0 = md.v_const + md.V * y_fixed;
  const Eigen::Index nb = md.V.rows();
  out.n_voltage_rows = 2 * nb;

  // Rows: upper voltage, lower voltage, then variable boxes.
  std::vector<Triplet> trip, trip1;
  std::vector<double> h;
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < nb; ++i, ++row) {
    for (Eigen::Index a = 0; a < nf; ++a) {
      const double val = md.V(i, free_cols[static_cast<std::size_t>(a)]);
      if (val != 0.0) trip.emplace_back(row, a, val);
    }
    h.push_back(v_max - v0[i]);
  }
  for (Eigen::Index i = 0; i < nb; ++i, ++row) {
    for (Eigen::Index a = 0; a < nf; ++a) {
      const double val = md.V(i, free_cols[static_cast<std::size_t>(a)]);
      if (val != 0.0) trip.emplace_back(row, a, -val);
    }
    h.push_back(v0[i] - v_min);
  }
  trip1 = trip;
  for (Eigen::Index r = 0; r < row; ++r) trip1.emplace_back(r, nf, -1.0);
  for (Eigen::Index a = 0; a < nf; ++a) {
    double lo, hi;
    if (a < static_cast<Eigen::Index>(md.m)) {
      hi = md.q_limit[a];
      lo = -hi;
    } else {
      const std::size_t d = out.free_discrete[static_cast<std::size_t>(a) - md.m];
      lo = box.lo[d];
      hi = box.hi[d];
    }
    trip.emplace_back(row, a, 1.0);
    trip1.emplace_back(row, a, 1.0);
    h.push_back(hi);
    ++row;
    trip.emplace_back(row, a, -1.0);
    trip1.emplace_back(row, a, -1.0);
    h.push_back(-lo);
    ++row;
  }
  const Eigen::VectorXd hv = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));

  out.qp.P = Hf.sparseView();
  out.qp.c = gf;
  out.qp.G.resize(row, nf);
  out.qp.G.setFromTriplets(trip.begin(), trip.end());
  out.qp.h = hv;

  // Phase one: extra variable t with t >= 0.
  trip1.emplace_back(row, nf, -1.0);
  out.phase1.c = Eigen::VectorXd::Zero(nf + 1);
  out.phase1.c[nf] = 1.0;
  out.phase1.G.resize(row + 1, nf + 1);
  out.phase1.G.setFromTriplets(trip1.begin(), trip1.end());
  out.phase1.h.resize(row + 1);
  out.phase1.h.head(row) = hv;
  out.phase1.h[row] = 0.0;
  return out;
}

struct RelaxedSolution {
  bool feasible = false;
  double violation = 0.0;
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;  // free variables
  Eigen::VectorXd z;
  double kkt = 0.0;
  RelaxedQp model;
};

inline RelaxedSolution solve_relaxed(const Stage1Model& md, const DiscreteBox& box, const Stage1Problem& prob,
                                     const Stage1Options& opt, Stage1Stats* stats) {
  RelaxedSolution out;
  out.model = build_relaxed_qp(md, box, prob.v_min, prob.v_max);
  QpResult ph = solve_qp(out.model.phase1, opt.qp);
  if (stats) ++stats->qp_solves;
  const Eigen::Index nf = out.model.qp.c.size();
  out.violation = std::max(0.0, ph.x.size() ? ph.x[nf] : std::numeric_limits<double>::infinity());
  if (!ph.optimal() && ph.status != QpStatus::max_iterations) out.violation = std::numeric_limits<double>::infinity();
  out.x = ph.x.head(nf);
  if (out.violation > opt.feasibility_tol) return out;
  QpResult r = solve_qp(out.model.qp, opt.qp);
  if (stats) ++stats->qp_solves;
  if (!r.optimal()) {
    // Numerically thin feasible set: keep the phase-one point.
    out.violation = std::max(out.violation, opt.feasibility_tol);
    return out;
  }
  out.feasible = true;
  out.violation = 0.0;
  out.x = r.x;
  out.z = r.z;
  out.objective = r.primal_objective + out.model.constant;
  out.kkt = kkt_residual(out.model.qp, r.x, r.z);
  return out;
}

inline DiscreteBox fixed_box(const DiscreteChoice& ch) {
  DiscreteBox b;
  b.lo.push_back(ch.tap);
  b.lo.insert(b.lo.end(), ch.cap_steps.begin(), ch.cap_steps.end());
  b.hi = b.lo;
  return b;
}

inline int switching_count(const Stage1Problem& prob, const DiscreteChoice& ch) {
  int s = std::abs(ch.tap - prob.previous_tap);
  for (std::size_t k = 0; k < ch.cap_steps.size(); ++k) s += std::abs(ch.cap_steps[k] - prob.previous_cap_steps[k]);
  return s;
}

inline QpSubsolution subsolution_from(const Stage1Model& md, const RelaxedSolution& rs) {
  QpSubsolution s;
  s.feasible = rs.feasible;
  s.max_violation = rs.violation;
  s.objective = rs.objective;
  s.kkt_residual = rs.kkt;
  s.q.assign(rs.x.data(), rs.x.data() + static_cast<std::ptrdiff_t>(md.m));
  const Eigen::Index nb = md.V.rows();
  if (rs.z.size() > 0) {
    s.lambda_upper = rs.z.head(nb);
    s.lambda_lower = rs.z.segment(nb, nb);
  }
  return s;
}

}  // namespace detail

// Continuous subproblem for fixed discrete positions.
inline QpSubsolution qp_subsolve(const DiscreteChoice& choice, const Stage1Problem& prob,
                                 const Stage1Options& opt = {}) {
  const detail::Stage1Model md = detail::build_stage1_model(prob);
  if (choice.cap_steps.size() != md.c) throw std::invalid_argument("qp_subsolve: capacitor step count mismatch");
  const detail::DiscreteBox box = detail::fixed_box(choice);
  const detail::RelaxedSolution rs = detail::solve_relaxed(md, box, prob, opt, nullptr);
  QpSubsolution s = detail::subsolution_from(md, rs);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(md.dim()));
  for (std::size_t k = 0; k < md.m; ++k) y[static_cast<Eigen::Index>(k)] = s.q[k];
  y[static_cast<Eigen::Index>(md.m)] = choice.tap;
  for (std::size_t k = 0; k < md.c; ++k) y[static_cast<Eigen::Index>(md.m + 1 + k)] = choice.cap_steps[k];
  s.v = md.v_const + md.V * y;
  return s;
}

inline std::vector<DiscreteChoice> ramp_feasible_choices(const Stage1Problem& prob) {
  const detail::DiscreteBox box = detail::ramp_box(prob);
  std::vector<DiscreteChoice> out;
  std::vector<int> cur = box.lo;
  for (;;) {
    DiscreteChoice ch;
    ch.tap = cur[0];
    ch.cap_steps.assign(cur.begin() + 1, cur.end());
    out.push_back(ch);
    std::size_t d = cur.size();
    while (d > 0) {
      --d;
      if (cur[d] < box.hi[d]) {
        ++cur[d];
        for (std::size_t e = d + 1; e < cur.size(); ++e) cur[e] = box.lo[e];
        break;
      }
      if (d == 0) return out;
    }
  }
}

inline std::size_t ramp_feasible_count(const Stage1Problem& prob) {
  const detail::DiscreteBox box = detail::ramp_box(prob);
  std::size_t n = 1;
  for (std::size_t d = 0; d < box.lo.size(); ++d) {
    n *= static_cast<std::size_t>(box.hi[d] - box.lo[d] + 1);
    if (n > (std::size_t{1} << 40)) break;
  }
  return n;
}

namespace detail {

struct Candidate {
  DiscreteChoice choice;
  RelaxedSolution sol;
};

// True if a is preferred over b.
inline bool better(const Stage1Problem& prob, const Candidate& a, const Candidate& b) {
  if (a.sol.feasible != b.sol.feasible) return a.sol.feasible;
  if (!a.sol.feasible) return a.sol.violation < b.sol.violation;
  const double tol = 1e-9 * std::max(1.0, std::abs(b.sol.objective));
  if (a.sol.objective < b.sol.objective - tol) return true;
  if (a.sol.objective > b.sol.objective + tol) return false;
  return switching_count(prob, a.choice) < switching_count(prob, b.choice);
}

inline Stage1Schedule schedule_from(const Stage1Model& md, const Candidate& c) {
  Stage1Schedule s;
  s.tap = c.choice.tap;
  s.cap_steps = c.choice.cap_steps;
  s.q_base.assign(c.sol.x.data(), c.sol.x.data() + static_cast<std::ptrdiff_t>(md.m));
  s.feasible = c.sol.feasible;
  s.max_violation = c.sol.feasible ? 0.0 : c.sol.violation;
  if (c.sol.feasible) {
    s.objective_loss = c.sol.objective;
  } else {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(md.dim()));
    for (std::size_t k = 0; k < md.m; ++k) y[static_cast<Eigen::Index>(k)] = s.q_base[k];
    y[static_cast<Eigen::Index>(md.m)] = s.tap;
    for (std::size_t k = 0; k < md.c; ++k) y[static_cast<Eigen::Index>(md.m + 1 + k)] = s.cap_steps[k];
    s.objective_loss = 0.5 * y.dot(md.H * y) + md.g.dot(y) + md.k;
  }
  return s;
}

inline Stage1Schedule enumerate(const Stage1Problem& prob, const Stage1Model& md, const Stage1Options& opt,
                                Stage1Stats& stats) {
  std::optional<Candidate> best;
  for (const DiscreteChoice& ch : ramp_feasible_choices(prob)) {
    Candidate c{ch, solve_relaxed(md, fixed_box(ch), prob, opt, &stats)};
    ++stats.visited;
    if (!best || better(prob, c, *best)) best = std::move(c);
  }
  return schedule_from(md, *best);
}

inline Stage1Schedule branch_and_bound(const Stage1Problem& prob, const Stage1Model& md, const Stage1Options& opt,
                                       Stage1Stats& stats) {
  struct Node {
    DiscreteBox box;
    double bound;
  };
  auto cmp = [](const Node& a, const Node& b) { return a.bound > b.bound; };
  std::priority_queue<Node, std::vector<Node>, decltype(cmp)> open(cmp);
  std::optional<Candidate> best;

  const DiscreteBox root = ramp_box(prob);
  RelaxedSolution root_sol = solve_relaxed(md, root, prob, opt, &stats);
  ++stats.nodes;
  if (!root_sol.feasible) {
    // Least-violating schedule: round the phase-one relaxation and re-solve.
    DiscreteChoice ch;
    auto value = [&](std::size_t d) {
      for (std::size_t f = 0; f < root_sol.model.free_discrete.size(); ++f)
        if (root_sol.model.free_discrete[f] == d) return root_sol.x[static_cast<Eigen::Index>(md.m + f)];
      return static_cast<double>(root.lo[d]);
    };
    ch.tap = std::clamp(static_cast<int>(std::lround(value(0))), root.lo[0], root.hi[0]);
    for (std::size_t d = 1; d < root.lo.size(); ++d)
      ch.cap_steps.push_back(std::clamp(static_cast<int>(std::lround(value(d))), root.lo[d], root.hi[d]));
    Candidate c{ch, solve_relaxed(md, fixed_box(ch), prob, opt, &stats)};
    return schedule_from(md, c);
  }
  open.push(Node{root, root_sol.objective});

  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (best && node.bound >= best->sol.objective - 1e-12 * std::max(1.0, std::abs(best->sol.objective))) continue;
    RelaxedSolution rs = solve_relaxed(md, node.box, prob, opt, &stats);
    ++stats.nodes;
    if (!rs.feasible) continue;
    if (best && rs.objective >= best->sol.objective) continue;
    // Most fractional free discrete variable.
    std::size_t branch_d = SIZE_MAX;
    double branch_val = 0.0, worst = 1e-6;
    for (std::size_t f = 0; f < rs.model.free_discrete.size(); ++f) {
      const double val = rs.x[static_cast<Eigen::Index>(md.m + f)];
      const double frac = std::abs(val - std::round(val));
      if (frac > worst) {
        worst = frac;
        branch_d = rs.model.free_discrete[f];
        branch_val = val;
      }
    }
    if (branch_d == SIZE_MAX) {
      DiscreteChoice ch;
      auto value = [&](std::size_t d) {
        for (std::size_t f = 0; f < rs.model.free_discrete.size(); ++f)
          if (rs.model.free_discrete[f] == d) return static_cast<int>(std::lround(rs.x[static_cast<Eigen::Index>(md.m + f)]));
        return node.box.lo[d];
      };
      ch.tap = value(0);
      for (std::size_t d = 1; d < node.box.lo.size(); ++d) ch.cap_steps.push_back(value(d));
      Candidate c{ch, solve_relaxed(md, fixed_box(ch), prob, opt, &stats)};
      if (c.sol.feasible && (!best || better(prob, c, *best))) best = std::move(c);
      continue;
    }
    DiscreteBox left = node.box, right = node.box;
    left.hi[branch_d] = static_cast<int>(std::floor(branch_val));
    right.lo[branch_d] = static_cast<int>(std::ceil(branch_val));
    if (left.lo[branch_d] <= left.hi[branch_d]) open.push(Node{left, rs.objective});
    if (right.lo[branch_d] <= right.hi[branch_d]) open.push(Node{right, rs.objective});
  }
  if (!best) {
    // Relaxation feasible but no integral point is: fall back to rounding.
    DiscreteChoice ch;
    ch.tap = prob.previous_tap;
    ch.cap_steps = prob.previous_cap_steps;
    Candidate c{ch, solve_relaxed(md, fixed_box(ch), prob, opt, &stats)};
    return schedule_from(md, c);
  }
  return schedule_from(md, *best);
}

}  // namespace detail

// Globally optimal first-stage schedule. Among equal-loss combinations the
// one with the fewest device operations wins (then enumeration order).
inline Stage1Schedule solve_stage1(const Stage1Problem& prob, const Stage1Options& opt = {},
                                   Stage1Stats* stats_out = nullptr) {
  if (!(prob.v_min < prob.v_max)) throw std::invalid_argument("stage1: v_min must be below v_max");
  Stage1Stats stats;
  const detail::Stage1Model md = detail::build_stage1_model(prob);
  stats.combinations = ramp_feasible_count(prob);
  Stage1Schedule s;
  if (stats.combinations <= opt.enumeration_limit) {
    s = detail::enumerate(prob, md, opt, stats);
  } else {
    stats.used_branch_and_bound = true;
    s = detail::branch_and_bound(prob, md, opt, stats);
  }
  if (stats_out) *stats_out = stats;
  return s;
}

// Copy of the network with the schedule's device positions and set-points.
inline RadialNetwork apply_schedule(const RadialNetwork& net, const Stage1Schedule& s) {
  RadialNetwork out = net;
  out.oltc().tap = s.tap;
  const auto& cb = out.capbank_buses();
  for (std::size_t k = 0; k < cb.size(); ++k) out.bus(cb[k]).capbank->steps = s.cap_steps.at(k);
  const auto& pvb = out.pv_buses();
  for (std::size_t k = 0; k < pvb.size(); ++k) {
    PvUnit& u = *out.bus(pvb[k]).pv;
    u.q_base = std::clamp(s.q_base.at(k), -u.q_limit(), u.q_limit());
  }
  return out;
}

// Re-checks every dispatch constraint from scratch with the LinDistFlow
// sweep. Returns the largest violation found (0 when all hold).
struct Stage1Audit {
  double max_violation = 0.0;
  double objective_error = 0.0;
  std::vector<std::string> failures;

  [[nodiscard]] bool ok(double tol = 1e-7) const { return max_violation <= tol && failures.empty(); }
};

inline Stage1Audit audit_schedule(const Stage1Problem& prob, const Stage1Schedule& s, double tol = 1e-7) {
  Stage1Audit a;
  const RadialNetwork& net = prob.net;
  auto fail = [&](const std::string& what, double amount) {
    a.max_violation = std::max(a.max_violation, amount);
    if (amount > tol) a.failures.push_back(what);
  };
  const OltcConfig& o = net.oltc();
  fail("tap below n_min", std::max(0, o.n_min - s.tap));
  fail("tap above n_max", std::max(0, s.tap - o.n_max));
  fail("tap ramp", std::max(0, std::abs(s.tap - prob.previous_tap) - o.ramp_limit));
  const auto& cb = net.capbank_buses();
  if (s.cap_steps.size() != cb.size()) a.failures.push_back("capacitor step count");
  for (std::size_t k = 0; k < std::min(cb.size(), s.cap_steps.size()); ++k) {
    const CapBank& c = *net.bus(cb[k]).capbank;
    fail("capacitor below 0", std::max(0, -s.cap_steps[k]));
    fail("capacitor above max", std::max(0, s.cap_steps[k] - c.max_steps));
    fail("capacitor ramp", std::max(0, std::abs(s.cap_steps[k] - prob.previous_cap_steps[k]) - c.ramp_limit));
  }
  const auto& pvb = net.pv_buses();
  if (s.q_base.size() != pvb.size()) a.failures.push_back("inverter set-point count");
  DeviceState dev;
  dev.tap = s.tap;
  dev.cap_steps = s.cap_steps;
  dev.pv_q = s.q_base;
  for (std::size_t k = 0; k < std::min(pvb.size(), s.q_base.size()); ++k) {
    const double lim = net.bus(pvb[k]).pv->q_limit(prob.forecast.pv_p[k]);
    fail("inverter capability", std::max(0.0, std::abs(s.q_base[k]) - lim));
  }
  OperatingPoint op = make_operating_point(net, prob.forecast, dev);
  op.v0 = o.slack_v_linear(s.tap);
  const PowerFlowSolution lin = solve_lindistflow(net, op);
  for (BusIndex j = 1; j < net.bus_count(); ++j) {
    const double v = lin.voltage[static_cast<Eigen::Index>(j)] * lin.voltage[static_cast<Eigen::Index>(j)];
    fail("voltage below v_min", std::max(0.0, prob.v_min - v));
    fail("voltage above v_max", std::max(0.0, v - prob.v_max));
  }
  a.objective_error = std::abs(lin.total_loss / prob.v_nom - s.objective_loss);
  return a;
}

}  // namespace voltvar
