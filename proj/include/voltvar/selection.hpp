#pragma once

// Bidirectional bus selection. Forward steps add the bus whose inclusion
// gives the lowest estimation error; backward steps drop, from the buses not
// yet selected, the one whose removal hurts least. Selected buses are never
// dropped and dropped buses are never selected.
//
// The error indicator is pluggable. A scorer provides
//   void   forward_base(const std::vector<std::size_t>& F)
//   double forward(std::size_t i)      // E(F + i)
//   void   backward_base(const std::vector<std::size_t>& B)
//   double backward(std::size_t j)     // E(B - j)
// over feature-bus positions 0..n-1. RidgeProxy implements these with
// rank-3 updates so a selection on a 100+ bus feeder takes seconds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/dataset.hpp"
#include "voltvar/grid.hpp"

namespace voltvar {

struct FeatureSelection {
  std::vector<std::size_t> selected;  // positions, in order of selection
  std::vector<std::size_t> removed;   // positions, in order of removal
  std::vector<double> eta;            // best E after each forward step
  std::vector<double> mu;             // chosen E after each backward step
  std::size_t forward_calls = 0;
  std::size_t backward_calls = 0;
};

template <class Scorer>
FeatureSelection bds_select(std::size_t n, std::size_t n_sel, Scorer& E) {
  if (n_sel < 1 || n_sel > n) throw std::invalid_argument("bds_select: n_sel must lie in [1, n]");
  FeatureSelection out;
  std::vector<std::size_t> F, B(n);
  for (std::size_t i = 0; i < n; ++i) B[i] = i;
  auto in = [](const std::vector<std::size_t>& s, std::size_t x) { return std::find(s.begin(), s.end(), x) != s.end(); };

  while (F.size() < n_sel) {
    std::vector<std::size_t> I;
    for (std::size_t b : B)
      if (!in(F, b)) I.push_back(b);
    if (I.empty()) throw std::runtime_error("bds_select: no candidates left to select");
    E.forward_base(F);
    std::size_t best = I.front();
    double best_e = std::numeric_limits<double>::infinity();
    for (std::size_t i : I) {
      const double e = E.forward(i);
      ++out.forward_calls;
      if (e < best_e) {
        best_e = e;
        best = i;
      }
    }
    F.push_back(best);
    out.selected.push_back(best);
    out.eta.push_back(best_e);

    // Dropping more would leave too few buses to finish the selection.
    if (B.size() <= n_sel) continue;
    std::vector<std::size_t> J;
    for (std::size_t b : B)
      if (!in(F, b)) J.push_back(b);
    if (J.empty()) continue;
    E.backward_base(B);
    std::size_t worst = J.front();
    double worst_e = std::numeric_limits<double>::infinity();
    for (std::size_t j : J) {
      const double e = E.backward(j);
      ++out.backward_calls;
      if (e < worst_e) {
        worst_e = e;
        worst = j;
      }
    }
    B.erase(std::find(B.begin(), B.end(), worst));
    out.removed.push_back(worst);
    out.mu.push_back(worst_e);
  }
  return out;
}

// Adapts a plain set function E(set) to the scorer interface.
template <class SetError>
class SetScorer {
 public:
  explicit SetScorer(SetError e) : e_(std::move(e)) {}
  void forward_base(const std::vector<std::size_t>& F) { base_ = F; }
  double forward(std::size_t i) {
    auto s = base_;
    s.push_back(i);
    std::sort(s.begin(), s.end());
    return e_(s);
  }
  void backward_base(const std::vector<std::size_t>& B) { base_ = B; }
  double backward(std::size_t j) {
    std::vector<std::size_t> s;
    for (std::size_t b : base_)
      if (b != j) s.push_back(b);
    return e_(s);
  }

 private:
  SetError e_;
  std::vector<std::size_t> base_;
};

// Validation MAE of ridge regression from the (p, q, V) features of a bus
// set to all labels. Features are z-scored and labels centered with training
// statistics; the regularized normal equations use the mean Gram matrix.
class RidgeProxy {
 public:
  RidgeProxy(const Dataset& ds, double lambda = 1e-4) : lambda_(lambda) {
    const auto ntr = static_cast<Eigen::Index>(ds.train_count());
    const Eigen::Index nval = ds.X.rows() - ntr;
    if (ntr < 2 || nval < 1) throw std::invalid_argument("RidgeProxy: dataset too small to split");
    const Eigen::MatrixXd Xtr = ds.X.topRows(ntr);
    const Eigen::MatrixXd Ytr = ds.Y.topRows(ntr);
    const Eigen::RowVectorXd mu = Xtr.colwise().mean();
    Eigen::RowVectorXd sd = ((Xtr.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(ntr)).sqrt();
    for (Eigen::Index c = 0; c < sd.size(); ++c)
      if (!(sd[c] > 1e-12)) sd[c] = 1.0;
    const Eigen::MatrixXd Z = (Xtr.rowwise() - mu).array().rowwise() / sd.array();
    y_mean_ = Ytr.colwise().mean();
    const Eigen::MatrixXd Yc = Ytr.rowwise() - y_mean_;
    A_ = Z.transpose() * Z / static_cast<double>(ntr);
    A_.diagonal().array() += lambda_;
    b_ = Z.transpose() * Yc / static_cast<double>(ntr);
    xval_ = (ds.X.bottomRows(nval).rowwise() - mu).array().rowwise() / sd.array();
    rval_ = ds.Y.bottomRows(nval).rowwise() - y_mean_;
  }

  [[nodiscard]] double lambda() const { return lambda_; }

  // Direct evaluation of E(set).
  double operator()(const std::vector<std::size_t>& set) const {
    if (set.empty()) return rval_.cwiseAbs().mean();
    const auto cols = columns(set);
    const Eigen::MatrixXd A = sub(A_, cols, cols);
    const Eigen::MatrixXd W = A.llt().solve(rows(b_, cols));
    return (rval_ - cols_of(xval_, cols) * W).cwiseAbs().mean();
  }

  void forward_base(const std::vector<std::size_t>& F) {
    fcols_ = columns(F);
    if (fcols_.empty()) {
      f_llt_ = Eigen::LLT<Eigen::MatrixXd>();
      w_f_.resize(0, b_.cols());
      r_f_ = rval_;
      x_f_.resize(xval_.rows(), 0);
      return;
    }
    f_llt_.compute(sub(A_, fcols_, fcols_));
    w_f_ = f_llt_.solve(rows(b_, fcols_));
    x_f_ = cols_of(xval_, fcols_);
    r_f_ = rval_ - x_f_ * w_f_;
  }

  double forward(std::size_t i) const {
    const std::vector<Eigen::Index> j = block(i);
    Eigen::Matrix3d S = sub(A_, j, j);
    Eigen::MatrixXd rhs = rows(b_, j);
    Eigen::MatrixXd D = cols_of(xval_, j);
    if (!fcols_.empty()) {
      const Eigen::MatrixXd Afj = sub(A_, fcols_, j);
      const Eigen::MatrixXd T = f_llt_.solve(Afj);
      S -= Afj.transpose() * T;
      rhs -= Afj.transpose() * w_f_;
      D -= x_f_ * T;
    }
    const Eigen::MatrixXd Wj = S.ldlt().solve(rhs);
    return (r_f_ - D * Wj).cwiseAbs().mean();
  }

  void backward_base(const std::vector<std::size_t>& B) {
    bbus_ = B;
    bcols_ = columns(B);
    const Eigen::MatrixXd A = sub(A_, bcols_, bcols_);
    h_ = A.llt().solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
    w_b_ = h_ * rows(b_, bcols_);
    const Eigen::MatrixXd xb = cols_of(xval_, bcols_);
    m_ = xb * h_;
    r_b_ = rval_ - xb * w_b_;
  }

  double backward(std::size_t j) const {
    const auto it = std::find(bbus_.begin(), bbus_.end(), j);
    if (it == bbus_.end()) throw std::invalid_argument("RidgeProxy: bus not in the backward base set");
    if (bbus_.size() == 1) return rval_.cwiseAbs().mean();
    const auto k = static_cast<Eigen::Index>(3 * (it - bbus_.begin()));
    const Eigen::Matrix3d Hjj = h_.block(k, k, 3, 3);
    const Eigen::MatrixXd corr = m_.middleCols(k, 3) * Hjj.ldlt().solve(w_b_.middleRows(k, 3));
    return (r_b_ + corr).cwiseAbs().mean();
  }

 private:
  static std::vector<Eigen::Index> block(std::size_t bus) {
    const auto b = static_cast<Eigen::Index>(3 * bus);
    return {b, b + 1, b + 2};
  }
  static std::vector<Eigen::Index> columns(const std::vector<std::size_t>& buses) {
    std::vector<Eigen::Index> c;
    for (std::size_t b : buses)
      for (Eigen::Index k : block(b)) c.push_back(k);
    return c;
  }
  static Eigen::MatrixXd sub(const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& r,
                             const std::vector<Eigen::Index>& c) {
    return M(r, c);
  }
  static Eigen::MatrixXd rows(const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& r) { return M(r, Eigen::all); }
  static Eigen::MatrixXd cols_of(const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& c) {
    return M(Eigen::all, c);
  }

  double lambda_;
  Eigen::MatrixXd A_, b_, xval_, rval_;
  Eigen::RowVectorXd y_mean_;
  std::vector<Eigen::Index> fcols_, bcols_;
  std::vector<std::size_t> bbus_;
  Eigen::LLT<Eigen::MatrixXd> f_llt_;
  Eigen::MatrixXd w_f_, x_f_, r_f_, h_, w_b_, m_, r_b_;
};

// BDS over the dataset's feature buses; returns canonical bus indices
// (feature position k is bus k + 1).
struct BusSelection {
  std::vector<BusIndex> selected;
  std::vector<BusIndex> removed;
  FeatureSelection raw;
};

inline BusSelection select_buses(const Dataset& ds, std::size_t n_sel, double lambda = 1e-4) {
  RidgeProxy proxy(ds, lambda);
  BusSelection out;
  out.raw = bds_select(ds.bus_count(), n_sel, proxy);
  for (std::size_t p : out.raw.selected) out.selected.push_back(p + 1);
  for (std::size_t p : out.raw.removed) out.removed.push_back(p + 1);
  return out;
}

// Selected buses next to a PV bus are swapped for that PV bus (lowest index
// when several), then all PV buses are added. Ascending, no duplicates.
inline std::vector<BusIndex> merge_with_pv(const std::vector<BusIndex>& selected, const RadialNetwork& net) {
  const auto& pv = net.pv_buses();
  auto is_pv = [&](BusIndex b) { return std::find(pv.begin(), pv.end(), b) != pv.end(); };
  std::vector<BusIndex> out(pv.begin(), pv.end());
  for (BusIndex b : selected) {
    BusIndex keep = b;
    if (!is_pv(b)) {
      for (BusIndex nb : neighbors(net, b))
        if (is_pv(nb)) {
          keep = nb;
          break;
        }
    }
    out.push_back(keep);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace voltvar
