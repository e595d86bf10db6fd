#pragma once

#include <stdexcept>

#include <Eigen/Dense>

namespace voltvar {

// Mean absolute error over all entries.
inline double mae(const Eigen::Ref<const Eigen::MatrixXd>& truth, const Eigen::Ref<const Eigen::MatrixXd>& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) throw std::invalid_argument("mae: shape mismatch");
  if (truth.size() == 0) return 0.0;
  return (truth - pred).cwiseAbs().mean();
}

}  // namespace voltvar
