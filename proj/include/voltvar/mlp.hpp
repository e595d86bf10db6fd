#pragma once

// Fully connected regressor from selected-bus operating features to the
// flattened sensitivity matrix. Inputs are z-scored, outputs standardized;
// hidden layers use tanh, the output layer is linear. Training minimizes the
// squared error (summed over outputs, averaged over the batch) by mini-batch
// gradient descent with momentum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "voltvar/dataset.hpp"
#include "voltvar/metrics.hpp"
#include "voltvar/powerflow.hpp"

namespace voltvar {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MlpHyper {
  std::vector<int> hidden{128, 128};
  std::string activation = "tanh";
  int epochs = 200;
  int batch = 64;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;  // L2 penalty on weights, not biases
  bool cosine_decay = false;  // anneal the step to zero over the epochs
  // Rotate the z-scored inputs onto their principal axes and scale each to
  // unit variance, dropping axes with variance below whiten_floor times the
  // largest. Bus voltages are nearly collinear and plain gradient descent
  // makes slow progress along the weak axes otherwise.
  bool whiten = true;
  double whiten_floor = 1e-8;
  std::uint64_t seed = 1;
};

struct MlpModel {
  std::vector<int> layer_dims;  // input, hidden..., output
  std::vector<Eigen::MatrixXd> W;  // W[l] is dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> b;
  std::string activation = "tanh";
  std::vector<std::size_t> input_index;  // raw input columns kept (zero-variance ones dropped)
  std::size_t raw_input_dim = 0;
  Eigen::VectorXd x_mean, x_std;
  Eigen::MatrixXd whiten;  // kept inputs x network inputs; empty means identity
  Eigen::VectorXd y_mean, y_std;
  std::vector<std::size_t> constant_outputs;  // predicted as their training mean
  // Metadata for reshaping and for matching features to buses.
  std::vector<BusIndex> input_buses;
  std::vector<BusIndex> pv_columns;
  Eigen::Index label_rows = 0;
  // Single-precision copy of the weights used by predict(). The output layer
  // of a large feeder is several MB in double and falls out of cache.
  std::vector<Eigen::MatrixXf> Wf;
  std::vector<Eigen::VectorXf> bf;

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W.size(); ++l) n += static_cast<std::size_t>(W[l].size() + b[l].size());
    return n;
  }
};

namespace detail {

inline void check_activation(const std::string& a) {
  if (a != "tanh") throw std::invalid_argument("unsupported activation: " + a);
}

// Forward pass on normalized inputs (columns are samples). Keeps activations.
inline Eigen::MatrixXd mlp_forward(const MlpModel& m, const Eigen::MatrixXd& x, std::vector<Eigen::MatrixXd>* acts) {
  Eigen::MatrixXd a = x;
  if (acts) {
    acts->clear();
    acts->push_back(a);
  }
  const std::size_t L = m.W.size();
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = m.W[l] * a;
    z.colwise() += m.b[l];
    if (l + 1 < L) z = z.array().tanh();
    a = std::move(z);
    if (acts) acts->push_back(a);
  }
  return a;
}

}  // namespace detail

// Inputs in the model's normalized space; one sample per column.
inline Eigen::MatrixXd normalize_inputs(const MlpModel& m, const Eigen::MatrixXd& raw_rows) {
  if (static_cast<std::size_t>(raw_rows.cols()) != m.raw_input_dim)
    throw std::invalid_argument("feature length " + std::to_string(raw_rows.cols()) + " does not match the model's " +
                                std::to_string(m.raw_input_dim));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m.input_index.size()), raw_rows.rows());
  for (std::size_t k = 0; k < m.input_index.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    x.row(kk) = (raw_rows.col(static_cast<Eigen::Index>(m.input_index[k])).transpose().array() - m.x_mean[kk]) / m.x_std[kk];
  }
  if (m.whiten.size() > 0) return m.whiten.transpose() * x;
  return x;
}

inline Eigen::MatrixXd normalize_outputs(const MlpModel& m, const Eigen::MatrixXd& raw_rows) {
  Eigen::MatrixXd y = raw_rows.transpose();
  y.colwise() -= m.y_mean;
  y.array().colwise() /= m.y_std.array();
  for (std::size_t c : m.constant_outputs) y.row(static_cast<Eigen::Index>(c)).setZero();
  return y;
}

// Training objective 1/(2N) sum_s |f(x_s) - y_s|^2 on normalized data.
inline double mlp_objective(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::MatrixXd out = detail::mlp_forward(m, x, nullptr);
  return 0.5 * (out - y).squaredNorm() / static_cast<double>(x.cols());
}

struct MlpGradient {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
};

inline MlpGradient mlp_gradient(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                double* objective = nullptr) {
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::MatrixXd out = detail::mlp_forward(m, x, &acts);
  const double inv = 1.0 / static_cast<double>(x.cols());
  Eigen::MatrixXd delta = (out - y) * inv;
  if (objective) *objective = 0.5 * (out - y).squaredNorm() * inv;
  const std::size_t L = m.W.size();
  MlpGradient g;
  g.W.resize(L);
  g.b.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    g.W[l].noalias() = delta * acts[l].transpose();
    g.b[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = m.W[l].transpose() * delta;
      delta = back.array() * (1.0 - acts[l].array().square());
    }
  }
  return g;
}

// Flattened parameter access: W[0] (column-major), b[0], W[1], ...
inline Eigen::VectorXd get_parameters(const MlpModel& m) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(m.parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    p.segment(k, m.W[l].size()) = m.W[l].reshaped();
    k += m.W[l].size();
    p.segment(k, m.b[l].size()) = m.b[l];
    k += m.b[l].size();
  }
  return p;
}

// The whitening rotation is folded into the first layer of the copy.
inline void prepare_inference(MlpModel& m) {
  m.Wf.clear();
  m.bf.clear();
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    if (l == 0 && m.whiten.size() > 0)
      m.Wf.push_back((m.W[0] * m.whiten.transpose()).cast<float>());
    else
      m.Wf.push_back(m.W[l].cast<float>());
    m.bf.push_back(m.b[l].cast<float>());
  }
}

inline void set_parameters(MlpModel& m, const Eigen::VectorXd& p) {
  if (static_cast<std::size_t>(p.size()) != m.parameter_count()) throw std::invalid_argument("parameter vector length");
  m.Wf.clear();
  m.bf.clear();
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    m.W[l].reshaped() = p.segment(k, m.W[l].size());
    k += m.W[l].size();
    m.b[l] = p.segment(k, m.b[l].size());
    k += m.b[l].size();
  }
}

inline Eigen::VectorXd flatten_gradient(const MlpGradient& g) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < g.W.size(); ++l) n += g.W[l].size() + g.b[l].size();
  Eigen::VectorXd p(n);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < g.W.size(); ++l) {
    p.segment(k, g.W[l].size()) = g.W[l].reshaped();
    k += g.W[l].size();
    p.segment(k, g.b[l].size()) = g.b[l];
    k += g.b[l].size();
  }
  return p;
}

// Glorot-uniform weights, zero biases.
inline MlpModel init_mlp(std::vector<int> dims, const std::string& activation, std::uint64_t seed) {
  detail::check_activation(activation);
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("layer dimensions must be positive");
  MlpModel m;
  m.layer_dims = std::move(dims);
  m.activation = activation;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    const int in = m.layer_dims[l], out = m.layer_dims[l + 1];
    const double lim = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-lim, lim);
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    m.W.push_back(std::move(w));
    m.b.push_back(Eigen::VectorXd::Zero(out));
  }
  return m;
}

struct TrainReport {
  std::vector<double> epoch_objective;  // on the full training split, after each epoch
  double train_mae = 0.0;               // raw label units
  double validation_mae = 0.0;
  std::vector<std::string> warnings;
};

struct TrainResult {
  MlpModel model;
  TrainReport report;
};

// Raw-unit predictions for raw feature rows (one sample per row).
inline Eigen::MatrixXd predict_rows(const MlpModel& m, const Eigen::MatrixXd& raw_rows) {
  Eigen::MatrixXd y = detail::mlp_forward(m, normalize_inputs(m, raw_rows), nullptr);
  y.array().colwise() *= m.y_std.array();
  y.colwise() += m.y_mean;
  for (std::size_t c : m.constant_outputs) y.row(static_cast<Eigen::Index>(c)).setConstant(m.y_mean[static_cast<Eigen::Index>(c)]);
  return y.transpose();
}

// X, Y: one sample per row; the first n_train rows train, the rest validate.
inline TrainResult train_mlp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::size_t n_train,
                             const MlpHyper& hp) {
  if (X.rows() != Y.rows()) throw std::invalid_argument("train_mlp: feature and label counts differ");
  if (n_train < 1 || n_train > static_cast<std::size_t>(X.rows())) throw std::invalid_argument("train_mlp: bad split");
  if (hp.epochs < 0 || hp.batch < 1 || !(hp.learning_rate > 0.0) || hp.momentum < 0.0 || hp.momentum >= 1.0 ||
      hp.weight_decay < 0.0 || !(hp.whiten_floor > 0.0 && hp.whiten_floor < 1.0))
    throw std::invalid_argument("train_mlp: bad hyperparameters");
  detail::check_activation(hp.activation);
  TrainResult res;
  const auto ntr = static_cast<Eigen::Index>(n_train);
  const Eigen::MatrixXd Xtr = X.topRows(ntr), Ytr = Y.topRows(ntr);

  // Input statistics; zero-variance columns carry no information.
  const Eigen::RowVectorXd xm = Xtr.colwise().mean();
  const Eigen::RowVectorXd xs = ((Xtr.rowwise() - xm).array().square().colwise().sum() / static_cast<double>(ntr)).sqrt();
  std::vector<std::size_t> keep;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    if (xs[c] > 1e-12 * std::max(1.0, std::abs(xm[c])))
      keep.push_back(static_cast<std::size_t>(c));
    else
      res.report.warnings.push_back("dropped zero-variance input column " + std::to_string(c));
  }
  if (keep.empty()) {
    res.report.warnings.push_back("no varying inputs; the model predicts the training mean");
  }

  MlpModel m;
  m.raw_input_dim = static_cast<std::size_t>(X.cols());
  m.input_index = keep;
  if (keep.empty()) m.input_index = {0};
  m.x_mean.resize(static_cast<Eigen::Index>(m.input_index.size()));
  m.x_std.resize(static_cast<Eigen::Index>(m.input_index.size()));
  for (std::size_t k = 0; k < m.input_index.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(m.input_index[k]);
    m.x_mean[static_cast<Eigen::Index>(k)] = xm[c];
    m.x_std[static_cast<Eigen::Index>(k)] = keep.empty() ? 1.0 : xs[c];
  }
  Eigen::Index net_inputs = static_cast<Eigen::Index>(m.input_index.size());
  if (hp.whiten && !keep.empty()) {
    const Eigen::MatrixXd z = normalize_inputs(m, Xtr);
    const Eigen::MatrixXd cov = z * z.transpose() / static_cast<double>(ntr);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double top = es.eigenvalues().maxCoeff();
    std::vector<Eigen::Index> axes;
    for (Eigen::Index k = es.eigenvalues().size(); k-- > 0;)
      if (es.eigenvalues()[k] > hp.whiten_floor * top) axes.push_back(k);
    Eigen::MatrixXd T(cov.rows(), static_cast<Eigen::Index>(axes.size()));
    for (std::size_t k = 0; k < axes.size(); ++k) {
      Eigen::VectorXd v = es.eigenvectors().col(axes[k]);
      // Fix the sign so the rotation is reproducible.
      Eigen::Index big;
      v.cwiseAbs().maxCoeff(&big);
      if (v[big] < 0.0) v = -v;
      T.col(static_cast<Eigen::Index>(k)) = v / std::sqrt(es.eigenvalues()[axes[k]]);
    }
    m.whiten = std::move(T);
    net_inputs = m.whiten.cols();
  }

  std::vector<int> dims{static_cast<int>(net_inputs)};
  dims.insert(dims.end(), hp.hidden.begin(), hp.hidden.end());
  dims.push_back(static_cast<int>(Y.cols()));
  {
    MlpModel init = init_mlp(dims, hp.activation, hp.seed);
    m.layer_dims = std::move(init.layer_dims);
    m.activation = init.activation;
    m.W = std::move(init.W);
    m.b = std::move(init.b);
  }
  m.y_mean = Ytr.colwise().mean().transpose();
  m.y_std = ((Ytr.rowwise() - m.y_mean.transpose()).array().square().colwise().sum() / static_cast<double>(ntr))
                .sqrt()
                .transpose();
  for (Eigen::Index c = 0; c < m.y_std.size(); ++c) {
    if (!(m.y_std[c] > 1e-12 * std::max(1.0, std::abs(m.y_mean[c])))) {
      m.y_std[c] = 1.0;
      m.constant_outputs.push_back(static_cast<std::size_t>(c));
    }
  }
  if (keep.empty()) {
    for (auto& w : m.W) w.setZero();
  }

  const Eigen::MatrixXd xn = normalize_inputs(m, Xtr);
  const Eigen::MatrixXd yn = normalize_outputs(m, Ytr);
  std::vector<Eigen::MatrixXd> vW;
  std::vector<Eigen::VectorXd> vb;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    vW.push_back(Eigen::MatrixXd::Zero(m.W[l].rows(), m.W[l].cols()));
    vb.push_back(Eigen::VectorXd::Zero(m.b[l].size()));
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ntr));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(hp.seed ^ 0x9e3779b97f4a7c15ULL);
  const bool trainable = !keep.empty();
  for (int e = 0; e < hp.epochs && trainable; ++e) {
    const double lr = hp.cosine_decay ? 0.5 * hp.learning_rate * (1.0 + std::cos(M_PI * e / hp.epochs)) : hp.learning_rate;
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < ntr; start += hp.batch) {
      const Eigen::Index len = std::min<Eigen::Index>(hp.batch, ntr - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      const MlpGradient g = mlp_gradient(m, xn(Eigen::all, idx), yn(Eigen::all, idx));
      for (std::size_t l = 0; l < m.W.size(); ++l) {
        vW[l] = hp.momentum * vW[l] - lr * (g.W[l] + hp.weight_decay * m.W[l]);
        vb[l] = hp.momentum * vb[l] - lr * g.b[l];
        m.W[l] += vW[l];
        m.b[l] += vb[l];
      }
    }
    const double obj = mlp_objective(m, xn, yn);
    if (!std::isfinite(obj))
      throw TrainingError("train_mlp: objective became non-finite at epoch " + std::to_string(e + 1) +
                          "; lower the learning rate");
    res.report.epoch_objective.push_back(obj);
  }
  res.report.train_mae = mae(Ytr, predict_rows(m, Xtr));
  if (ntr < X.rows()) {
    const Eigen::Index nv = X.rows() - ntr;
    res.report.validation_mae = mae(Y.bottomRows(nv), predict_rows(m, X.bottomRows(nv)));
  }
  if (static_cast<double>(ntr) < 10.0 * static_cast<double>(Y.cols()))
    res.report.warnings.push_back("fewer than 10 training samples per output");
  prepare_inference(m);
  res.model = std::move(m);
  return res;
}

// Trains on the operating features of the given buses (canonical indices).
inline TrainResult train_on_buses(const Dataset& ds, const std::vector<BusIndex>& buses,
                                  const std::vector<BusIndex>& pv_columns, const MlpHyper& hp) {
  std::vector<std::size_t> pos;
  for (BusIndex b : buses) {
    if (b < 1 || b > ds.bus_count()) throw std::invalid_argument("train_on_buses: bus outside the dataset");
    pos.push_back(b - 1);
  }
  TrainResult r = train_mlp(feature_columns(ds.X, pos), ds.Y, ds.train_count(), hp);
  r.model.input_buses = buses;
  r.model.pv_columns = pv_columns;
  r.model.label_rows = ds.label_rows();
  return r;
}

// Features of the model's input buses from a full per-bus feature vector.
inline Eigen::VectorXd select_features(const MlpModel& m, const Eigen::VectorXd& all_features) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(3 * m.input_buses.size()));
  for (std::size_t k = 0; k < m.input_buses.size(); ++k)
    f.segment(static_cast<Eigen::Index>(3 * k), 3) = all_features.segment(static_cast<Eigen::Index>(3 * (m.input_buses[k] - 1)), 3);
  return f;
}

// Single-sample prediction reshaped into a sensitivity matrix.
inline SensitivityMatrix predict(const MlpModel& m, const Eigen::Ref<const Eigen::VectorXd>& features) {
  if (static_cast<std::size_t>(features.size()) != m.raw_input_dim)
    throw std::invalid_argument("predict: expected " + std::to_string(m.raw_input_dim) + " features, got " +
                                std::to_string(features.size()));
  Eigen::VectorXd x(static_cast<Eigen::Index>(m.input_index.size()));
  for (std::size_t k = 0; k < m.input_index.size(); ++k)
    x[static_cast<Eigen::Index>(k)] = (features[static_cast<Eigen::Index>(m.input_index[k])] - m.x_mean[static_cast<Eigen::Index>(k)]) /
                                      m.x_std[static_cast<Eigen::Index>(k)];
  const std::size_t L = m.W.size();
  Eigen::VectorXd a;
  if (m.Wf.size() == L) {
    Eigen::VectorXf af = x.cast<float>();
    for (std::size_t l = 0; l < L; ++l) {
      Eigen::VectorXf z = m.bf[l];
      z.noalias() += m.Wf[l] * af;
      if (l + 1 < L) z = z.array().tanh();
      af = std::move(z);
    }
    a = af.cast<double>();
  } else {
    a = m.whiten.size() > 0 ? Eigen::VectorXd(m.whiten.transpose() * x) : x;
    for (std::size_t l = 0; l < L; ++l) {
      Eigen::VectorXd z = m.b[l];
      z.noalias() += m.W[l] * a;
      if (l + 1 < L) z = z.array().tanh();
      a = std::move(z);
    }
  }
  Eigen::VectorXd y = m.y_mean + m.y_std.cwiseProduct(a);
  for (std::size_t c : m.constant_outputs) y[static_cast<Eigen::Index>(c)] = m.y_mean[static_cast<Eigen::Index>(c)];
  return SensitivityMatrix::unflatten(y, m.label_rows, m.pv_columns);
}

// Self-describing JSON model file.
inline nlohmann::json model_to_json(const MlpModel& m) {
  using nlohmann::json;
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json j;
  j["format"] = "voltvar-mlp";
  j["version"] = 1;
  j["layer_dims"] = m.layer_dims;
  j["activation"] = m.activation;
  j["raw_input_dim"] = m.raw_input_dim;
  j["input_index"] = m.input_index;
  j["x_mean"] = vec(m.x_mean);
  j["x_std"] = vec(m.x_std);
  {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < m.whiten.rows(); ++r)
      for (Eigen::Index c = 0; c < m.whiten.cols(); ++c) w.push_back(m.whiten(r, c));
    j["whiten"] = {{"rows", m.whiten.rows()}, {"cols", m.whiten.cols()}, {"row_major", w}};
  }
  j["y_mean"] = vec(m.y_mean);
  j["y_std"] = vec(m.y_std);
  j["constant_outputs"] = m.constant_outputs;
  j["input_buses"] = m.input_buses;
  j["pv_columns"] = m.pv_columns;
  j["label_rows"] = m.label_rows;
  j["layers"] = json::array();
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < m.W[l].rows(); ++r)
      for (Eigen::Index c = 0; c < m.W[l].cols(); ++c) w.push_back(m.W[l](r, c));
    j["layers"].push_back({{"weights_row_major", w}, {"bias", vec(m.b[l])}});
  }
  return j;
}

inline MlpModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "voltvar-mlp") throw std::invalid_argument("not a voltvar-mlp model file");
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  MlpModel m;
  m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  m.activation = j.at("activation").get<std::string>();
  detail::check_activation(m.activation);
  m.raw_input_dim = j.at("raw_input_dim").get<std::size_t>();
  m.input_index = j.at("input_index").get<std::vector<std::size_t>>();
  m.x_mean = vec(j.at("x_mean"));
  m.x_std = vec(j.at("x_std"));
  if (j.contains("whiten")) {
    const auto& jw = j.at("whiten");
    const auto rows = jw.at("rows").get<Eigen::Index>(), cols = jw.at("cols").get<Eigen::Index>();
    const auto w = jw.at("row_major").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(rows * cols)) throw std::invalid_argument("model whitening size mismatch");
    m.whiten.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m.whiten(r, c) = w[static_cast<std::size_t>(r * cols + c)];
  }
  m.y_mean = vec(j.at("y_mean"));
  m.y_std = vec(j.at("y_std"));
  m.constant_outputs = j.at("constant_outputs").get<std::vector<std::size_t>>();
  m.input_buses = j.at("input_buses").get<std::vector<BusIndex>>();
  m.pv_columns = j.at("pv_columns").get<std::vector<BusIndex>>();
  m.label_rows = j.at("label_rows").get<Eigen::Index>();
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != m.layer_dims.size()) throw std::invalid_argument("model layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto w = layers[l].at("weights_row_major").get<std::vector<double>>();
    const int out = m.layer_dims[l + 1], in = m.layer_dims[l];
    if (w.size() != static_cast<std::size_t>(out) * static_cast<std::size_t>(in))
      throw std::invalid_argument("model weight size mismatch");
    Eigen::MatrixXd W(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) W(r, c) = w[static_cast<std::size_t>(r) * static_cast<std::size_t>(in) + static_cast<std::size_t>(c)];
    m.W.push_back(std::move(W));
    m.b.push_back(vec(layers[l].at("bias")));
  }
  prepare_inference(m);
  return m;
}

inline void save_model(const MlpModel& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << model_to_json(m).dump(1) << "\n";
}

inline MlpModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return model_from_json(nlohmann::json::parse(is));
}

}  // namespace voltvar
