#pragma once

// Labeled operating points for sensitivity learning: features are the
// (p, q, V) triple of every non-slack bus, labels the Jacobian-inversion
// sensitivities (Kp then Kq, row-major) with respect to the PV buses.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/grid.hpp"
#include "voltvar/powerflow.hpp"

namespace voltvar {

struct SampleRecord {
  Eigen::VectorXd features;  // 3 per non-slack bus: p, q, V
  Eigen::VectorXd label;     // flattened SensitivityMatrix
};

struct Dataset {
  std::vector<int> bus_labels;     // feature buses (non-slack), canonical order
  std::vector<int> pv_bus_order;   // label columns
  Eigen::MatrixXd X;               // samples x 3n
  Eigen::MatrixXd Y;               // samples x 2 n m
  std::size_t attempts = 0;
  std::size_t failures = 0;
  double train_fraction = 0.8;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  [[nodiscard]] std::size_t bus_count() const { return bus_labels.size(); }
  [[nodiscard]] Eigen::Index label_rows() const { return static_cast<Eigen::Index>(bus_labels.size()); }
  [[nodiscard]] std::size_t train_count() const {
    return static_cast<std::size_t>(static_cast<double>(size()) * train_fraction);
  }
  [[nodiscard]] SampleRecord record(std::size_t i) const {
    return {X.row(static_cast<Eigen::Index>(i)).transpose(), Y.row(static_cast<Eigen::Index>(i)).transpose()};
  }
};

// Feature columns of the given feature-bus positions (0-based into bus_labels).
inline Eigen::MatrixXd feature_columns(const Eigen::MatrixXd& X, const std::vector<std::size_t>& positions) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(3 * positions.size()));
  for (std::size_t k = 0; k < positions.size(); ++k)
    out.middleCols(static_cast<Eigen::Index>(3 * k), 3) = X.middleCols(static_cast<Eigen::Index>(3 * positions[k]), 3);
  return out;
}

struct DatasetOptions {
  std::size_t count = 2000;
  std::pair<double, double> load_range{0.7, 1.3};  // system-wide load level
  double load_diversity = 0.0;  // per-bus multiplier 1 + U(-1, 1) * load_diversity on top of the level
  std::pair<double, double> pv_range{0.5, 1.5};    // multiple of the PV forecast, clipped at S
  double q_spread = 0.5;  // inverter q = q_base + U(-1, 1) * q_spread * capability
  std::uint64_t seed = 1;
  double max_failure_fraction = 0.5;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Eigen::VectorXd operating_features(const RadialNetwork& net, const OperatingPoint& op,
                                          const PowerFlowSolution& sol) {
  const Eigen::Index n = static_cast<Eigen::Index>(net.bus_count()) - 1;
  Eigen::VectorXd f(3 * n);
  for (Eigen::Index r = 0; r < n; ++r) {
    f[3 * r] = op.p[r + 1];
    f[3 * r + 1] = op.q[r + 1];
    f[3 * r + 2] = sol.voltage[r + 1];
  }
  return f;
}

inline Dataset generate_dataset(const RadialNetwork& net, const DatasetOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("generate_dataset: count must be at least 1");
  if (!(opt.load_range.first > 0.0 && opt.load_range.first <= opt.load_range.second) ||
      !(opt.pv_range.first >= 0.0 && opt.pv_range.first <= opt.pv_range.second) || opt.q_spread < 0.0 ||
      !(opt.load_diversity >= 0.0 && opt.load_diversity < 1.0))
    throw std::invalid_argument("generate_dataset: ranges must be positive and ordered");
  const std::size_t nb = net.bus_count();
  const auto& pvb = net.pv_buses();
  Dataset ds;
  for (BusIndex b = 1; b < nb; ++b) ds.bus_labels.push_back(net.label(b));
  for (BusIndex b : pvb) ds.pv_bus_order.push_back(net.label(b));
  const auto n = static_cast<Eigen::Index>(nb - 1), m = static_cast<Eigen::Index>(pvb.size());
  ds.X.resize(static_cast<Eigen::Index>(opt.count), 3 * n);
  ds.Y.resize(static_cast<Eigen::Index>(opt.count), 2 * n * m);
  const DeviceState base = current_devices(net);

  for (std::size_t i = 0; i < opt.count; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      ++ds.attempts;
      std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                        static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(attempt)};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> load(opt.load_range.first, opt.load_range.second);
      std::uniform_real_distribution<double> pv(opt.pv_range.first, opt.pv_range.second);
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      Scenario sc;
      sc.load_multiplier.resize(nb);
      const double level = load(rng);
      for (BusIndex b = 0; b < nb; ++b) sc.load_multiplier[b] = level * (1.0 + opt.load_diversity * unit(rng));
      DeviceState dev = base;
      for (std::size_t k = 0; k < pvb.size(); ++k) {
        const PvUnit& u = *net.bus(pvb[k]).pv;
        const double p = std::min(u.capacity, u.forecast_p * pv(rng));
        const double lim = u.q_limit(p);
        sc.pv_p.push_back(p);
        dev.pv_q[k] = std::clamp(u.q_base + unit(rng) * opt.q_spread * lim, -lim, lim);
      }
      const OperatingPoint op = make_operating_point(net, sc, dev);
      const PowerFlowSolution sol = solve_ac(net, op);
      bool ok = sol.converged;
      SensitivityMatrix k;
      if (ok) {
        try {
          k = sensitivities_at(net, sol, pvb);
        } catch (const PowerFlowError&) {
          ok = false;
        }
      }
      if (ok) {
        ds.X.row(static_cast<Eigen::Index>(i)) = operating_features(net, op, sol).transpose();
        ds.Y.row(static_cast<Eigen::Index>(i)) = k.flatten().transpose();
        break;
      }
      ++ds.failures;
      if (static_cast<double>(ds.failures) > opt.max_failure_fraction * static_cast<double>(std::max<std::size_t>(ds.attempts, 10)))
        throw DatasetError("generate_dataset: " + std::to_string(ds.failures) + " of " + std::to_string(ds.attempts) +
                           " draws failed to converge; narrow the load or PV ranges");
    }
  }
  return ds;
}

// CSV with a commented preamble:
//   # voltvar-dataset 1
//   # buses: <labels>
//   # pv_bus_order: <labels>
//   # train_fraction: <f>
// then a header row p_<b>,q_<b>,v_<b>,...,kp_<b>_<pv>,...,kq_<b>_<pv>,...
inline void write_dataset_csv(const Dataset& ds, std::ostream& os) {
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + std::to_string(v[k]);
    return s;
  };
  os << "# voltvar-dataset 1\n# buses: " << join(ds.bus_labels) << "\n# pv_bus_order: " << join(ds.pv_bus_order)
     << "\n# train_fraction: " << ds.train_fraction << "\n";
  bool first = true;
  auto col = [&](const std::string& name) {
    os << (first ? "" : ",") << name;
    first = false;
  };
  for (int b : ds.bus_labels) {
    col("p_" + std::to_string(b));
    col("q_" + std::to_string(b));
    col("v_" + std::to_string(b));
  }
  for (const char* kind : {"kp_", "kq_"})
    for (int b : ds.bus_labels)
      for (int g : ds.pv_bus_order) col(kind + std::to_string(b) + "_" + std::to_string(g));
  os << "\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index c = 0; c < ds.X.cols(); ++c) os << (c ? "," : "") << ds.X(i, c);
    for (Eigen::Index c = 0; c < ds.Y.cols(); ++c) os << "," << ds.Y(i, c);
    os << "\n";
  }
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DatasetError("cannot write " + path);
  write_dataset_csv(ds, os);
}

inline Dataset read_dataset_csv(std::istream& is) {
  Dataset ds;
  std::string line;
  auto ints = [](const std::string& s) {
    std::vector<int> v;
    std::istringstream ss(s);
    for (int x; ss >> x;) v.push_back(x);
    return v;
  };
  auto after = [](const std::string& s, const std::string& key) { return s.substr(key.size()); };
  bool header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# buses:", 0) == 0) ds.bus_labels = ints(after(line, "# buses:"));
      else if (line.rfind("# pv_bus_order:", 0) == 0) ds.pv_bus_order = ints(after(line, "# pv_bus_order:"));
      else if (line.rfind("# train_fraction:", 0) == 0) ds.train_fraction = std::stod(after(line, "# train_fraction:"));
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> r;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t next = line.find(',', pos);
      r.push_back(std::stod(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos)));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    rows.push_back(std::move(r));
  }
  const auto n = static_cast<Eigen::Index>(ds.bus_labels.size()), m = static_cast<Eigen::Index>(ds.pv_bus_order.size());
  const Eigen::Index nx = 3 * n, ny = 2 * n * m;
  ds.X.resize(static_cast<Eigen::Index>(rows.size()), nx);
  ds.Y.resize(static_cast<Eigen::Index>(rows.size()), ny);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != nx + ny)
      throw DatasetError("dataset row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) + " values");
    for (Eigen::Index c = 0; c < nx; ++c) ds.X(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    for (Eigen::Index c = 0; c < ny; ++c)
      ds.Y(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(nx + c)];
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot read " + path);
  return read_dataset_csv(is);
}

}  // namespace voltvar
