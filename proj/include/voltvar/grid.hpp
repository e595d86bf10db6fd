#pragma once

// Radial feeder data model.
//
// The feeder is a single-phase positive-sequence equivalent. Every electrical
// quantity is stored in per-unit on the feeder's (kV, kVA) base. Buses are
// re-indexed densely on construction: the slack bus gets index 0 and the
// remaining buses follow in ascending label order. The label is the id that
// appears in feeder files and CLI output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace voltvar {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using BusIndex = std::size_t;

struct PvUnit {
  double capacity = 0.0;    // apparent power rating S
  double forecast_p = 0.0;  // forecast active output
  double q_base = 0.0;      // base reactive set-point, written by stage 1

  // Reactive capability sqrt(S^2 - p^2) at active output p.
  [[nodiscard]] double q_limit(double p) const {
    return std::sqrt(std::max(0.0, capacity * capacity - p * p));
  }
  [[nodiscard]] double q_limit() const { return q_limit(forecast_p); }
};

struct CapBank {
  double step_q = 0.0;
  int max_steps = 0;
  int ramp_limit = 0;
  int steps = 0;

  [[nodiscard]] double injection() const { return steps * step_q; }
};

struct OltcConfig {
  double tap_step = 0.00625;
  int n_min = -16;
  int n_max = 16;
  int ramp_limit = 1;
  int tap = 0;

  [[nodiscard]] double slack_voltage(int position) const { return 1.0 + position * tap_step; }
  [[nodiscard]] double slack_voltage() const { return slack_voltage(tap); }
  // Linearized squared slack voltage used by the dispatch model.
  [[nodiscard]] double slack_v_linear(double position) const { return 1.0 + 2.0 * position * tap_step; }
};

struct BaseValues {
  double kv = 4.16;
  double kva = 100.0;
};

struct Bus {
  int label = 0;
  std::optional<BusIndex> parent;
  double load_p = 0.0;
  double load_q = 0.0;
  std::optional<PvUnit> pv;
  std::optional<CapBank> capbank;
};

struct Line {
  BusIndex from = 0;
  BusIndex to = 0;
  double r = 0.0;
  double x = 0.0;
};

// Raw, label-addressed description of a feeder as read from a file.
struct BusRecord {
  int label = 0;
  std::vector<int> parents;  // empty for the slack bus
  double load_p = 0.0;
  double load_q = 0.0;
};

struct LineRecord {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
};

struct PvRecord {
  int bus = 0;
  PvUnit unit;
};

struct CapBankRecord {
  int bus = 0;
  CapBank bank;
};

struct NetworkRecord {
  std::string name;
  std::string description;
  BaseValues base;
  std::optional<int> slack;
  std::vector<BusRecord> buses;
  std::vector<LineRecord> lines;
  OltcConfig oltc;
  std::vector<CapBankRecord> capbanks;
  std::vector<PvRecord> pv;
};

class RadialNetwork {
 public:
  RadialNetwork() = default;

  // Validates the record and builds the canonical network. Throws
  // NetworkError on any radiality or device invariant violation.
  static RadialNetwork build(const NetworkRecord& rec);

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] const std::string& description() const { return description_; }
  [[nodiscard]] const BaseValues& base() const { return base_; }
  [[nodiscard]] const OltcConfig& oltc() const { return oltc_; }
  [[nodiscard]] OltcConfig& oltc() { return oltc_; }

  [[nodiscard]] std::size_t bus_count() const { return buses_.size(); }
  // Number of non-slack buses.
  [[nodiscard]] std::size_t load_bus_count() const { return buses_.size() - 1; }
  [[nodiscard]] static constexpr BusIndex slack() { return 0; }

  [[nodiscard]] const std::vector<Bus>& buses() const { return buses_; }
  [[nodiscard]] const Bus& bus(BusIndex i) const { return buses_.at(i); }
  [[nodiscard]] Bus& bus(BusIndex i) { return buses_.at(i); }
  [[nodiscard]] const std::vector<Line>& lines() const { return lines_; }
  // Line feeding bus i (i != slack).
  [[nodiscard]] const Line& line_into(BusIndex i) const { return lines_.at(line_into_.at(i)); }
  [[nodiscard]] std::size_t line_index_into(BusIndex i) const { return line_into_.at(i); }
  [[nodiscard]] const std::vector<BusIndex>& children(BusIndex i) const { return children_.at(i); }
  // Parents appear before children.
  [[nodiscard]] const std::vector<BusIndex>& topological_order() const { return topo_; }
  [[nodiscard]] std::size_t depth(BusIndex i) const { return depth_.at(i); }
  [[nodiscard]] std::size_t max_depth() const {
    return depth_.empty() ? 0 : *std::max_element(depth_.begin(), depth_.end());
  }

  [[nodiscard]] BusIndex index_of(int label) const {
    auto it = by_label_.find(label);
    if (it == by_label_.end()) throw NetworkError("unknown bus id " + std::to_string(label));
    return it->second;
  }
  [[nodiscard]] bool has_label(int label) const { return by_label_.count(label) > 0; }
  [[nodiscard]] int label(BusIndex i) const { return buses_.at(i).label; }

  // Buses hosting a PV unit, ascending index.
  [[nodiscard]] const std::vector<BusIndex>& pv_buses() const { return pv_buses_; }
  [[nodiscard]] const std::vector<BusIndex>& capbank_buses() const { return cap_buses_; }

  // Buses on the path slack -> i, excluding the slack, root first.
  [[nodiscard]] std::vector<BusIndex> path_from_slack(BusIndex i) const {
    std::vector<BusIndex> path;
    for (BusIndex b = i; b != slack(); b = *buses_[b].parent) path.push_back(b);
    std::reverse(path.begin(), path.end());
    return path;
  }

  // Re-derives everything from buses/lines; used after device edits to keep
  // the PV and capacitor registries in sync.
  void refresh_registries();

  // Exports the network back to a label-addressed record.
  [[nodiscard]] NetworkRecord to_record() const;

 private:
  std::string name_;
  std::string description_;
  BaseValues base_;
  OltcConfig oltc_;
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<std::size_t> line_into_;
  std::vector<std::vector<BusIndex>> children_;
  std::vector<BusIndex> topo_;
  std::vector<std::size_t> depth_;
  std::vector<BusIndex> pv_buses_;
  std::vector<BusIndex> cap_buses_;
  std::unordered_map<int, BusIndex> by_label_;
};

inline RadialNetwork RadialNetwork::build(const NetworkRecord& rec) {
  if (rec.buses.empty()) throw NetworkError("feeder has no buses");

  std::unordered_map<int, const BusRecord*> by_label;
  for (const auto& b : rec.buses) {
    if (!by_label.emplace(b.label, &b).second)
      throw NetworkError("duplicate bus id " + std::to_string(b.label));
  }

  std::vector<int> roots;
  for (const auto& b : rec.buses) {
    if (b.parents.size() > 1) throw NetworkError("not radial: bus " + std::to_string(b.label) + " has several parents");
    if (b.parents.empty()) roots.push_back(b.label);
  }

  // Parents may be given either on the bus or implied by the line list.
  std::unordered_map<int, const LineRecord*> line_to;
  for (const auto& l : rec.lines) {
    if (!by_label.count(l.from) || !by_label.count(l.to))
      throw NetworkError("line " + std::to_string(l.from) + "-" + std::to_string(l.to) + " references an unknown bus");
    if (l.from == l.to) throw NetworkError("self loop at bus " + std::to_string(l.from));
    if (!line_to.emplace(l.to, &l).second)
      throw NetworkError("not radial: bus " + std::to_string(l.to) + " is fed by several lines");
    if (!(l.r > 0.0) || !(l.x > 0.0))
      throw NetworkError("line " + std::to_string(l.from) + "-" + std::to_string(l.to) + " must have r > 0 and x > 0");
  }

  std::unordered_map<int, int> parent_of;
  for (const auto& b : rec.buses) {
    auto lt = line_to.find(b.label);
    if (!b.parents.empty()) {
      int p = b.parents.front();
      if (!by_label.count(p))
        throw NetworkError("dangling parent reference " + std::to_string(p) + " at bus " + std::to_string(b.label));
      if (lt == line_to.end())
        throw NetworkError("bus " + std::to_string(b.label) + " has no line from its parent");
      if (lt->second->from != p)
        throw NetworkError("not radial: bus " + std::to_string(b.label) + " has parent " + std::to_string(p) +
                           " but is fed from " + std::to_string(lt->second->from));
      parent_of[b.label] = p;
    }
  }
  // Buses without an explicit parent take it from the line list.
  roots.clear();
  for (const auto& b : rec.buses) {
    if (parent_of.count(b.label)) continue;
    auto lt = line_to.find(b.label);
    if (lt != line_to.end()) {
      parent_of[b.label] = lt->second->from;
    } else {
      roots.push_back(b.label);
    }
  }
  if (roots.empty()) throw NetworkError("cycle detected: no slack bus");
  if (roots.size() > 1) throw NetworkError("multiple slack buses");
  int slack_label = roots.front();
  if (rec.slack && *rec.slack != slack_label)
    throw NetworkError("declared slack " + std::to_string(*rec.slack) + " is not the root bus " +
                       std::to_string(slack_label));
  if (rec.lines.size() != rec.buses.size() - 1)
    throw NetworkError("line count must equal bus count - 1");

  // Cycle check: every parent chain must reach the slack.
  for (const auto& b : rec.buses) {
    int cur = b.label;
    std::size_t steps = 0;
    while (cur != slack_label) {
      cur = parent_of.at(cur);
      if (++steps > rec.buses.size()) throw NetworkError("cycle detected at bus " + std::to_string(b.label));
    }
  }

  RadialNetwork net;
  net.name_ = rec.name;
  net.description_ = rec.description;
  net.base_ = rec.base;
  net.oltc_ = rec.oltc;
  if (net.oltc_.n_min > net.oltc_.n_max || net.oltc_.tap < net.oltc_.n_min || net.oltc_.tap > net.oltc_.n_max)
    throw NetworkError("oltc tap position outside [n_min, n_max]");
  if (net.oltc_.ramp_limit < 0) throw NetworkError("oltc ramp limit must be non-negative");
  if (!(net.base_.kv > 0.0) || !(net.base_.kva > 0.0)) throw NetworkError("base values must be positive");

  std::vector<int> labels;
  labels.reserve(rec.buses.size());
  for (const auto& b : rec.buses)
    if (b.label != slack_label) labels.push_back(b.label);
  std::sort(labels.begin(), labels.end());
  labels.insert(labels.begin(), slack_label);

  net.buses_.resize(labels.size());
  for (BusIndex i = 0; i < labels.size(); ++i) net.by_label_[labels[i]] = i;
  for (BusIndex i = 0; i < labels.size(); ++i) {
    const BusRecord& br = *by_label.at(labels[i]);
    Bus& b = net.buses_[i];
    b.label = br.label;
    if (!(br.load_p >= 0.0)) throw NetworkError("negative active load at bus " + std::to_string(br.label));
    if (!std::isfinite(br.load_q)) throw NetworkError("non-finite reactive load at bus " + std::to_string(br.label));
    b.load_p = br.load_p;
    b.load_q = br.load_q;
    if (i != 0) b.parent = net.by_label_.at(parent_of.at(br.label));
  }

  net.line_into_.assign(labels.size(), static_cast<std::size_t>(-1));
  for (BusIndex i = 1; i < labels.size(); ++i) {
    const LineRecord& lr = *line_to.at(labels[i]);
    net.line_into_[i] = net.lines_.size();
    net.lines_.push_back(Line{net.by_label_.at(lr.from), i, lr.r, lr.x});
  }

  for (const auto& pr : rec.pv) {
    auto it = net.by_label_.find(pr.bus);
    if (it == net.by_label_.end()) throw NetworkError("pv unit at unknown bus " + std::to_string(pr.bus));
    Bus& b = net.buses_[it->second];
    if (b.pv) throw NetworkError("several pv units at bus " + std::to_string(pr.bus));
    const PvUnit& u = pr.unit;
    if (!(u.capacity > 0.0)) throw NetworkError("pv capacity must be positive at bus " + std::to_string(pr.bus));
    if (u.forecast_p < 0.0 || u.forecast_p > u.capacity)
      throw NetworkError("pv forecast outside [0, S] at bus " + std::to_string(pr.bus));
    if (std::abs(u.q_base) > u.q_limit() + 1e-9)
      throw NetworkError("pv base reactive power exceeds capability at bus " + std::to_string(pr.bus));
    b.pv = u;
  }
  for (const auto& cr : rec.capbanks) {
    auto it = net.by_label_.find(cr.bus);
    if (it == net.by_label_.end()) throw NetworkError("capacitor bank at unknown bus " + std::to_string(cr.bus));
    Bus& b = net.buses_[it->second];
    if (b.capbank) throw NetworkError("several capacitor banks at bus " + std::to_string(cr.bus));
    const CapBank& c = cr.bank;
    if (c.max_steps < 0 || c.steps < 0 || c.steps > c.max_steps || c.ramp_limit < 0)
      throw NetworkError("capacitor bank steps outside [0, max_steps] at bus " + std::to_string(cr.bus));
    b.capbank = c;
  }
  if (net.buses_[0].pv) throw NetworkError("pv unit at the slack bus is not supported");
  if (net.buses_[0].capbank) throw NetworkError("capacitor bank at the slack bus is not supported");

  net.refresh_registries();
  return net;
}

inline void RadialNetwork::refresh_registries() {
  const std::size_t n = buses_.size();
  children_.assign(n, {});
  for (BusIndex i = 1; i < n; ++i) children_[*buses_[i].parent].push_back(i);
  topo_.clear();
  depth_.assign(n, 0);
  topo_.push_back(0);
  for (std::size_t k = 0; k < topo_.size(); ++k) {
    BusIndex b = topo_[k];
    for (BusIndex c : children_[b]) {
      depth_[c] = depth_[b] + 1;
      topo_.push_back(c);
    }
  }
  pv_buses_.clear();
  cap_buses_.clear();
  for (BusIndex i = 0; i < n; ++i) {
    if (buses_[i].pv) pv_buses_.push_back(i);
    if (buses_[i].capbank) cap_buses_.push_back(i);
  }
}

inline NetworkRecord RadialNetwork::to_record() const {
  NetworkRecord rec;
  rec.name = name_;
  rec.description = description_;
  rec.base = base_;
  rec.slack = buses_.at(0).label;
  rec.oltc = oltc_;
  for (const auto& b : buses_) {
    BusRecord br;
    br.label = b.label;
    if (b.parent) br.parents.push_back(buses_[*b.parent].label);
    br.load_p = b.load_p;
    br.load_q = b.load_q;
    rec.buses.push_back(br);
    if (b.pv) rec.pv.push_back(PvRecord{b.label, *b.pv});
    if (b.capbank) rec.capbanks.push_back(CapBankRecord{b.label, *b.capbank});
  }
  for (const auto& l : lines_) rec.lines.push_back(LineRecord{buses_[l.from].label, buses_[l.to].label, l.r, l.x});
  return rec;
}

// Parent and children of a bus, ascending index.
inline std::vector<BusIndex> neighbors(const RadialNetwork& net, BusIndex bus) {
  if (bus >= net.bus_count()) throw NetworkError("unknown bus index " + std::to_string(bus));
  std::vector<BusIndex> out = net.children(bus);
  if (const auto& p = net.bus(bus).parent) out.push_back(*p);
  std::sort(out.begin(), out.end());
  return out;
}

// One realization of the uncertain quantities.
struct Scenario {
  std::vector<double> load_multiplier;  // per bus, index-aligned with the network
  std::vector<double> pv_p;             // per PV unit, aligned with pv_buses()
  std::uint64_t seed = 0;
  std::size_t index = 0;
};

inline Scenario forecast_scenario(const RadialNetwork& net) {
  Scenario s;
  s.load_multiplier.assign(net.bus_count(), 1.0);
  for (BusIndex b : net.pv_buses()) s.pv_p.push_back(net.bus(b).pv->forecast_p);
  return s;
}

// Interval of realizable PV output for a relative uncertainty u.
inline std::pair<double, double> pv_interval(const PvUnit& u, double uncertainty) {
  double lo = u.forecast_p * (1.0 - uncertainty);
  double hi = std::min(u.forecast_p * (1.0 + uncertainty), u.capacity);
  return {lo, hi};
}

// Every PV at the bottom of its interval.
inline Scenario extreme_low_scenario(const RadialNetwork& net, double uncertainty) {
  Scenario s = forecast_scenario(net);
  for (std::size_t k = 0; k < net.pv_buses().size(); ++k)
    s.pv_p[k] = pv_interval(*net.bus(net.pv_buses()[k]).pv, uncertainty).first;
  return s;
}

// PV outputs drawn uniformly from [f(1-u), min(f(1+u), S)]; optional
// independent load multipliers uniform in [1-load_uncertainty, 1+load_uncertainty].
inline std::vector<Scenario> sample_scenarios(const RadialNetwork& net, std::size_t count, double uncertainty,
                                              std::uint64_t seed, double load_uncertainty = 0.0) {
  if (!(uncertainty >= 0.0 && uncertainty <= 1.0)) throw std::invalid_argument("uncertainty must lie in [0, 1]");
  if (!(load_uncertainty >= 0.0 && load_uncertainty < 1.0))
    throw std::invalid_argument("load uncertainty must lie in [0, 1)");
  if (count < 1) throw std::invalid_argument("scenario count must be at least 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Scenario> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Scenario s = forecast_scenario(net);
    s.seed = seed;
    s.index = k;
    for (std::size_t j = 0; j < net.pv_buses().size(); ++j) {
      auto [lo, hi] = pv_interval(*net.bus(net.pv_buses()[j]).pv, uncertainty);
      s.pv_p[j] = lo + (hi - lo) * unit(rng);
    }
    if (load_uncertainty > 0.0) {
      for (BusIndex b = 1; b < net.bus_count(); ++b)
        s.load_multiplier[b] = 1.0 - load_uncertainty + 2.0 * load_uncertainty * unit(rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace voltvar
