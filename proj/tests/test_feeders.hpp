#pragma once

// Small hand-built feeders shared by the unit tests.

#include <random>
#include <string>

#include "voltvar/feeder_io.hpp"
#include "voltvar/grid.hpp"

namespace voltvar::testing {

inline std::string data_path(const std::string& rel) { return std::string(VOLTVAR_DATA_DIR) + "/" + rel; }

// slack(0) -> 1 with one line.
inline RadialNetwork two_bus(double r = 0.01, double x = 0.02, double p = 0.5, double q = 0.2) {
  NetworkRecord rec;
  rec.name = "two-bus";
  rec.buses = {BusRecord{0, {}, 0.0, 0.0}, BusRecord{1, {0}, p, q}};
  rec.lines = {LineRecord{0, 1, r, x}};
  return RadialNetwork::build(rec);
}

// slack(0) -> 1 -> ... -> n-1.
inline RadialNetwork chain(int n, double r = 0.01, double x = 0.02, double p = 0.1, double q = 0.05) {
  NetworkRecord rec;
  rec.buses.push_back(BusRecord{0, {}, 0.0, 0.0});
  for (int i = 1; i < n; ++i) {
    rec.buses.push_back(BusRecord{i, {i - 1}, p, q});
    rec.lines.push_back(LineRecord{i - 1, i, r, x});
  }
  return RadialNetwork::build(rec);
}

// Random radial feeder: each bus attaches to a uniformly chosen earlier bus.
inline NetworkRecord random_tree_record(int n, std::uint64_t seed, int n_pv) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NetworkRecord rec;
  rec.name = "random";
  rec.buses.push_back(BusRecord{0, {}, 0.0, 0.0});
  for (int i = 1; i < n; ++i) {
    int parent = static_cast<int>(u(rng) * i);
    if (parent >= i) parent = i - 1;
    rec.buses.push_back(BusRecord{i, {parent}, 0.05 + 0.1 * u(rng), 0.02 + 0.05 * u(rng)});
    rec.lines.push_back(LineRecord{parent, i, 0.004 + 0.01 * u(rng), 0.006 + 0.012 * u(rng)});
  }
  for (int k = 0; k < n_pv; ++k) {
    int bus = 1 + static_cast<int>((k * 7919 + 3) % (n - 1));
    bool dup = false;
    for (const auto& p : rec.pv) dup |= p.bus == bus;
    if (dup) continue;
    PvRecord pr;
    pr.bus = bus;
    pr.unit.capacity = 0.3;
    pr.unit.forecast_p = 0.15 + 0.1 * u(rng);
    rec.pv.push_back(pr);
  }
  return rec;
}

inline RadialNetwork random_tree(int n, std::uint64_t seed, int n_pv) {
  return RadialNetwork::build(random_tree_record(n, seed, n_pv));
}

inline RadialNetwork feeder13() { return load_network(data_path("feeders/ieee13_reconstruction.json")); }
inline RadialNetwork feeder33() { return load_network(data_path("feeders/ieee33.json")); }
inline RadialNetwork feeder123() { return load_network(data_path("feeders/ieee123_reconstruction.json")); }

}  // namespace voltvar::testing
