#pragma once

// Feeder file reader/writer.
//
// Feeder files are UTF-8 JSON documents with four order-independent
// sections. All electrical values are per-unit on the declared base; the
// model is a single-phase positive-sequence equivalent.
//
//   {
//     "name": "...", "description": "...",
//     "base":    {"kv": 4.16, "kva": 100, "slack": 150},
//     "buses":   [{"id": 1, "parent": 150, "load_p": 0.4, "load_q": 0.2}, ...],
//     "lines":   [{"from": 150, "to": 1, "r_pu": 0.001, "x_pu": 0.002}, ...],
//     "devices": {
//       "oltc":     {"tap_step": 0.00625, "n_min": -16, "n_max": 16, "ramp": 1, "tap": 0},
//       "capbanks": [{"bus": 83, "step_q": 0.5, "max_steps": 4, "ramp": 1, "steps": 0}],
//       "pv":       [{"bus": 7, "s": 1.2, "forecast_p": 0.8, "q_base": 0.0}]
//     }
//   }
//
// "parent" may be omitted (it is then taken from the line feeding the bus),
// null (slack), an integer, or a list; a list with more than one entry is
// rejected as non-radial.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "voltvar/grid.hpp"

namespace voltvar {

using json = nlohmann::json;

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

inline const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw NetworkError(std::string("feeder file: missing field '") + key + "'");
  return *it;
}

}  // namespace detail

inline NetworkRecord parse_network_record(const json& doc) {
  NetworkRecord rec;
  try {
    rec.name = detail::get_or<std::string>(doc, "name", "");
    rec.description = detail::get_or<std::string>(doc, "description", "");
    if (auto it = doc.find("base"); it != doc.end()) {
      rec.base.kv = detail::get_or<double>(*it, "kv", rec.base.kv);
      rec.base.kva = detail::get_or<double>(*it, "kva", rec.base.kva);
      if (auto s = it->find("slack"); s != it->end() && !s->is_null()) rec.slack = s->get<int>();
    }
    for (const auto& jb : detail::require(doc, "buses")) {
      BusRecord b;
      b.label = detail::require(jb, "id").get<int>();
      b.load_p = detail::get_or<double>(jb, "load_p", 0.0);
      b.load_q = detail::get_or<double>(jb, "load_q", 0.0);
      if (auto p = jb.find("parent"); p != jb.end()) {
        if (p->is_array()) {
          for (const auto& e : *p) b.parents.push_back(e.get<int>());
          if (b.parents.empty()) b.parents.clear();
        } else if (!p->is_null()) {
          b.parents.push_back(p->get<int>());
        }
      }
      rec.buses.push_back(std::move(b));
    }
    for (const auto& jl : detail::require(doc, "lines")) {
      rec.lines.push_back(LineRecord{detail::require(jl, "from").get<int>(), detail::require(jl, "to").get<int>(),
                                     detail::require(jl, "r_pu").get<double>(),
                                     detail::require(jl, "x_pu").get<double>()});
    }
    if (auto dev = doc.find("devices"); dev != doc.end()) {
      if (auto o = dev->find("oltc"); o != dev->end() && !o->is_null()) {
        rec.oltc.tap_step = detail::get_or<double>(*o, "tap_step", rec.oltc.tap_step);
        rec.oltc.n_min = detail::get_or<int>(*o, "n_min", rec.oltc.n_min);
        rec.oltc.n_max = detail::get_or<int>(*o, "n_max", rec.oltc.n_max);
        rec.oltc.ramp_limit = detail::get_or<int>(*o, "ramp", rec.oltc.ramp_limit);
        rec.oltc.tap = detail::get_or<int>(*o, "tap", rec.oltc.tap);
      }
      if (auto c = dev->find("capbanks"); c != dev->end()) {
        for (const auto& jc : *c) {
          CapBankRecord cr;
          cr.bus = detail::require(jc, "bus").get<int>();
          cr.bank.step_q = detail::require(jc, "step_q").get<double>();
          cr.bank.max_steps = detail::require(jc, "max_steps").get<int>();
          cr.bank.ramp_limit = detail::get_or<int>(jc, "ramp", 1);
          cr.bank.steps = detail::get_or<int>(jc, "steps", 0);
          rec.capbanks.push_back(cr);
        }
      }
      if (auto p = dev->find("pv"); p != dev->end()) {
        for (const auto& jp : *p) {
          PvRecord pr;
          pr.bus = detail::require(jp, "bus").get<int>();
          pr.unit.capacity = detail::require(jp, "s").get<double>();
          pr.unit.forecast_p = detail::require(jp, "forecast_p").get<double>();
          pr.unit.q_base = detail::get_or<double>(jp, "q_base", 0.0);
          rec.pv.push_back(pr);
        }
      }
    }
  } catch (const json::exception& e) {
    throw NetworkError(std::string("feeder file: ") + e.what());
  }
  return rec;
}

inline RadialNetwork parse_network(const json& doc) { return RadialNetwork::build(parse_network_record(doc)); }

inline RadialNetwork parse_network(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw NetworkError(std::string("feeder file: parse error: ") + e.what());
  }
  return parse_network(doc);
}

inline RadialNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open feeder file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_network(ss.str());
}

inline json network_to_json(const RadialNetwork& net) {
  const NetworkRecord rec = net.to_record();
  json doc;
  doc["name"] = rec.name;
  doc["description"] = rec.description;
  doc["base"] = {{"kv", rec.base.kv}, {"kva", rec.base.kva}, {"slack", *rec.slack}};
  json buses = json::array();
  for (const auto& b : rec.buses) {
    json jb = {{"id", b.label}, {"load_p", b.load_p}, {"load_q", b.load_q}};
    jb["parent"] = b.parents.empty() ? json(nullptr) : json(b.parents.front());
    buses.push_back(std::move(jb));
  }
  doc["buses"] = std::move(buses);
  json lines = json::array();
  for (const auto& l : rec.lines) lines.push_back({{"from", l.from}, {"to", l.to}, {"r_pu", l.r}, {"x_pu", l.x}});
  doc["lines"] = std::move(lines);
  json dev;
  dev["oltc"] = {{"tap_step", rec.oltc.tap_step},
                 {"n_min", rec.oltc.n_min},
                 {"n_max", rec.oltc.n_max},
                 {"ramp", rec.oltc.ramp_limit},
                 {"tap", rec.oltc.tap}};
  dev["capbanks"] = json::array();
  for (const auto& c : rec.capbanks)
    dev["capbanks"].push_back({{"bus", c.bus},
                               {"step_q", c.bank.step_q},
                               {"max_steps", c.bank.max_steps},
                               {"ramp", c.bank.ramp_limit},
                               {"steps", c.bank.steps}});
  dev["pv"] = json::array();
  for (const auto& p : rec.pv)
    dev["pv"].push_back(
        {{"bus", p.bus}, {"s", p.unit.capacity}, {"forecast_p", p.unit.forecast_p}, {"q_base", p.unit.q_base}});
  doc["devices"] = std::move(dev);
  return doc;
}

inline void save_network(const RadialNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NetworkError("cannot write feeder file " + path);
  out << network_to_json(net).dump(2) << '\n';
}

}  // namespace voltvar
