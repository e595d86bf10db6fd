#include <gtest/gtest.h>

#include <set>

#include "test_feeders.hpp"
#include "voltvar/feeder_io.hpp"
#include "voltvar/grid.hpp"

namespace voltvar {
namespace {

using testing::chain;

TEST(GridModel, FourBusChainFromFile) {
  const std::string text = R"({
    "base": {"kv": 4.16, "kva": 100, "slack": 0},
    "buses": [{"id": 0, "parent": null}, {"id": 1, "parent": 0, "load_p": 0.1},
              {"id": 2, "parent": 1, "load_p": 0.2}, {"id": 3, "parent": 2, "load_p": 0.3}],
    "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}, {"from": 1, "to": 2, "r_pu": 0.01, "x_pu": 0.02},
              {"from": 2, "to": 3, "r_pu": 0.01, "x_pu": 0.02}]
  })";
  RadialNetwork net = parse_network(text);
  EXPECT_EQ(net.lines().size(), 3u);
  EXPECT_EQ(net.max_depth(), 3u);
  EXPECT_EQ(net.label(net.slack()), 0);
}

TEST(GridModel, TwoParentsIsNotRadial) {
  const std::string text = R"({
    "buses": [{"id": 0, "parent": null}, {"id": 1, "parent": 0}, {"id": 2, "parent": [0, 1]}],
    "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}, {"from": 1, "to": 2, "r_pu": 0.01, "x_pu": 0.02}]
  })";
  try {
    parse_network(text);
    FAIL() << "expected a radiality error";
  } catch (const NetworkError& e) {
    EXPECT_NE(std::string(e.what()).find("not radial"), std::string::npos) << e.what();
  }
}

TEST(GridModel, TwoFeedingLinesIsNotRadial) {
  const std::string text = R"({
    "buses": [{"id": 0}, {"id": 1}, {"id": 2}],
    "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}, {"from": 0, "to": 2, "r_pu": 0.01, "x_pu": 0.02},
              {"from": 1, "to": 2, "r_pu": 0.01, "x_pu": 0.02}]
  })";
  EXPECT_THROW(parse_network(text), NetworkError);
}

TEST(GridModel, RejectsCycleMultipleSlackAndDanglingParent) {
  const std::string cycle = R"({
    "buses": [{"id": 0, "parent": null}, {"id": 1, "parent": 2}, {"id": 2, "parent": 1}, {"id": 3, "parent": 0}],
    "lines": [{"from": 2, "to": 1, "r_pu": 0.01, "x_pu": 0.02}, {"from": 1, "to": 2, "r_pu": 0.01, "x_pu": 0.02},
              {"from": 0, "to": 3, "r_pu": 0.01, "x_pu": 0.02}]
  })";
  EXPECT_THROW(parse_network(cycle), NetworkError);

  const std::string two_slack = R"({
    "buses": [{"id": 0, "parent": null}, {"id": 1, "parent": null}],
    "lines": []
  })";
  try {
    parse_network(two_slack);
    FAIL();
  } catch (const NetworkError& e) {
    EXPECT_NE(std::string(e.what()).find("multiple slack"), std::string::npos) << e.what();
  }

  const std::string dangling = R"({
    "buses": [{"id": 0, "parent": null}, {"id": 1, "parent": 7}],
    "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
  })";
  try {
    parse_network(dangling);
    FAIL();
  } catch (const NetworkError& e) {
    EXPECT_NE(std::string(e.what()).find("dangling"), std::string::npos) << e.what();
  }

  EXPECT_THROW(parse_network(std::string("{ not json")), NetworkError);
}

TEST(GridModel, RejectsNonPositiveImpedanceAndBadDevices) {
  NetworkRecord rec;
  rec.buses = {BusRecord{0, {}, 0, 0}, BusRecord{1, {0}, 0.1, 0.0}};
  rec.lines = {LineRecord{0, 1, 0.0, 0.02}};
  EXPECT_THROW(RadialNetwork::build(rec), NetworkError);
  rec.lines = {LineRecord{0, 1, 0.01, 0.02}};
  rec.pv = {PvRecord{1, PvUnit{0.5, 0.6, 0.0}}};  // forecast above capacity
  EXPECT_THROW(RadialNetwork::build(rec), NetworkError);
  rec.pv = {PvRecord{1, PvUnit{1.0, 0.6, 0.9}}};  // q_base above sqrt(S^2 - p^2) = 0.8
  EXPECT_THROW(RadialNetwork::build(rec), NetworkError);
  rec.pv.clear();
  rec.capbanks = {CapBankRecord{1, CapBank{0.1, 2, 1, 3}}};
  EXPECT_THROW(RadialNetwork::build(rec), NetworkError);
  rec.capbanks.clear();
  rec.oltc.tap = 20;
  EXPECT_THROW(RadialNetwork::build(rec), NetworkError);
}

TEST(GridModel, Ieee123ReconstructionShape) {
  RadialNetwork net = testing::feeder123();
  EXPECT_EQ(net.bus_count(), 123u);
  EXPECT_EQ(net.lines().size(), 122u);
  std::set<int> pv_labels;
  for (BusIndex b : net.pv_buses()) pv_labels.insert(net.label(b));
  EXPECT_EQ(pv_labels, (std::set<int>{7, 23, 29, 42, 50, 58, 65, 76, 85, 96, 104, 107}));
  EXPECT_EQ(net.label(net.slack()), 150);
}

TEST(GridModel, ShippedFeedersAreTrees) {
  for (const RadialNetwork& net : {testing::feeder13(), testing::feeder33(), testing::feeder123()}) {
    EXPECT_EQ(net.lines().size(), net.bus_count() - 1);
    EXPECT_EQ(net.topological_order().size(), net.bus_count());  // every bus reachable from slack
  }
}

TEST(Neighbors, ChainLeafAndStar) {
  RadialNetwork c = chain(3);
  EXPECT_EQ(neighbors(c, 1), (std::vector<BusIndex>{0, 2}));
  EXPECT_EQ(neighbors(c, 2), (std::vector<BusIndex>{1}));

  NetworkRecord rec;
  rec.buses = {BusRecord{0, {}, 0, 0}, BusRecord{1, {0}, 0, 0}, BusRecord{2, {1}, 0, 0}, BusRecord{3, {1}, 0, 0},
               BusRecord{4, {1}, 0, 0}};
  for (int i = 1; i <= 4; ++i) rec.lines.push_back(LineRecord{i == 1 ? 0 : 1, i, 0.01, 0.01});
  RadialNetwork star = RadialNetwork::build(rec);
  EXPECT_EQ(neighbors(star, star.index_of(1)).size(), 4u);
  EXPECT_THROW(neighbors(star, 99), NetworkError);
}

TEST(Scenarios, ZeroUncertaintyReturnsForecast) {
  RadialNetwork net = testing::feeder33();
  auto sc = sample_scenarios(net, 5, 0.0, 7);
  for (const auto& s : sc)
    for (std::size_t k = 0; k < net.pv_buses().size(); ++k)
      EXPECT_DOUBLE_EQ(s.pv_p[k], net.bus(net.pv_buses()[k]).pv->forecast_p);
}

TEST(Scenarios, FifteenHundredWithinClippedInterval) {
  RadialNetwork net = testing::feeder123();
  auto sc = sample_scenarios(net, 1500, 0.5, 11);
  ASSERT_EQ(sc.size(), 1500u);
  for (const auto& s : sc) {
    for (std::size_t k = 0; k < net.pv_buses().size(); ++k) {
      const PvUnit& u = *net.bus(net.pv_buses()[k]).pv;
      EXPECT_GE(s.pv_p[k], 0.5 * u.forecast_p);
      EXPECT_LE(s.pv_p[k], std::min(1.5 * u.forecast_p, u.capacity));
    }
  }
}

TEST(Scenarios, DeterministicGivenSeed) {
  RadialNetwork net = testing::feeder33();
  auto a = sample_scenarios(net, 20, 0.5, 42, 0.1);
  auto b = sample_scenarios(net, 20, 0.5, 42, 0.1);
  auto c = sample_scenarios(net, 20, 0.5, 43, 0.1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pv_p, b[i].pv_p);
    EXPECT_EQ(a[i].load_multiplier, b[i].load_multiplier);
  }
  EXPECT_NE(a[0].pv_p, c[0].pv_p);
  EXPECT_THROW(sample_scenarios(net, 0, 0.5, 1), std::invalid_argument);
  EXPECT_THROW(sample_scenarios(net, 1, 1.5, 1), std::invalid_argument);
}

// save(load(f)) must describe the same network, for random trees too.
TEST(FeederIo, RoundTripPreservesNetwork) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RadialNetwork a = testing::random_tree(8 + static_cast<int>(seed) * 3, seed, 3);
    RadialNetwork b = parse_network(network_to_json(a));
    ASSERT_EQ(a.bus_count(), b.bus_count());
    EXPECT_EQ(network_to_json(a), network_to_json(b));
    for (BusIndex i = 0; i < a.bus_count(); ++i) {
      EXPECT_EQ(a.bus(i).label, b.bus(i).label);
      EXPECT_EQ(a.bus(i).parent, b.bus(i).parent);
      EXPECT_EQ(a.bus(i).load_p, b.bus(i).load_p);
      EXPECT_EQ(a.bus(i).pv.has_value(), b.bus(i).pv.has_value());
    }
  }
}

}  // namespace
}  // namespace voltvar
