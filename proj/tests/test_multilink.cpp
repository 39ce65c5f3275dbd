#include <gtest/gtest.h>

#include <random>

#include "micc/multilink.hpp"
#include "micc/scenario.hpp"

using namespace micc;

namespace {

Topology chain() {
  Topology t;
  t.add_link("AB", 40);
  t.add_link("BC", 40);
  t.add_route("AB", {"AB"});
  t.add_route("ABC", {"AB", "BC"});
  t.add_route("BC", {"BC"});
  return t;
}

User on(const char* route, UserId id) {
  User u;
  u.id = id;
  u.route = route;
  return u;
}

}  // namespace

TEST(RouteWeights, Examples) {
  const auto t = chain();
  std::vector<User> users{on("AB", 1)};
  std::vector<double> rates{3.0};
  const auto w1 = route_weights(t, users, rates, "AB");
  EXPECT_EQ(w1.w, (std::vector<double>{1.0}));

  // 30 units on AB, 10 on BC.
  users = {on("AB", 1), on("ABC", 2)};
  rates = {20.0, 10.0};
  const auto w = route_weights(t, users, rates, "ABC");
  EXPECT_NEAR(w.w[0], 0.75, 1e-12);
  EXPECT_NEAR(w.w[1], 0.25, 1e-12);

  const auto z = route_weights(t, std::vector<User>{}, std::vector<double>{}, "ABC");
  EXPECT_EQ(z.w, (std::vector<double>{0.5, 0.5}));
}

TEST(DistributeBid, Examples) {
  RouteWeights single{{0}, {1.0}};
  EXPECT_EQ(distribute_bid(BidPrice{10}, single).share, (std::vector<double>{10}));
  RouteWeights two{{0, 1}, {0.75, 0.25}};
  const auto d = distribute_bid(BidPrice{8}, two);
  EXPECT_NEAR(d.share[0], 6.0, 1e-12);
  EXPECT_NEAR(d.share[1], 2.0, 1e-12);
  EXPECT_EQ(distribute_bid(BidPrice{0}, two).share, (std::vector<double>{0, 0}));
  const auto lit = distribute_bid(BidPrice{8}, two, Fidelity::Literal);
  EXPECT_NEAR(lit.total(), 4.0, 1e-12);
}

TEST(DistributeBid, ConservationAndOrdering) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> load(0.0, 50.0);
  std::uniform_real_distribution<double> bid(0.0, 30.0);
  std::uniform_int_distribution<int> hops(1, 8);
  for (int i = 0; i < 2000; ++i) {
    const int n = hops(rng);
    std::vector<std::size_t> route(n);
    std::vector<double> loads(n);
    for (int k = 0; k < n; ++k) {
      route[k] = k;
      loads[k] = load(rng);
    }
    const auto w = weights_from_loads(route, loads);
    double ws = 0.0;
    for (double v : w.w) {
      EXPECT_GE(v, 0.0);
      ws += v;
    }
    EXPECT_NEAR(ws, 1.0, 1e-9);
    const double b = bid(rng);
    const auto d = distribute_bid(BidPrice{b}, w);
    EXPECT_NEAR(d.total(), b, 1e-9);
    for (int a = 0; a < n; ++a) {
      for (int c = 0; c < n; ++c) {
        if (loads[a] > loads[c] && b > 0) {
          EXPECT_GT(d.share[a], d.share[c]);
        }
      }
    }

    // Scaling every load leaves the weights alone.
    std::vector<double> scaled = loads;
    const double k = 0.1 + load(rng);
    for (auto& v : scaled) v *= k;
    const auto w2 = weights_from_loads(route, scaled);
    for (int a = 0; a < n; ++a) EXPECT_NEAR(w2.w[a], w.w[a], 1e-12);
  }
}

TEST(ProbeRoute, Examples) {
  const auto t = chain();
  EXPECT_EQ(probe_route(t, std::vector<User>{}, std::vector<double>{}, "ABC"), (std::vector<double>{0, 0}));
  std::vector<User> one{on("ABC", 1)};
  std::vector<double> r{2.5};
  EXPECT_EQ(probe_route(t, one, r, "ABC"), (std::vector<double>{2.5, 2.5}));
  EXPECT_THROW(probe_route(t, one, r, "nope"), std::domain_error);
}

TEST(ProbeRoute, FiveClusterPopulation) {
  const auto sc = build_five_cluster_scenario();
  const auto users = sc.users();
  std::vector<double> rates(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) rates[i] = 1.0 + static_cast<double>(users[i].id % 5);
  const auto probe = probe_route(sc.topology, users, rates, "ABCD");
  // Hand sums: AB carries everyone, BC and CD carry clusters 3-5.
  double ab = 0;
  double bc = 0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    ab += rates[i];
    if (users[i].cluster == "c3" || users[i].cluster == "c4" || users[i].cluster == "c5") bc += rates[i];
  }
  ASSERT_EQ(probe.size(), 3u);
  EXPECT_NEAR(probe[0], ab, 1e-12);
  EXPECT_NEAR(probe[1], bc, 1e-12);
  EXPECT_NEAR(probe[2], bc, 1e-12);
}

TEST(PerLinkBidSets, SharesLandOnTraversedLinks) {
  const auto sc = build_five_cluster_scenario();
  const auto users = sc.users();
  std::vector<double> rates(users.size(), 2.5);
  const auto sets = per_link_bid_sets(sc.topology, users, rates);
  EXPECT_EQ(sets[0].size(), 25u);  // AB
  EXPECT_EQ(sets[1].size(), 15u);  // BC
  EXPECT_EQ(sets[3].size(), 10u);  // DE
  double total = 0;
  for (const auto& s : sets) {
    for (double v : s) total += v;
  }
  EXPECT_NEAR(total, 5 * (2 + 4 + 6 + 8 + 10), 1e-9);
}
