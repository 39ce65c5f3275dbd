#include <gtest/gtest.h>

#include <random>

#include "micc/market.hpp"
#include "micc/scenario.hpp"

using namespace micc;

TEST(BidPrice, Examples) {
  EXPECT_DOUBLE_EQ(bid_price(5, 2.5).value, 2.0);
  EXPECT_DOUBLE_EQ(bid_price(25, 2.5).value, 10.0);
  EXPECT_DOUBLE_EQ(bid_price(7, 7).value, 1.0);
}

TEST(BidPrice, RejectsNonPositive) {
  EXPECT_THROW(bid_price(0, 1), std::domain_error);
  EXPECT_THROW(bid_price(1, 0), std::domain_error);
  EXPECT_THROW(bid_price(-1, 2), std::domain_error);
}

TEST(BidPrice, TimesMinimumRecoversBudget) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double m = d(rng);
    const double xs = d(rng);
    EXPECT_NEAR(bid_price(m, xs).value * xs, m, 1e-12 * std::max(1.0, m));
  }
}

TEST(User, Validation) {
  User u;
  u.budget = 5;
  u.x_star = 2.5;
  u.x_max = 5;
  EXPECT_NO_THROW(u.validate());
  u.x_max = 2;
  EXPECT_THROW(u.validate(), std::domain_error);
  u.x_max = 5;
  u.sigma_w = 1.5;
  EXPECT_THROW(u.validate(), std::domain_error);
  u.sigma_w = 0.5;
  u.beta = -1;
  EXPECT_THROW(u.validate(), std::domain_error);
}

TEST(Topology, RejectsBadInput) {
  Topology t;
  t.add_link("A", 10);
  EXPECT_THROW(t.add_link("A", 10), std::domain_error);
  EXPECT_THROW(t.add_link("B", -1), std::domain_error);
  EXPECT_THROW(t.add_route("r", {}), std::domain_error);
  EXPECT_THROW(t.add_route("r", {"missing"}), std::domain_error);
  t.add_route("r", {"A"});
  EXPECT_THROW(t.add_route("r", {"A"}), std::domain_error);
  EXPECT_THROW((void)t.route("nope"), std::domain_error);
}

namespace {

std::vector<User> ab_users(const std::vector<double>& rates_out) {
  std::vector<User> us;
  for (std::size_t i = 0; i < rates_out.size(); ++i) {
    User u;
    u.id = i + 1;
    u.route = "AB";
    us.push_back(u);
  }
  return us;
}

Topology ab_topology() {
  Topology t;
  t.add_link("AB", 40);
  t.add_link("BC", 40);
  t.add_route("AB", {"AB"});
  t.add_route("ABC", {"AB", "BC"});
  return t;
}

}  // namespace

TEST(LinkLoad, Examples) {
  const auto t = ab_topology();
  EXPECT_DOUBLE_EQ(link_load(t, std::vector<User>{}, std::vector<double>{}, "AB"), 0.0);

  std::vector<double> rates;
  for (int i = 0; i < 5; ++i) rates.push_back(2.89);
  for (int i = 0; i < 5; ++i) rates.push_back(2.42);
  const auto users = ab_users(rates);
  EXPECT_NEAR(link_load(t, users, rates, "AB"), 26.55, 1e-12);

  std::vector<double> flat(25, 1.6);
  EXPECT_NEAR(link_load(t, ab_users(flat), flat, "AB"), 40.0, 1e-12);
  EXPECT_DOUBLE_EQ(link_load(t, users, rates, "BC"), 0.0);
  EXPECT_THROW(link_load(t, users, rates, "ZZ"), std::domain_error);
}

TEST(LinkLoad, AdditiveAndDischargeNeutral) {
  const auto t = ab_topology();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(0, 5);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<User> a;
    std::vector<User> b;
    std::vector<double> ra;
    std::vector<double> rb;
    for (int i = 0; i < 10; ++i) {
      User u;
      u.id = i;
      u.route = coin(rng) ? "AB" : "ABC";
      (coin(rng) ? a : b).push_back(u);
    }
    for (std::size_t i = 0; i < a.size(); ++i) ra.push_back(r(rng));
    for (std::size_t i = 0; i < b.size(); ++i) rb.push_back(r(rng));
    std::vector<User> all = a;
    all.insert(all.end(), b.begin(), b.end());
    std::vector<double> rall = ra;
    rall.insert(rall.end(), rb.begin(), rb.end());
    for (const char* l : {"AB", "BC"}) {
      EXPECT_NEAR(link_load(t, all, rall, l), link_load(t, a, ra, l) + link_load(t, b, rb, l), 1e-12);
    }

    // A discharged user adds nothing, whatever its nominal rate.
    auto with_ghost = all;
    auto r_ghost = rall;
    User g;
    g.id = 99;
    g.route = "ABC";
    g.state = UserState::Discharged;
    with_ghost.push_back(g);
    r_ghost.push_back(123.0);
    EXPECT_EQ(link_loads(t, with_ghost, r_ghost), link_loads(t, all, rall));
  }
}

TEST(Clusters, GroupsAndValidates) {
  const auto sc = build_five_cluster_scenario();
  const auto users = sc.users();
  const auto cl = clusters_of(users);
  ASSERT_EQ(cl.size(), 5u);
  for (const auto& c : cl) EXPECT_EQ(c.members.size(), 5u);
  auto bad = users;
  bad[1].route = "ABCD";
  EXPECT_THROW(clusters_of(bad), std::domain_error);
}

TEST(FiveClusterScenario, Shape) {
  const auto sc = build_five_cluster_scenario();
  const auto users = sc.users();
  EXPECT_EQ(users.size(), 25u);
  for (const auto& l : sc.topology.links()) EXPECT_DOUBLE_EQ(l.capacity, 40.0);
  std::vector<double> bids;
  for (const auto& c : clusters_of(users)) bids.push_back(c.bid.value);
  EXPECT_EQ(bids, (std::vector<double>{2, 4, 6, 8, 10}));
  for (const auto& u : users) EXPECT_DOUBLE_EQ(u.x_star, 2.5);
  EXPECT_EQ(sc.cluster("c1").route, "AB");
  EXPECT_EQ(sc.cluster("c2").route, "AB");
  EXPECT_EQ(sc.cluster("c3").route, "ABCDE");
  EXPECT_EQ(sc.cluster("c4").route, "ABCD");
  EXPECT_EQ(sc.cluster("c5").route, "ABCDE");
  EXPECT_DOUBLE_EQ(sc.cluster("c1").tolerance, 5.0);
  EXPECT_DOUBLE_EQ(sc.cluster("c5").tolerance, 0.9);
  EXPECT_DOUBLE_EQ(sc.pricing.lambda_min, 0.0);
}
