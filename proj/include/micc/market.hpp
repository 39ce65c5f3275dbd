#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace micc {

using LinkId = std::string;
using RouteId = std::string;
using UserId = std::uint64_t;

enum class UserState { Active, Waiting, Discharged };

inline const char* to_string(UserState s) {
  switch (s) {
    case UserState::Active: return "active";
    case UserState::Waiting: return "waiting";
    case UserState::Discharged: return "discharged";
  }
  return "?";
}

/// Maximum per-unit price a user is willing to pay.
struct BidPrice {
  double value{0.0};
  friend bool operator==(const BidPrice&, const BidPrice&) = default;
};

/// Bid price of a user with budget `m` who needs at least `x_star` units.
inline BidPrice bid_price(double m, double x_star) {
  if (!(m > 0.0) || !(x_star > 0.0)) {
    throw std::domain_error("bid_price: budget and minimum bandwidth must be positive");
  }
  return BidPrice{m / x_star};
}

/// One traffic source.
///
/// `tolerance` is the tolerance budget: elapsed waiting time is measured in
/// units of it before being fed to the dissatisfaction function, so a user
/// with tolerance 5 accumulates dissatisfaction five times slower than one
/// with tolerance 1. `beta` and `sigma_w` are the exponent and weight of the
/// dissatisfaction function itself.
struct User {
  UserId id{0};
  std::string cluster;
  RouteId route;
  double budget{1.0};
  double x_star{1.0};
  double x_max{2.0};
  double tolerance{1.0};
  double beta{1.0};
  double sigma_w{0.0};
  double discharge_threshold{0.0};
  UserState state{UserState::Active};

  [[nodiscard]] BidPrice bid() const { return bid_price(budget, x_star); }
  [[nodiscard]] bool transmitting() const { return state != UserState::Discharged; }

  void validate() const {
    if (!(budget > 0.0) || !(x_star > 0.0)) {
      throw std::domain_error("user " + std::to_string(id) + ": budget and x_star must be positive");
    }
    if (!(x_star <= x_max)) {
      throw std::domain_error("user " + std::to_string(id) + ": x_star exceeds x_max");
    }
    if (!(beta >= 0.0) || !(tolerance > 0.0)) {
      throw std::domain_error("user " + std::to_string(id) + ": beta must be >= 0 and tolerance > 0");
    }
    if (!(sigma_w >= 0.0 && sigma_w <= 1.0)) {
      throw std::domain_error("user " + std::to_string(id) + ": sigma_w must lie in [0,1]");
    }
  }
};

struct Link {
  LinkId id;
  double capacity{0.0};
};

/// Directed links with capacities and routes as ordered link lists.
///
/// Capacity zero is accepted so that degenerate "nothing fits" networks can be
/// expressed; negative capacities are rejected.
class Topology {
 public:
  void add_link(LinkId id, double capacity) {
    if (!(capacity >= 0.0) || !std::isfinite(capacity)) {
      throw std::domain_error("link " + id + ": capacity must be finite and >= 0");
    }
    if (index_.contains(id)) throw std::domain_error("duplicate link " + id);
    index_.emplace(id, links_.size());
    links_.push_back(Link{std::move(id), capacity});
  }

  void add_route(RouteId id, const std::vector<LinkId>& links) {
    if (links.empty()) throw std::domain_error("route " + id + " is empty");
    if (routes_.contains(id)) throw std::domain_error("duplicate route " + id);
    std::vector<std::size_t> idx;
    idx.reserve(links.size());
    for (const auto& l : links) idx.push_back(link_index(l));
    routes_.emplace(std::move(id), std::move(idx));
  }

  [[nodiscard]] const std::vector<Link>& links() const { return links_; }
  [[nodiscard]] std::size_t link_count() const { return links_.size(); }
  [[nodiscard]] bool has_link(const LinkId& id) const { return index_.contains(id); }
  [[nodiscard]] bool has_route(const RouteId& id) const { return routes_.contains(id); }

  [[nodiscard]] std::size_t link_index(const LinkId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::domain_error("unknown link " + id);
    return it->second;
  }

  [[nodiscard]] const std::vector<std::size_t>& route(const RouteId& id) const {
    auto it = routes_.find(id);
    if (it == routes_.end()) throw std::domain_error("unknown route " + id);
    return it->second;
  }

  [[nodiscard]] bool route_uses(const RouteId& route_id, std::size_t link) const {
    const auto& r = route(route_id);
    return std::find(r.begin(), r.end(), link) != r.end();
  }

  [[nodiscard]] const std::map<RouteId, std::vector<std::size_t>>& routes() const { return routes_; }

 private:
  std::vector<Link> links_;
  std::unordered_map<LinkId, std::size_t> index_;
  std::map<RouteId, std::vector<std::size_t>> routes_;
};

/// Sum of the rates of transmitting users whose route traverses `link`.
/// `rates` is parallel to `users`.
inline double link_load(const Topology& topo, std::span<const User> users,
                        std::span<const double> rates, const LinkId& link) {
  if (rates.size() != users.size()) throw std::invalid_argument("link_load: rates/users size mismatch");
  const std::size_t l = topo.link_index(link);
  double load = 0.0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (users[i].transmitting() && topo.route_uses(users[i].route, l)) load += rates[i];
  }
  return load;
}

/// Loads on every link, indexed like `topo.links()`.
inline std::vector<double> link_loads(const Topology& topo, std::span<const User> users,
                                      std::span<const double> rates) {
  if (rates.size() != users.size()) throw std::invalid_argument("link_loads: rates/users size mismatch");
  std::vector<double> load(topo.link_count(), 0.0);
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (!users[i].transmitting()) continue;
    for (auto l : topo.route(users[i].route)) load[l] += rates[i];
  }
  return load;
}

/// Users sharing route, bid price and tolerance parameters.
struct Cluster {
  std::string label;
  RouteId route;
  BidPrice bid;
  double tolerance{1.0};
  std::vector<UserId> members;
};

inline std::vector<Cluster> clusters_of(std::span<const User> users) {
  std::vector<Cluster> out;
  for (const auto& u : users) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Cluster& c) { return c.label == u.cluster; });
    if (it == out.end()) {
      out.push_back(Cluster{u.cluster, u.route, u.bid(), u.tolerance, {u.id}});
      continue;
    }
    if (it->route != u.route || std::abs(it->bid.value - u.bid().value) > 1e-12 || it->tolerance != u.tolerance) {
      throw std::domain_error("cluster " + u.cluster + " members disagree on route, bid or tolerance");
    }
    it->members.push_back(u.id);
  }
  return out;
}

}  // namespace micc
