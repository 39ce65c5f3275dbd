#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "micc/market.hpp"
#include "micc/utility.hpp"

namespace micc {

/// Prices in force during one tick or one solver iteration.
///
/// A flat price charges every user the same per-unit price regardless of
/// route; otherwise each user pays the sum of the link prices on its route.
struct PriceVector {
  std::vector<double> per_link;
  std::optional<double> flat;

  static PriceVector uniform(double price) { return PriceVector{{}, price}; }
  static PriceVector links(std::vector<double> p) { return PriceVector{std::move(p), std::nullopt}; }

  [[nodiscard]] double route_price(const Topology& topo, const RouteId& route) const {
    if (flat) return *flat;
    double sum = 0.0;
    for (auto l : topo.route(route)) sum += per_link.at(l);
    return sum;
  }
};

/// Each transmitting user's best response to the price on its route; zero for
/// discharged users. A free route (price <= 0) is answered with x_max.
inline std::vector<double> demands(const Topology& topo, std::span<const User> users, const UtilityParams& params,
                                   const PriceVector& prices) {
  std::vector<double> d(users.size(), 0.0);
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (!users[i].transmitting()) continue;
    const double p = prices.route_price(topo, users[i].route);
    d[i] = p > 0.0 ? best_response(p, users[i], params) : users[i].x_max;
  }
  return d;
}

/// Max-min fair delivery of `demand` (progressive filling). Users never receive
/// more than they ask for and no link carries more than its capacity.
inline std::vector<double> maxmin_delivery(const Topology& topo, std::span<const User> users,
                                           std::span<const double> demand) {
  const std::size_t n = users.size();
  std::vector<double> x(n, 0.0);
  std::vector<double> rem(topo.link_count());
  for (std::size_t l = 0; l < rem.size(); ++l) rem[l] = topo.links()[l].capacity;

  auto saturated = [&](std::size_t l) { return rem[l] <= 1e-12 * std::max(1.0, topo.links()[l].capacity); };
  std::vector<char> live(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!users[i].transmitting() || demand[i] <= 0.0) continue;
    const auto& r = topo.route(users[i].route);
    live[i] = std::none_of(r.begin(), r.end(), saturated) ? 1 : 0;
  }

  std::vector<std::size_t> count(rem.size());
  while (std::find(live.begin(), live.end(), 1) != live.end()) {
    std::fill(count.begin(), count.end(), 0);
    double inc = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!live[i]) continue;
      inc = std::min(inc, demand[i] - x[i]);
      for (auto l : topo.route(users[i].route)) ++count[l];
    }
    for (std::size_t l = 0; l < rem.size(); ++l) {
      if (count[l] > 0) inc = std::min(inc, rem[l] / static_cast<double>(count[l]));
    }
    inc = std::max(inc, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (live[i]) x[i] += inc;
    }
    for (std::size_t l = 0; l < rem.size(); ++l) rem[l] = std::max(0.0, rem[l] - inc * static_cast<double>(count[l]));
    for (std::size_t i = 0; i < n; ++i) {
      if (!live[i]) continue;
      const auto& r = topo.route(users[i].route);
      if (demand[i] - x[i] <= 1e-12 * std::max(1.0, demand[i]) || std::any_of(r.begin(), r.end(), saturated)) {
        if (demand[i] - x[i] <= 1e-12 * std::max(1.0, demand[i])) x[i] = demand[i];
        live[i] = 0;
      }
    }
  }
  return x;
}

inline bool loads_feasible(const Topology& topo, std::span<const double> loads, double slack = 1e-9) {
  for (std::size_t l = 0; l < loads.size(); ++l) {
    if (loads[l] > topo.links()[l].capacity + slack) return false;
  }
  return true;
}

/// Allocation at a given set of prices.
struct AllocationReport {
  PriceVector prices;
  std::vector<double> rates;
  std::vector<double> link_loads;
  double total_flow{0.0};
  double revenue{0.0};
  double aggregate_utility{0.0};
  std::map<std::string, int> survivors;  // transmitting users per cluster
  bool feasible{true};
};

inline AllocationReport make_report(const Topology& topo, std::span<const User> users, const UtilityParams& params,
                                    const PriceVector& prices, std::vector<double> rates) {
  AllocationReport r;
  r.prices = prices;
  r.link_loads = link_loads(topo, users, rates);
  r.feasible = loads_feasible(topo, r.link_loads);
  for (std::size_t i = 0; i < users.size(); ++i) {
    r.survivors.try_emplace(users[i].cluster, 0);
    if (!users[i].transmitting()) continue;
    ++r.survivors[users[i].cluster];
    const double p = prices.route_price(topo, users[i].route);
    r.total_flow += rates[i];
    r.revenue += p * rates[i];
    if (p > 0.0) r.aggregate_utility += utility(rates[i], p, users[i], params);
  }
  r.rates = std::move(rates);
  return r;
}

/// Users answer `prices` with their best responses; the report carries the
/// resulting (possibly infeasible) demand.
inline AllocationReport respond(const Topology& topo, std::span<const User> users, const UtilityParams& params,
                                const PriceVector& prices) {
  return make_report(topo, users, params, prices, demands(topo, users, params, prices));
}

}  // namespace micc
