#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "micc/market.hpp"

namespace micc {

enum class Fidelity {
  Normalized,  // share = w * bid; shares add up to the bid
  Literal,     // share = w * bid / |route|
};

/// Per-link weights along one route, in route order.
struct RouteWeights {
  std::vector<std::size_t> links;
  std::vector<double> w;
};

/// Per-link bid shares along one route, in route order.
struct BidDistribution {
  std::vector<std::size_t> links;
  std::vector<double> share;

  [[nodiscard]] double total() const {
    double s = 0.0;
    for (double v : share) s += v;
    return s;
  }
};

/// Loads a probe packet would collect hop by hop along `route`.
inline std::vector<double> probe_route(const Topology& topo, std::span<const User> users,
                                       std::span<const double> rates, const RouteId& route) {
  const auto& r = topo.route(route);
  const auto all = link_loads(topo, users, rates);
  std::vector<double> out;
  out.reserve(r.size());
  for (auto l : r) out.push_back(all[l]);
  return out;
}

/// Weights proportional to the hop loads; uniform when the route carries no traffic.
inline RouteWeights weights_from_loads(const std::vector<std::size_t>& route, std::span<const double> hop_loads) {
  if (route.empty()) throw std::domain_error("route_weights: empty route");
  if (hop_loads.size() != route.size()) throw std::invalid_argument("route_weights: load count mismatch");
  RouteWeights rw{route, std::vector<double>(route.size(), 0.0)};
  double total = 0.0;
  for (double v : hop_loads) {
    if (v < 0.0) throw std::domain_error("route_weights: negative load");
    total += v;
  }
  for (std::size_t i = 0; i < route.size(); ++i) {
    rw.w[i] = total > 0.0 ? hop_loads[i] / total : 1.0 / static_cast<double>(route.size());
  }
  return rw;
}

inline RouteWeights route_weights(const Topology& topo, std::span<const User> users, std::span<const double> rates,
                                  const RouteId& route) {
  const auto loads = probe_route(topo, users, rates, route);
  return weights_from_loads(topo.route(route), loads);
}

inline BidDistribution distribute_bid(BidPrice bid, const RouteWeights& weights,
                                      Fidelity fidelity = Fidelity::Normalized) {
  if (bid.value < 0.0) throw std::domain_error("distribute_bid: negative bid");
  BidDistribution d{weights.links, std::vector<double>(weights.w.size(), 0.0)};
  const double div = fidelity == Fidelity::Literal ? static_cast<double>(weights.w.size()) : 1.0;
  for (std::size_t i = 0; i < weights.w.size(); ++i) d.share[i] = weights.w[i] * bid.value / div;
  return d;
}

/// Per-link candidate sets: every transmitting user contributes its share of
/// the bid to each link it traverses.
inline std::vector<std::vector<double>> per_link_bid_sets(const Topology& topo, std::span<const User> users,
                                                          std::span<const double> rates,
                                                          Fidelity fidelity = Fidelity::Normalized) {
  std::vector<std::vector<double>> sets(topo.link_count());
  std::map<RouteId, RouteWeights> cache;
  for (const auto& u : users) {
    if (!u.transmitting()) continue;
    auto it = cache.find(u.route);
    if (it == cache.end()) it = cache.emplace(u.route, route_weights(topo, users, rates, u.route)).first;
    const auto d = distribute_bid(u.bid(), it->second, fidelity);
    for (std::size_t i = 0; i < d.links.size(); ++i) sets[d.links[i]].push_back(d.share[i]);
  }
  return sets;
}

}  // namespace micc
