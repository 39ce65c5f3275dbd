#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "micc/market.hpp"
#include "micc/utility.hpp"

namespace oracle {

/// Minimum feasible price over every candidate, with no early exit.
/// Loads are summed here from scratch rather than through the library.
inline std::optional<double> min_feasible(const micc::Topology& topo, std::span<const micc::User> users,
                                          const micc::UtilityParams& params, std::vector<double> candidates,
                                          double lambda_min = 0.0) {
  if (candidates.empty()) throw std::domain_error("oracle: empty bid set");
  std::optional<double> best;
  for (double c : candidates) {
    const double price = std::max(c, lambda_min);
    std::vector<double> load(topo.link_count(), 0.0);
    for (const auto& u : users) {
      if (u.state == micc::UserState::Discharged) continue;
      const double x = price > 0.0 ? micc::best_response(price, u, params) : u.x_max;
      for (std::size_t l = 0; l < topo.link_count(); ++l) {
        if (topo.route_uses(u.route, l)) load[l] += x;
      }
    }
    bool ok = true;
    for (std::size_t l = 0; l < load.size(); ++l) ok = ok && load[l] <= topo.links()[l].capacity + 1e-9;
    if (ok && (!best || price < *best)) best = price;
  }
  return best;
}

/// Argmax of the net objective on a uniform grid of `steps` cells.
inline double grid_argmax(double lambda, const micc::User& u, const micc::UtilityParams& p, int steps) {
  double hi = u.x_max;
  if (p.budget_cap) hi = std::min(hi, u.budget / lambda);
  double bx = 0.0;
  double bf = micc::net_valuation(0.0, lambda, u, p);
  for (int i = 1; i <= steps; ++i) {
    const double x = hi * i / steps;
    const double f = micc::net_valuation(x, lambda, u, p);
    if (f > bf) {
      bf = f;
      bx = x;
    }
  }
  return bx;
}

}  // namespace oracle
