#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "micc/allocation.hpp"
#include "micc/market.hpp"
#include "micc/utility.hpp"

namespace micc {

struct StepPolicy {
  enum class Kind { Constant, Diminishing };
  Kind kind{Kind::Constant};
  double sigma0{0.01};

  [[nodiscard]] double at(std::size_t t) const {
    return kind == Kind::Constant ? sigma0 : sigma0 / (1.0 + static_cast<double>(t));
  }
};

struct PriceHistoryEntry {
  std::size_t t{0};
  double lambda{0.0};
  double aggregate_rate{0.0};
  double gap{0.0};  // capacity - aggregate_rate
};

/// Dual variable of one link.
struct PriceState {
  double lambda{0.0};
  double lambda_min{0.0};
  std::size_t t{0};
  bool converged{false};
  std::vector<PriceHistoryEntry> history;
};

/// One projected subgradient step:
///   lambda' = max(lambda - sigma_t (C - sum x), lambda_min).
inline PriceState price_update(const PriceState& state, const StepPolicy& step, double capacity,
                               double aggregate_rate) {
  PriceState next = state;
  const double gap = capacity - aggregate_rate;
  next.history.push_back(PriceHistoryEntry{state.t, state.lambda, aggregate_rate, gap});
  next.lambda = std::max(state.lambda - step.at(state.t) * gap, state.lambda_min);
  next.t = state.t + 1;
  return next;
}

inline void write_history_csv(std::ostream& os, std::span<const PriceHistoryEntry> history) {
  os << "t,lambda,aggregate_rate,gap\n";
  os.precision(17);
  for (const auto& h : history) os << h.t << ',' << h.lambda << ',' << h.aggregate_rate << ',' << h.gap << '\n';
}

struct SubgradientOptions {
  StepPolicy step{};
  double tol{1e-4};
  std::size_t max_iters{10'000};
  double lambda_min{0.0};
  // Initial price on every link; lambda_min when unset.
  std::optional<double> initial_price;
};

struct SubgradientResult {
  enum class Status { Converged, NonConvergence };
  Status status{Status::NonConvergence};
  std::vector<PriceState> links;  // one dual variable per link
  std::size_t iterations{0};
  AllocationReport report;

  [[nodiscard]] bool converged() const { return status == Status::Converged; }
  [[nodiscard]] double lambda(std::size_t link = 0) const { return links.at(link).lambda; }
};

/// Dual subgradient method: users answer the route price (sum of link prices),
/// every link updates its own price from its own load. Stops when every price
/// moved less than `tol` and every link is either at its floor with spare
/// capacity or loaded to within tol * C of capacity.
inline SubgradientResult run_subgradient(const Topology& topo, std::span<const User> users,
                                         const UtilityParams& params, const SubgradientOptions& opt) {
  if (opt.lambda_min < 0.0) throw std::domain_error("run_subgradient: lambda_min must be >= 0");
  SubgradientResult res;
  const std::size_t nl = topo.link_count();
  res.links.assign(nl, PriceState{std::max(opt.initial_price.value_or(opt.lambda_min), opt.lambda_min),
                                  opt.lambda_min, 0, false, {}});

  auto current_prices = [&] {
    std::vector<double> p(nl);
    for (std::size_t l = 0; l < nl; ++l) p[l] = res.links[l].lambda;
    return PriceVector::links(std::move(p));
  };

  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    const auto prices = current_prices();
    const auto d = demands(topo, users, params, prices);
    const auto loads = link_loads(topo, users, d);
    bool done = true;
    for (std::size_t l = 0; l < nl; ++l) {
      const double cap = topo.links()[l].capacity;
      auto next = price_update(res.links[l], opt.step, cap, loads[l]);
      const bool still = std::abs(next.lambda - res.links[l].lambda) < opt.tol;
      const bool at_floor = next.lambda <= opt.lambda_min && loads[l] <= cap * (1.0 + opt.tol);
      const bool balanced = std::abs(cap - loads[l]) <= opt.tol * std::max(cap, 1.0);
      done = done && still && (at_floor || balanced);
      res.links[l] = std::move(next);
    }
    res.iterations = it + 1;
    if (done) {
      res.status = SubgradientResult::Status::Converged;
      for (auto& s : res.links) s.converged = true;
      break;
    }
  }
  const auto prices = current_prices();
  res.report = respond(topo, users, params, prices);
  return res;
}

}  // namespace micc
