#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "micc/allocation.hpp"
#include "micc/market.hpp"
#include "micc/num_solver.hpp"
#include "micc/utility.hpp"

namespace micc {

/// Multiset of bid prices, kept in ascending order.
class BidSet {
 public:
  BidSet() = default;
  explicit BidSet(std::vector<double> prices) : prices_(std::move(prices)) {
    for (double p : prices_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw std::domain_error("BidSet: prices must be finite and >= 0");
    }
    std::sort(prices_.begin(), prices_.end());
  }

  static BidSet of_users(std::span<const User> users) {
    std::vector<double> p;
    for (const auto& u : users) {
      if (u.transmitting()) p.push_back(u.bid().value);
    }
    return BidSet(std::move(p));
  }

  [[nodiscard]] const std::vector<double>& prices() const { return prices_; }
  [[nodiscard]] std::size_t size() const { return prices_.size(); }
  [[nodiscard]] bool empty() const { return prices_.empty(); }
  [[nodiscard]] double min() const { return prices_.front(); }

  /// Removes one occurrence of `price`, if present.
  void remove_one(double price) {
    auto it = std::find(prices_.begin(), prices_.end(), price);
    if (it != prices_.end()) prices_.erase(it);
  }

 private:
  std::vector<double> prices_;
};

enum class MiccCase { FeasibleAtMin, FeasibleAtInterior, Infeasible };

inline const char* to_string(MiccCase c) {
  switch (c) {
    case MiccCase::FeasibleAtMin: return "feasible_at_min";
    case MiccCase::FeasibleAtInterior: return "feasible_at_interior";
    case MiccCase::Infeasible: return "infeasible";
  }
  return "?";
}

struct CandidateTrace {
  std::size_t index{0};
  double price{0.0};
  std::vector<double> link_loads;
  bool feasible{false};
};

struct MiccOutcome {
  bool affordable{false};
  double price{0.0};  // meaningful only when affordable
  std::size_t iterations{0};
  MiccCase kase{MiccCase::Infeasible};
  AllocationReport report;
  std::vector<CandidateTrace> trace;

  [[nodiscard]] bool same_result(const MiccOutcome& o) const {
    return affordable == o.affordable && (!affordable || price == o.price);
  }
};

/// Cheapest-first search over the bid set for the smallest price at which
/// every link carries no more than its capacity. Each round charges the
/// smallest remaining bid (never below `lambda_min`), lets all users respond,
/// and drops that bid if some link is still overloaded.
inline MiccOutcome micc_select(const Topology& topo, std::span<const User> users, const UtilityParams& params,
                               BidSet bids, double lambda_min = 0.0) {
  if (bids.empty()) throw std::domain_error("micc_select: empty bid set");
  MiccOutcome out;
  const std::size_t total = bids.size();
  while (!bids.empty()) {
    const double candidate = bids.min();
    const double charged = std::max(candidate, lambda_min);
    auto report = respond(topo, users, params, PriceVector::uniform(charged));
    out.trace.push_back(CandidateTrace{out.iterations, charged, report.link_loads, report.feasible});
    ++out.iterations;
    if (report.feasible) {
      out.affordable = true;
      out.price = charged;
      out.kase = out.iterations == 1 ? MiccCase::FeasibleAtMin : MiccCase::FeasibleAtInterior;
      out.report = std::move(report);
      return out;
    }
    out.report = std::move(report);
    bids.remove_one(candidate);
  }
  out.kase = MiccCase::Infeasible;
  out.iterations = total;
  return out;
}

inline void write_trace_csv(std::ostream& os, const Topology& topo, std::span<const CandidateTrace> trace) {
  os << "candidate_index,price";
  for (const auto& l : topo.links()) os << ",load_" << l.id;
  os << ",feasible\n";
  os.precision(17);
  for (const auto& c : trace) {
    os << c.index << ',' << c.price;
    for (double v : c.link_loads) os << ',' << v;
    os << ',' << (c.feasible ? 1 : 0) << '\n';
  }
}

/// Outcome of checking that the subgradient optimum does not exceed the MICC price.
struct VerificationRecord {
  enum class Status { Holds, Violated, Inconclusive, NotApplicable };
  Status status{Status::NotApplicable};
  double selected_price{0.0};  // MICC's pick
  double optimal_price{0.0};   // subgradient optimum seeded at the MICC pick
  double gap{0.0};             // selected - optimal
  std::size_t iterations{0};
  // Y^t = sigma_t (C - sum x(lambda^t)); while the floor is inactive,
  // lambda^t = selected - sum_{j<t} Y^j.
  std::vector<double> steps;
  bool telescoping_holds{true};
};

inline const char* to_string(VerificationRecord::Status s) {
  switch (s) {
    case VerificationRecord::Status::Holds: return "holds";
    case VerificationRecord::Status::Violated: return "violated";
    case VerificationRecord::Status::Inconclusive: return "inconclusive";
    case VerificationRecord::Status::NotApplicable: return "not_applicable";
  }
  return "?";
}

/// Runs MICC, then the single-link subgradient method starting at the MICC
/// price, and compares the two prices.
inline VerificationRecord verify_price_bound(const Topology& topo, std::span<const User> users,
                                              const UtilityParams& params, const BidSet& bids,
                                              SubgradientOptions opt, double slack = 1e-6) {
  if (topo.link_count() != 1) throw std::domain_error("verify_price_bound: needs a single-link topology");
  VerificationRecord rec;
  const auto micc = micc_select(topo, users, params, bids, opt.lambda_min);
  if (!micc.affordable) return rec;
  rec.selected_price = micc.price;
  opt.initial_price = micc.price;
  const auto sg = run_subgradient(topo, users, params, opt);
  rec.iterations = sg.iterations;
  rec.optimal_price = sg.lambda(0);
  rec.gap = rec.selected_price - rec.optimal_price;

  const auto& hist = sg.links[0].history;
  double partial = 0.0;
  for (std::size_t t = 0; t < hist.size(); ++t) {
    const double y = opt.step.at(hist[t].t) * hist[t].gap;
    rec.steps.push_back(y);
    const double reconstructed = rec.selected_price - partial;
    const bool floor_hit = hist[t].lambda - y < opt.lambda_min;
    if (std::abs(reconstructed - hist[t].lambda) > 1e-9 * std::max(1.0, rec.selected_price) && !floor_hit) {
      rec.telescoping_holds = false;
    }
    if (floor_hit) break;
    partial += y;
  }

  if (!sg.converged()) {
    rec.status = VerificationRecord::Status::Inconclusive;
  } else {
    rec.status = rec.optimal_price <= rec.selected_price + slack ? VerificationRecord::Status::Holds
                                                                 : VerificationRecord::Status::Violated;
  }
  return rec;
}

}  // namespace micc
