#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "micc/allocation.hpp"
#include "micc/micc.hpp"
#include "micc/num_solver.hpp"
#include "micc/scenario.hpp"
#include "micc/selfreg.hpp"
#include "micc/utility.hpp"

namespace micc {

// ---------------------------------------------------------------- calibration

struct CalibrationRow {
  CalibrationTarget target;
  double fitted{0.0};
  double rel_error{0.0};
};

struct CalibrationResult {
  UtilityParams params;
  double error{0.0};          // max relative error on the targets
  double holdout_error{0.0};  // same on the held-out rows (0 when none)
  bool ok{false};             // both errors within their bounds
  std::vector<CalibrationRow> rows;
  std::vector<CalibrationRow> holdout_rows;
};

class CalibrationFailure : public std::runtime_error {
 public:
  explicit CalibrationFailure(CalibrationResult best)
      : std::runtime_error("calibration error above bound"), best_(std::move(best)) {}
  [[nodiscard]] const CalibrationResult& best() const { return best_; }

 private:
  CalibrationResult best_;
};

namespace detail {

inline std::vector<CalibrationRow> evaluate_targets(const Scenario& sc, const UtilityParams& p,
                                                    const std::vector<CalibrationTarget>& targets) {
  std::vector<CalibrationRow> rows;
  for (const auto& t : targets) {
    const auto u = sc.cluster(t.cluster).make_user(0);
    const double x = best_response(t.price, u, p);
    const double err = t.rate != 0.0 ? std::abs(x - t.rate) / std::abs(t.rate) : std::abs(x);
    rows.push_back({t, x, err});
  }
  return rows;
}

inline double max_error(const std::vector<CalibrationRow>& rows) {
  double e = 0.0;
  for (const auto& r : rows) e = std::max(e, r.rel_error);
  return e;
}

/// Grid search in log space, then golden-section polish around the best cell.
inline std::pair<double, double> minimize_1d(const std::function<double(double)>& f, double lo, double hi,
                                             int points) {
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  int best = 0;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<double> xs(points);
  for (int i = 0; i < points; ++i) {
    xs[i] = std::exp(llo + (lhi - llo) * i / (points - 1));
    const double v = f(xs[i]);
    if (v < best_f) {
      best_f = v;
      best = i;
    }
  }
  const double a = xs[std::max(0, best - 1)];
  const double b = xs[std::min(points - 1, best + 1)];
  const double x = golden_section_max([&](double t) { return -f(t); }, a, b, 60);
  const double fx = f(x);
  return fx < best_f ? std::pair{x, fx} : std::pair{xs[best], best_f};
}

}  // namespace detail

/// Fits theta (and optionally the valuation scale) so best responses match
/// the configured targets; minimizes the max relative error.
inline CalibrationResult calibrate(const Scenario& sc) {
  const auto& cfg = sc.calibration;
  if (cfg.targets.empty()) throw std::domain_error("calibrate: no targets");
  UtilityParams base = sc.utility;

  auto fit_theta = [&](double scale) {
    UtilityParams p = base;
    p.valuation_scale = scale;
    auto f = [&](double th) {
      p.theta = th;
      return detail::max_error(detail::evaluate_targets(sc, p, cfg.targets));
    };
    return detail::minimize_1d(f, cfg.theta_lo, cfg.theta_hi, 200);
  };

  double best_scale = base.valuation_scale;
  auto [best_theta, best_err] = fit_theta(best_scale);
  if (cfg.fit_valuation_scale) {
    auto f = [&](double scale) { return fit_theta(scale).second; };
    auto [s, e] = detail::minimize_1d(f, cfg.scale_lo, cfg.scale_hi, 40);
    if (e < best_err) {
      best_scale = s;
      std::tie(best_theta, best_err) = fit_theta(s);
    }
  }

  CalibrationResult res;
  res.params = base;
  res.params.theta = best_theta;
  res.params.valuation_scale = best_scale;
  res.rows = detail::evaluate_targets(sc, res.params, cfg.targets);
  res.error = detail::max_error(res.rows);
  res.holdout_rows = detail::evaluate_targets(sc, res.params, cfg.holdout);
  res.holdout_error = detail::max_error(res.holdout_rows);
  res.ok = res.error <= cfg.max_rel_error && res.holdout_error <= cfg.holdout_max_rel_error;
  return res;
}

inline nlohmann::json calibration_to_json(const CalibrationResult& r) {
  using nlohmann::json;
  auto rows = [](const std::vector<CalibrationRow>& v) {
    json a = json::array();
    for (const auto& x : v) {
      a.push_back({{"price", x.target.price}, {"cluster", x.target.cluster}, {"target", x.target.rate},
                   {"fitted", x.fitted}, {"rel_error", x.rel_error}});
    }
    return a;
  };
  return {{"theta", r.params.theta},
          {"valuation_scale", r.params.valuation_scale},
          {"variant", r.params.variant == SigmoidVariant::UnshiftedSigmoid ? "literal" : "centered"},
          {"budget_cap", r.params.budget_cap},
          {"max_rel_error", r.error},
          {"holdout_max_rel_error", r.holdout_error},
          {"ok", r.ok},
          {"targets", rows(r.rows)},
          {"holdout", rows(r.holdout_rows)}};
}

// --------------------------------------------------------- reference tables

/// One row of a published allocation table: per-cluster rate and head count,
/// the printed totals, and optionally what this library reproduces.
struct ReferenceRow {
  std::string table;
  std::string label;
  double price{0.0};
  std::vector<double> rates;  // per cluster
  std::vector<int> counts;    // users per cluster
  double printed_flow{0.0};
  double printed_revenue{0.0};
  std::optional<double> artifact_flow;
  std::optional<double> artifact_revenue;

  [[nodiscard]] double composed_flow() const {
    double s = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) s += rates[i] * counts.at(i);
    return s;
  }
  [[nodiscard]] int users() const {
    int n = 0;
    for (int c : counts) n += c;
    return n;
  }
  // Rates are printed to 2 decimals, so each may be off by 0.005.
  [[nodiscard]] bool flow_consistent() const {
    return std::abs(composed_flow() - printed_flow) <= 0.005 * (users() + 1);
  }
  [[nodiscard]] bool revenue_consistent() const {
    return std::abs(price * printed_flow - printed_revenue) <= 0.005 * (price + 1.0);
  }
  [[nodiscard]] bool consistent() const { return flow_consistent() && revenue_consistent(); }
};

/// Printed rows for the five-cluster network at prices 5 and 6, and for the
/// release-and-refill sequence at price 6.
inline std::vector<ReferenceRow> reference_rows() {
  return {
      {"price_comparison", "price_5", 5, {1.76, 2.64, 3.09, 0, 0}, {5, 5, 5, 0, 0}, 37.45, 187.25, {}, {}},
      {"price_comparison", "price_6", 6, {1.49, 2.42, 2.89, 0, 0}, {5, 5, 5, 0, 0}, 34, 204, {}, {}},
      {"release_refill", "before", 6, {1.49, 2.42, 2.89, 0, 0}, {5, 5, 5, 0, 0}, 34, 204, {}, {}},
      {"release_refill", "after", 6, {0, 2.42, 2.89, 0, 0}, {0, 5, 5, 0, 0}, 26.45, 158.7, {}, {}},
      {"release_refill", "plus_4_new", 6, {0, 2.42, 2.89, 0, 0}, {0, 5, 9, 0, 0}, 39.90, 228.04, {}, {}},
  };
}

/// CSV with the printed values, their recomputation and consistency flags.
inline void emit_reference_tables(std::ostream& os, const std::vector<ReferenceRow>& rows) {
  os << "table,row,price,printed_flow,printed_revenue,composed_flow,price_times_flow,flow_consistent,"
        "revenue_consistent,consistent,artifact_flow,artifact_revenue\n";
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << r.table << ',' << r.label << ',' << fmt(r.price) << ',' << fmt(r.printed_flow) << ','
       << fmt(r.printed_revenue) << ',' << fmt(r.composed_flow()) << ',' << fmt(r.price * r.printed_flow) << ','
       << (r.flow_consistent() ? "pass" : "FLAG") << ',' << (r.revenue_consistent() ? "pass" : "FLAG") << ','
       << (r.consistent() ? "pass" : "FLAG") << ',' << (r.artifact_flow ? fmt(*r.artifact_flow) : "") << ','
       << (r.artifact_revenue ? fmt(*r.artifact_revenue) : "") << '\n';
  }
}

/// First tick whose starting population matches `want` on every listed cluster.
inline const TickRecord* find_tick(const SimTrace& tr, const std::map<std::string, int>& want) {
  for (const auto& t : tr.ticks) {
    bool ok = true;
    for (const auto& [c, n] : want) {
      const auto it = t.population.find(c);
      ok = ok && (it == t.population.end() ? 0 : it->second) == n;
    }
    if (ok) return &t;
  }
  return nullptr;
}

/// Fills the artifact columns of `rows` by reproducing each of them.
inline void reproduce_reference_rows(const Scenario& base, std::vector<ReferenceRow>& rows) {
  for (auto& r : rows) {
    if (r.table != "price_comparison") continue;
    const auto users = base.users_of({"c1", "c2", "c3"});
    const auto rep = respond(base.topology, users, base.utility, PriceVector::uniform(r.price));
    r.artifact_flow = rep.total_flow;
    r.artifact_revenue = rep.revenue;
  }
  Scenario sc = base;
  sc.pricing.strategy = StrategyKind::Fixed;
  sc.pricing.fixed_price = 6.0;
  sc.horizon = 60;
  sc.arrivals = {{40, "c3", 4}};
  const auto tr = run(sc);
  const std::map<std::string, std::map<std::string, int>> want = {
      {"before", {{"c1", 5}, {"c2", 5}, {"c3", 5}, {"c4", 0}, {"c5", 0}}},
      {"after", {{"c1", 0}, {"c2", 5}, {"c3", 5}, {"c4", 0}, {"c5", 0}}},
      {"plus_4_new", {{"c1", 0}, {"c2", 5}, {"c3", 9}, {"c4", 0}, {"c5", 0}}},
  };
  for (auto& r : rows) {
    if (r.table != "release_refill") continue;
    if (const auto* t = find_tick(tr, want.at(r.label))) {
      r.artifact_flow = t->total_flow;
      r.artifact_revenue = t->revenue;
    }
  }
}

// ------------------------------------------------------------------- sweeps

struct SweepRow {
  double price{0.0};
  std::size_t tick{0};  // last tick of the level
  double total_flow{0.0};
  double revenue{0.0};
  bool feasible{false};
  std::map<std::string, int> survivors;
};

/// Progressive run over `grid`, `dwell` ticks per level; one row per level,
/// measured on the last tick of the level.
inline std::vector<SweepRow> progressive_sweep(const Scenario& base, const std::vector<double>& grid,
                                               std::size_t dwell) {
  if (grid.empty()) throw std::domain_error("progressive_sweep: empty grid");
  if (dwell == 0) throw std::domain_error("progressive_sweep: dwell must be >= 1");
  Scenario sc = base;
  sc.pricing.strategy = StrategyKind::Progressive;
  sc.pricing.grid = grid;
  sc.pricing.dwell = dwell;
  const auto tr = run(sc, grid.size() * dwell);
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto& t = tr.ticks[(k + 1) * dwell - 1];
    rows.push_back({grid[k], t.tick, t.total_flow, t.revenue, t.feasible, t.survivors});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows,
                            const std::vector<std::string>& clusters) {
  os << "price,tick,total_flow,revenue,feasible";
  for (const auto& c : clusters) os << ",active_" << c;
  os << '\n';
  os.precision(17);
  for (const auto& r : rows) {
    os << r.price << ',' << r.tick << ',' << r.total_flow << ',' << r.revenue << ',' << (r.feasible ? 1 : 0);
    for (const auto& c : clusters) os << ',' << r.survivors.at(c);
    os << '\n';
  }
}

/// Price grid "a:b:step", inclusive of b up to rounding.
inline std::vector<double> parse_grid(const std::string& s) {
  double a = 0.0;
  double b = 0.0;
  double st = 0.0;
  char c1 = 0;
  char c2 = 0;
  std::istringstream in(s);
  if (!(in >> a >> c1 >> b >> c2 >> st) || c1 != ':' || c2 != ':' || !(st > 0.0) || b < a) {
    throw std::invalid_argument("price grid must look like a:b:step with step > 0 and b >= a");
  }
  std::vector<double> g;
  for (std::size_t i = 0;; ++i) {
    const double v = a + static_cast<double>(i) * st;
    if (v > b + 1e-9 * std::max(1.0, std::abs(b))) break;
    g.push_back(v);
  }
  return g;
}

// ------------------------------------------------- randomized bound check

struct BoundSweepSummary {
  std::size_t scenarios{0};
  std::size_t converged{0};
  std::size_t holds{0};
  std::size_t violated{0};
  std::size_t inconclusive{0};
  std::size_t unaffordable{0};
  double max_excess{-std::numeric_limits<double>::infinity()};  // max(optimal - selected)
  std::vector<VerificationRecord> records;
};

/// Random single-link market: 3-25 users, capacity 10-100, bids 1-20.
struct RandomMarket {
  Topology topo;
  std::vector<User> users;
};

inline RandomMarket random_market(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_users(3, 25);
  std::uniform_real_distribution<double> cap(10.0, 100.0);
  std::uniform_real_distribution<double> bid(1.0, 20.0);
  std::uniform_real_distribution<double> xs(0.5, 5.0);
  RandomMarket m;
  m.topo.add_link("L", cap(rng));
  m.topo.add_route("R", {"L"});
  const int n = n_users(rng);
  for (int i = 0; i < n; ++i) {
    User u;
    u.id = static_cast<UserId>(i + 1);
    u.cluster = "u" + std::to_string(i + 1);
    u.route = "R";
    u.x_star = xs(rng);
    u.budget = bid(rng) * u.x_star;
    u.x_max = 2.0 * u.x_star;
    m.users.push_back(u);
  }
  return m;
}

/// Draws markets until `count` of them have an affordable MICC price and
/// checks the subgradient optimum against it on each. Markets are drawn
/// sequentially from `seed`; the checks run in parallel.
inline BoundSweepSummary bound_sweep(std::size_t count, std::uint64_t seed, const UtilityParams& params,
                                     const SubgradientOptions& opt, double slack = 1e-6) {
  std::mt19937_64 rng(seed);
  std::vector<RandomMarket> markets;
  BoundSweepSummary s;
  while (markets.size() < count) {
    auto m = random_market(rng);
    const auto bids = BidSet::of_users(m.users);
    if (!micc_select(m.topo, m.users, params, bids).affordable) {
      ++s.unaffordable;
      continue;
    }
    markets.push_back(std::move(m));
  }
  std::vector<std::future<VerificationRecord>> jobs;
  for (const auto& m : markets) {
    jobs.push_back(std::async(std::launch::async, [&m, &params, &opt, slack] {
      return verify_price_bound(m.topo, m.users, params, BidSet::of_users(m.users), opt, slack);
    }));
  }
  for (auto& j : jobs) {
    auto r = j.get();
    ++s.scenarios;
    switch (r.status) {
      case VerificationRecord::Status::Holds: ++s.holds; ++s.converged; break;
      case VerificationRecord::Status::Violated: ++s.violated; ++s.converged; break;
      default: ++s.inconclusive; break;
    }
    if (r.status == VerificationRecord::Status::Holds || r.status == VerificationRecord::Status::Violated) {
      s.max_excess = std::max(s.max_excess, r.optimal_price - r.selected_price);
    }
    s.records.push_back(std::move(r));
  }
  return s;
}

}  // namespace micc
