#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "micc/allocation.hpp"
#include "micc/market.hpp"
#include "micc/micc.hpp"
#include "micc/multilink.hpp"
#include "micc/num_solver.hpp"
#include "micc/scenario.hpp"
#include "micc/utility.hpp"

namespace micc {

struct Event {
  enum class Kind { Arrival, Waiting, Recovered, Discharge, Unaffordable };
  std::size_t tick{0};
  Kind kind{Kind::Arrival};
  UserId user{0};
  std::string cluster;
  double price{0.0};
  double rate{0.0};
  std::string reason;
};

inline const char* to_string(Event::Kind k) {
  switch (k) {
    case Event::Kind::Arrival: return "arrival";
    case Event::Kind::Waiting: return "waiting";
    case Event::Kind::Recovered: return "recovered";
    case Event::Kind::Discharge: return "discharge";
    case Event::Kind::Unaffordable: return "unaffordable";
  }
  return "?";
}

struct SimState {
  std::size_t tick{0};
  std::vector<User> users;
  PriceVector prices;
  std::vector<PriceState> link_prices;  // subgradient strategy only
  std::map<UserId, double> waiting_clock;
  std::vector<Event> event_log;
  UserId next_id{1};
  std::vector<double> last_rates;  // parallel to users

  // Online MICC bookkeeping.
  std::vector<double> candidates;
  std::size_t cursor{0};
  std::optional<double> selected;
  std::size_t micc_iterations{0};
  std::vector<double> link_levels;  // per-link MICC prices
  std::vector<char> link_infeasible;
};

struct TickRecord {
  std::size_t tick{0};
  PriceVector prices;
  std::vector<UserId> ids;
  std::vector<std::string> clusters;
  std::vector<double> demand;
  std::vector<double> rates;
  std::vector<UserState> states;  // after this tick's transitions
  std::vector<double> demand_loads;
  std::vector<double> link_loads;
  double revenue{0.0};
  double total_flow{0.0};
  std::map<std::string, int> population;  // transmitting when the tick starts
  std::map<std::string, int> survivors;   // after this tick's transitions
  bool feasible{true};                   // demand fits every link
  std::map<RouteId, std::vector<double>> probes;
};

struct SimTrace {
  std::string scenario;
  StrategyKind strategy{StrategyKind::Fixed};
  std::vector<std::string> links;
  std::vector<std::string> cluster_labels;
  std::vector<TickRecord> ticks;
  std::vector<Event> events;
  std::vector<User> final_users;
  // Online MICC: first feasible candidate and the number of candidates tried.
  std::optional<double> micc_price;
  std::size_t micc_iterations{0};
  std::optional<std::size_t> micc_tick;
};

inline SimState initial_state(const Scenario& sc) {
  SimState st;
  st.users = sc.users();
  st.next_id = st.users.size() + 1;
  st.last_rates.assign(st.users.size(), 0.0);
  const auto nl = sc.topology.link_count();
  const double start = std::max(sc.pricing.lambda_min, 0.0);
  st.link_prices.assign(nl, PriceState{start, sc.pricing.lambda_min, 0, false, {}});
  st.candidates = sc.pricing.price_set;
  if (st.candidates.empty()) st.candidates = BidSet::of_users(st.users).prices();
  std::sort(st.candidates.begin(), st.candidates.end());
  st.link_levels.assign(nl, -1.0);
  st.link_infeasible.assign(nl, 0);
  for (std::size_t i = 0; i < st.users.size(); ++i) st.last_rates[i] = st.users[i].x_star;
  return st;
}

namespace detail {

inline PriceVector multilink_prices(const Scenario& sc, SimState& st) {
  const auto& topo = sc.topology;
  auto sets = per_link_bid_sets(topo, st.users, st.last_rates, sc.pricing.fidelity);
  std::vector<double> p(topo.link_count(), sc.pricing.lambda_min);
  for (std::size_t l = 0; l < sets.size(); ++l) {
    auto& s = sets[l];
    std::sort(s.begin(), s.end());
    if (s.empty()) {
      st.link_levels[l] = sc.pricing.lambda_min;
    } else if (st.link_levels[l] < 0.0) {
      st.link_levels[l] = s.front();
    } else if (st.link_infeasible[l]) {
      auto it = std::upper_bound(s.begin(), s.end(), st.link_levels[l]);
      if (it != s.end()) st.link_levels[l] = *it;
    }
    p[l] = std::max(st.link_levels[l], sc.pricing.lambda_min);
  }
  return PriceVector::links(std::move(p));
}

inline PriceVector prices_for_tick(const Scenario& sc, SimState& st) {
  const auto& pc = sc.pricing;
  switch (pc.strategy) {
    case StrategyKind::Fixed:
      return PriceVector::uniform(std::max(pc.fixed_price, pc.lambda_min));
    case StrategyKind::Progressive: {
      const auto level = std::min(st.tick / pc.dwell, pc.grid.size() - 1);
      return PriceVector::uniform(std::max(pc.grid[level], pc.lambda_min));
    }
    case StrategyKind::Micc:
      if (st.candidates.empty()) return PriceVector::uniform(pc.lambda_min);
      return PriceVector::uniform(std::max(st.candidates[st.cursor], pc.lambda_min));
    case StrategyKind::MiccMultilink:
      return multilink_prices(sc, st);
    case StrategyKind::Subgradient: {
      std::vector<double> p(st.link_prices.size());
      for (std::size_t l = 0; l < p.size(); ++l) p[l] = st.link_prices[l].lambda;
      return PriceVector::links(std::move(p));
    }
  }
  return PriceVector::uniform(pc.lambda_min);
}

inline void discharge(SimState& st, User& u, double price, double rate, const char* reason) {
  u.state = UserState::Discharged;
  st.waiting_clock.erase(u.id);
  st.event_log.push_back({st.tick, Event::Kind::Discharge, u.id, u.cluster, price, rate, reason});
}

}  // namespace detail

/// Advances the simulation by one tick and returns what happened in it.
inline TickRecord step(SimState& st, const Scenario& sc) {
  const auto& topo = sc.topology;

  for (const auto& a : sc.arrivals) {
    if (a.tick != st.tick) continue;
    const auto& tmpl = sc.cluster(a.cluster);
    for (int i = 0; i < a.count; ++i) {
      st.users.push_back(tmpl.make_user(st.next_id++));
      st.last_rates.push_back(tmpl.x_star);
      st.event_log.push_back({st.tick, Event::Kind::Arrival, st.users.back().id, a.cluster, 0.0, 0.0, ""});
    }
  }

  TickRecord rec;
  for (const auto& c : sc.clusters) rec.population[c.label] = 0;
  for (const auto& u : st.users) {
    if (u.transmitting()) ++rec.population[u.cluster];
  }

  st.prices = detail::prices_for_tick(sc, st);
  const auto demand = demands(topo, st.users, sc.utility, st.prices);
  const auto demand_loads = link_loads(topo, st.users, demand);
  const bool feasible = loads_feasible(topo, demand_loads);
  auto rates = maxmin_delivery(topo, st.users, demand);

  rec.tick = st.tick;
  rec.prices = st.prices;
  rec.demand = demand;
  rec.demand_loads = demand_loads;
  rec.feasible = feasible;
  if (sc.pricing.strategy == StrategyKind::MiccMultilink) {
    for (const auto& [rid, _] : topo.routes()) rec.probes[rid] = probe_route(topo, st.users, st.last_rates, rid);
  }

  // Price feedback for the next tick.
  switch (sc.pricing.strategy) {
    case StrategyKind::Micc:
      if (st.candidates.empty()) break;
      if (feasible && !st.selected) {
        st.selected = *st.prices.flat;
        st.micc_iterations = st.cursor + 1;
      }
      if (!feasible) {
        if (st.cursor + 1 < st.candidates.size()) {
          ++st.cursor;
        } else {
          st.event_log.push_back({st.tick, Event::Kind::Unaffordable, 0, "", *st.prices.flat, 0.0, "candidates exhausted"});
        }
      }
      break;
    case StrategyKind::MiccMultilink:
      for (std::size_t l = 0; l < topo.link_count(); ++l) {
        st.link_infeasible[l] = demand_loads[l] > topo.links()[l].capacity + 1e-9 ? 1 : 0;
      }
      break;
    case StrategyKind::Subgradient:
      for (std::size_t l = 0; l < topo.link_count(); ++l) {
        st.link_prices[l] = price_update(st.link_prices[l], sc.pricing.step, topo.links()[l].capacity, demand_loads[l]);
      }
      break;
    default:
      break;
  }

  const auto report = make_report(topo, st.users, sc.utility, st.prices, rates);
  rec.link_loads = report.link_loads;
  rec.revenue = report.revenue;
  rec.total_flow = report.total_flow;

  const auto& sr = sc.selfreg;
  for (std::size_t i = 0; i < st.users.size(); ++i) {
    auto& u = st.users[i];
    if (!u.transmitting()) continue;
    const double p = st.prices.route_price(topo, u.route);
    if (!(p > 0.0)) continue;  // free service: no utility to evaluate
    const double x = rates[i];
    if (sr.discharge_when_priced_out && demand[i] <= 0.0) {
      detail::discharge(st, u, p, x, "priced_out");
      continue;
    }
    if (sr.discharge_when_bid_exceeded && p > u.bid().value) {
      detail::discharge(st, u, p, x, "bid_exceeded");
      continue;
    }
    if (x < u.x_star * (1.0 - sr.qos_slack)) {
      double& clock = st.waiting_clock[u.id];
      clock += sr.weighted_clock ? (u.x_star - x) / u.x_star : 1.0;
      if (u.state == UserState::Active) {
        u.state = UserState::Waiting;
        st.event_log.push_back({st.tick, Event::Kind::Waiting, u.id, u.cluster, p, x, ""});
      }
      const double ud = extended_utility(x, p, clock / u.tolerance, u, sc.utility);
      if (ud < u.discharge_threshold) detail::discharge(st, u, p, x, "dissatisfied");
    } else {
      st.waiting_clock.erase(u.id);
      if (u.state == UserState::Waiting) {
        u.state = UserState::Active;
        st.event_log.push_back({st.tick, Event::Kind::Recovered, u.id, u.cluster, p, x, ""});
      }
    }
  }

  for (const auto& c : sc.clusters) rec.survivors[c.label] = 0;
  for (std::size_t i = 0; i < st.users.size(); ++i) {
    const auto& u = st.users[i];
    rec.ids.push_back(u.id);
    rec.clusters.push_back(u.cluster);
    rec.states.push_back(u.state);
    if (u.transmitting()) ++rec.survivors[u.cluster];
  }
  rec.rates = std::move(rates);
  st.last_rates = rec.rates;
  ++st.tick;
  return rec;
}

/// Runs `horizon` ticks (the scenario's horizon when unset).
inline SimTrace run(const Scenario& sc, std::optional<std::size_t> horizon = std::nullopt) {
  const std::size_t n = horizon.value_or(sc.horizon);
  if (n == 0) throw std::domain_error("run: horizon must be >= 1");
  SimState st = initial_state(sc);
  SimTrace tr;
  tr.scenario = sc.name;
  tr.strategy = sc.pricing.strategy;
  for (const auto& l : sc.topology.links()) tr.links.push_back(l.id);
  for (const auto& c : sc.clusters) tr.cluster_labels.push_back(c.label);
  for (std::size_t t = 0; t < n; ++t) {
    const bool had = st.selected.has_value();
    tr.ticks.push_back(step(st, sc));
    if (!had && st.selected) tr.micc_tick = t;
  }
  tr.events = st.event_log;
  tr.final_users = st.users;
  tr.micc_price = st.selected;
  tr.micc_iterations = st.micc_iterations;
  return tr;
}

/// Rebuilds the final population from the initial scenario and an event log.
inline std::vector<User> replay(const Scenario& sc, const std::vector<Event>& events) {
  auto users = sc.users();
  auto find = [&](UserId id) -> User& {
    auto it = std::find_if(users.begin(), users.end(), [&](const User& u) { return u.id == id; });
    if (it == users.end()) throw std::domain_error("replay: unknown user " + std::to_string(id));
    return *it;
  };
  for (const auto& e : events) {
    switch (e.kind) {
      case Event::Kind::Arrival: users.push_back(sc.cluster(e.cluster).make_user(e.user)); break;
      case Event::Kind::Waiting: find(e.user).state = UserState::Waiting; break;
      case Event::Kind::Recovered: find(e.user).state = UserState::Active; break;
      case Event::Kind::Discharge: find(e.user).state = UserState::Discharged; break;
      case Event::Kind::Unaffordable: break;
    }
  }
  return users;
}

inline nlohmann::json users_to_json(const std::vector<User>& users) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& u : users) {
    arr.push_back({{"id", u.id}, {"cluster", u.cluster}, {"route", u.route}, {"state", to_string(u.state)}});
  }
  return arr;
}

inline nlohmann::json prices_to_json(const PriceVector& p) {
  if (p.flat) return *p.flat;
  return p.per_link;
}

inline nlohmann::json trace_to_json(const SimTrace& tr) {
  using nlohmann::json;
  json j;
  j["scenario"] = tr.scenario;
  j["strategy"] = to_string(tr.strategy);
  j["links"] = tr.links;
  if (tr.micc_price) {
    j["micc"] = {{"price", *tr.micc_price}, {"iterations", tr.micc_iterations}, {"tick", tr.micc_tick.value_or(0)}};
  }
  json ticks = json::array();
  for (const auto& t : tr.ticks) {
    json jt;
    jt["tick"] = t.tick;
    jt["prices"] = prices_to_json(t.prices);
    jt["total_flow"] = t.total_flow;
    jt["revenue"] = t.revenue;
    jt["feasible"] = t.feasible;
    jt["link_loads"] = t.link_loads;
    jt["demand_loads"] = t.demand_loads;
    jt["population"] = t.population;
    jt["survivors"] = t.survivors;
    json us = json::array();
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
      us.push_back({{"id", t.ids[i]}, {"cluster", t.clusters[i]}, {"demand", t.demand[i]}, {"rate", t.rates[i]},
                    {"state", to_string(t.states[i])}});
    }
    jt["users"] = us;
    if (!t.probes.empty()) jt["probes"] = t.probes;
    ticks.push_back(jt);
  }
  j["ticks"] = ticks;
  json ev = json::array();
  for (const auto& e : tr.events) {
    ev.push_back({{"tick", e.tick}, {"kind", to_string(e.kind)}, {"user", e.user}, {"cluster", e.cluster},
                  {"price", e.price}, {"rate", e.rate}, {"reason", e.reason}});
  }
  j["events"] = ev;
  j["final_users"] = users_to_json(tr.final_users);
  return j;
}

/// Per-tick summary: tick, price(s), total_flow, revenue, active count per cluster.
inline void write_trace_csv(std::ostream& os, const SimTrace& tr) {
  const bool flat = tr.ticks.empty() || tr.ticks.front().prices.flat.has_value();
  os << "tick";
  if (flat) {
    os << ",price";
  } else {
    for (const auto& l : tr.links) os << ",price_" << l;
  }
  os << ",total_flow,revenue";
  for (const auto& c : tr.cluster_labels) os << ",active_" << c;
  os << '\n';
  os.precision(17);
  for (const auto& t : tr.ticks) {
    os << t.tick;
    if (flat) {
      os << ',' << t.prices.flat.value_or(0.0);
    } else {
      for (double p : t.prices.per_link) os << ',' << p;
    }
    os << ',' << t.total_flow << ',' << t.revenue;
    for (const auto& c : tr.cluster_labels) os << ',' << t.survivors.at(c);
    os << '\n';
  }
}

}  // namespace micc
