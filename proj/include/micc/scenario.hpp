#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "micc/market.hpp"
#include "micc/multilink.hpp"
#include "micc/num_solver.hpp"
#include "micc/utility.hpp"

namespace micc {

/// Raised for malformed scenario documents; `where` names the offending key path.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(where) {}
  [[nodiscard]] const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Template for every member of a cluster, also used for arrivals.
struct ClusterSpec {
  std::string label;
  RouteId route;
  double budget{0.0};
  double x_star{0.0};
  double x_max{0.0};
  double tolerance{1.0};
  double beta{1.0};
  double sigma_w{0.0};
  double discharge_threshold{0.0};
  int count{0};

  [[nodiscard]] double bid() const { return budget / x_star; }

  [[nodiscard]] User make_user(UserId id) const {
    User u;
    u.id = id;
    u.cluster = label;
    u.route = route;
    u.budget = budget;
    u.x_star = x_star;
    u.x_max = x_max;
    u.tolerance = tolerance;
    u.beta = beta;
    u.sigma_w = sigma_w;
    u.discharge_threshold = discharge_threshold;
    return u;
  }
};

enum class StrategyKind {
  Fixed,          // one price for the whole run
  Progressive,    // walk a price grid, `dwell` ticks per level
  Micc,           // online MICC: next candidate while demand is infeasible
  MiccMultilink,  // online MICC per link on load-weighted bid shares
  Subgradient,    // one dual update per tick and link
};

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Fixed: return "fixed";
    case StrategyKind::Progressive: return "progressive";
    case StrategyKind::Micc: return "micc";
    case StrategyKind::MiccMultilink: return "micc_multilink";
    case StrategyKind::Subgradient: return "subgradient";
  }
  return "?";
}

inline StrategyKind strategy_from_string(const std::string& s) {
  if (s == "fixed") return StrategyKind::Fixed;
  if (s == "progressive") return StrategyKind::Progressive;
  if (s == "micc") return StrategyKind::Micc;
  if (s == "micc_multilink") return StrategyKind::MiccMultilink;
  if (s == "subgradient") return StrategyKind::Subgradient;
  throw ScenarioError("pricing.strategy", "unknown strategy '" + s + "'");
}

struct PricingConfig {
  StrategyKind strategy{StrategyKind::Micc};
  double lambda_min{0.0};
  std::vector<double> price_set;  // MICC candidates; bids of the initial population when empty
  double fixed_price{0.0};
  std::vector<double> grid;  // progressive levels
  std::size_t dwell{5};
  StepPolicy step{};
  double tol{1e-4};
  std::size_t max_iters{10'000};
  Fidelity fidelity{Fidelity::Normalized};
};

/// User-side behaviour knobs of the simulation.
struct SelfRegConfig {
  // Deprivation means x < x_star * (1 - qos_slack).
  double qos_slack{0.0};
  // Advance the waiting clock by the relative shortfall instead of one tick.
  bool weighted_clock{false};
  // Leave as soon as the charged price exceeds the bid.
  bool discharge_when_bid_exceeded{false};
  // Leave when the best response at the charged price is zero.
  bool discharge_when_priced_out{true};
};

struct Arrival {
  std::size_t tick{0};
  std::string cluster;
  int count{0};
};

struct CalibrationTarget {
  double price{0.0};
  std::string cluster;
  double rate{0.0};
};

struct CalibrationConfig {
  std::vector<CalibrationTarget> targets;
  std::vector<CalibrationTarget> holdout;
  double theta_lo{0.1};
  double theta_hi{20.0};
  bool fit_valuation_scale{false};
  double scale_lo{1.0};
  double scale_hi{20.0};
  double max_rel_error{0.05};
  double holdout_max_rel_error{0.10};
};

struct Scenario {
  std::string name;
  Topology topology;
  std::vector<ClusterSpec> clusters;
  UtilityParams utility;
  PricingConfig pricing;
  SelfRegConfig selfreg;
  std::vector<Arrival> arrivals;
  std::size_t horizon{100};
  CalibrationConfig calibration;

  [[nodiscard]] const ClusterSpec& cluster(const std::string& label) const {
    for (const auto& c : clusters) {
      if (c.label == label) return c;
    }
    throw ScenarioError("", "unknown cluster " + label);
  }

  /// Initial population, ids 1..N in cluster order.
  [[nodiscard]] std::vector<User> users() const {
    std::vector<User> out;
    UserId next = 1;
    for (const auto& c : clusters) {
      for (int i = 0; i < c.count; ++i) out.push_back(c.make_user(next++));
    }
    return out;
  }

  /// Members of the listed clusters only.
  [[nodiscard]] std::vector<User> users_of(const std::vector<std::string>& labels) const {
    std::vector<User> out;
    for (auto& u : users()) {
      if (std::find(labels.begin(), labels.end(), u.cluster) != labels.end()) out.push_back(u);
    }
    return out;
  }

  void validate() const {
    utility.validate();
    std::set<std::string> seen;
    for (const auto& c : clusters) {
      if (!seen.insert(c.label).second) throw ScenarioError("clusters", "duplicate label " + c.label);
      if (!topology.has_route(c.route)) throw ScenarioError("clusters." + c.label, "unknown route " + c.route);
      if (c.count < 0) throw ScenarioError("clusters." + c.label, "negative count");
      try {
        c.make_user(0).validate();
      } catch (const std::domain_error& e) {
        throw ScenarioError("clusters." + c.label, e.what());
      }
    }
    std::size_t last = 0;
    for (const auto& a : arrivals) {
      if (a.tick < last) throw ScenarioError("arrivals", "ticks must be nondecreasing");
      last = a.tick;
      if (!seen.contains(a.cluster)) throw ScenarioError("arrivals", "unknown cluster " + a.cluster);
      if (a.count < 0) throw ScenarioError("arrivals", "negative count");
    }
    if (pricing.lambda_min < 0.0) throw ScenarioError("pricing.lambda_min", "must be >= 0");
    for (double p : pricing.price_set) {
      if (!(p >= 0.0)) throw ScenarioError("pricing.price_set", "prices must be >= 0");
    }
    if (pricing.strategy == StrategyKind::Progressive && pricing.grid.empty()) {
      throw ScenarioError("pricing.grid", "progressive strategy needs a non-empty grid");
    }
    if (pricing.dwell == 0) throw ScenarioError("pricing.dwell", "must be >= 1");
    if (!(pricing.step.sigma0 > 0.0)) throw ScenarioError("pricing.step.sigma0", "must be > 0");
    if (horizon == 0) throw ScenarioError("horizon.max_ticks", "must be >= 1");
  }
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ScenarioError(where, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ScenarioError(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ScenarioError(where.empty() ? key : where + "." + key, "missing required key");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ScenarioError(where.empty() ? key : where + "." + key, e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, const std::string& where, T fallback) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline std::vector<CalibrationTarget> parse_targets(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ScenarioError(where, "expected an array");
  std::vector<CalibrationTarget> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto w = where + "[" + std::to_string(i) + "]";
    check_keys(arr[i], w, {"price", "cluster", "rate"});
    out.push_back({get<double>(arr[i], "price", w), get<std::string>(arr[i], "cluster", w), get<double>(arr[i], "rate", w)});
  }
  return out;
}

inline std::pair<double, double> parse_range(const json& j, const char* key, const std::string& where,
                                             std::pair<double, double> fallback) {
  if (!j.contains(key)) return fallback;
  auto v = get<std::vector<double>>(j, key, where);
  if (v.size() != 2 || !(v[0] > 0.0) || !(v[0] < v[1])) throw ScenarioError(where + "." + key, "expected [lo, hi] with 0 < lo < hi");
  return {v[0], v[1]};
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get;
  using detail::get_or;
  check_keys(j, "", {"name", "links", "routes", "clusters", "pricing", "horizon", "utility", "selfreg", "arrivals", "calibration"});
  Scenario s;
  s.name = get_or<std::string>(j, "name", "", "scenario");

  if (!j.contains("links")) throw ScenarioError("links", "missing required key");
  const auto& links = j["links"];
  if (!links.is_array() || links.empty()) throw ScenarioError("links", "expected a non-empty array");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto w = "links[" + std::to_string(i) + "]";
    check_keys(links[i], w, {"id", "capacity"});
    try {
      s.topology.add_link(get<std::string>(links[i], "id", w), get<double>(links[i], "capacity", w));
    } catch (const std::domain_error& e) {
      throw ScenarioError(w, e.what());
    }
  }

  if (!j.contains("routes") || !j["routes"].is_array()) throw ScenarioError("routes", "expected an array");
  for (std::size_t i = 0; i < j["routes"].size(); ++i) {
    const auto& r = j["routes"][i];
    const auto w = "routes[" + std::to_string(i) + "]";
    check_keys(r, w, {"id", "links"});
    try {
      s.topology.add_route(get<std::string>(r, "id", w), get<std::vector<std::string>>(r, "links", w));
    } catch (const std::domain_error& e) {
      throw ScenarioError(w, e.what());
    }
  }

  if (!j.contains("clusters") || !j["clusters"].is_array()) throw ScenarioError("clusters", "expected an array");
  for (std::size_t i = 0; i < j["clusters"].size(); ++i) {
    const auto& c = j["clusters"][i];
    const auto w = "clusters[" + std::to_string(i) + "]";
    check_keys(c, w, {"label", "route", "bid_price", "budget", "x_star", "x_max", "tolerance", "count", "beta", "sigma_w", "discharge_threshold"});
    ClusterSpec cs;
    cs.label = get<std::string>(c, "label", w);
    cs.route = get<std::string>(c, "route", w);
    cs.x_star = get<double>(c, "x_star", w);
    if (c.contains("bid_price") == c.contains("budget")) throw ScenarioError(w, "give exactly one of bid_price or budget");
    cs.budget = c.contains("budget") ? get<double>(c, "budget", w) : get<double>(c, "bid_price", w) * cs.x_star;
    cs.x_max = get_or<double>(c, "x_max", w, 2.0 * cs.x_star);
    cs.tolerance = get_or<double>(c, "tolerance", w, 1.0);
    cs.count = get<int>(c, "count", w);
    cs.beta = get_or<double>(c, "beta", w, 1.0);
    cs.sigma_w = get_or<double>(c, "sigma_w", w, 0.0);
    cs.discharge_threshold = get_or<double>(c, "discharge_threshold", w, 0.0);
    s.clusters.push_back(cs);
  }

  if (j.contains("pricing")) {
    const auto& p = j["pricing"];
    check_keys(p, "pricing", {"strategy", "lambda_min", "price_set", "fixed_price", "grid", "dwell", "step", "tol", "max_iters", "fidelity"});
    s.pricing.strategy = strategy_from_string(get_or<std::string>(p, "strategy", "pricing", "micc"));
    s.pricing.lambda_min = get_or<double>(p, "lambda_min", "pricing", 0.0);
    s.pricing.price_set = get_or<std::vector<double>>(p, "price_set", "pricing", {});
    s.pricing.fixed_price = get_or<double>(p, "fixed_price", "pricing", 0.0);
    s.pricing.grid = get_or<std::vector<double>>(p, "grid", "pricing", {});
    s.pricing.dwell = get_or<std::size_t>(p, "dwell", "pricing", 5);
    s.pricing.tol = get_or<double>(p, "tol", "pricing", 1e-4);
    s.pricing.max_iters = get_or<std::size_t>(p, "max_iters", "pricing", 10'000);
    if (p.contains("step")) {
      const auto& st = p["step"];
      check_keys(st, "pricing.step", {"kind", "sigma0"});
      const auto kind = get_or<std::string>(st, "kind", "pricing.step", "constant");
      if (kind != "constant" && kind != "diminishing") throw ScenarioError("pricing.step.kind", "expected constant or diminishing");
      s.pricing.step.kind = kind == "constant" ? StepPolicy::Kind::Constant : StepPolicy::Kind::Diminishing;
      s.pricing.step.sigma0 = get_or<double>(st, "sigma0", "pricing.step", 0.01);
    }
    const auto fid = get_or<std::string>(p, "fidelity", "pricing", "normalized");
    if (fid != "normalized" && fid != "literal") throw ScenarioError("pricing.fidelity", "expected normalized or literal");
    s.pricing.fidelity = fid == "literal" ? Fidelity::Literal : Fidelity::Normalized;
  }

  if (j.contains("horizon")) {
    check_keys(j["horizon"], "horizon", {"max_ticks"});
    s.horizon = get<std::size_t>(j["horizon"], "max_ticks", "horizon");
  }

  if (j.contains("utility")) {
    const auto& u = j["utility"];
    check_keys(u, "utility", {"variant", "theta", "center", "a", "b", "valuation_scale", "budget_cap"});
    const auto v = get_or<std::string>(u, "variant", "utility", "centered");
    if (v != "centered" && v != "literal") throw ScenarioError("utility.variant", "expected centered or literal");
    s.utility.variant = v == "literal" ? SigmoidVariant::UnshiftedSigmoid : SigmoidVariant::CenteredSigmoid;
    s.utility.theta = get_or<double>(u, "theta", "utility", 2.0);
    if (u.contains("center")) s.utility.center = get<double>(u, "center", "utility");
    s.utility.a = get_or<double>(u, "a", "utility", 1.0);
    s.utility.b = get_or<double>(u, "b", "utility", 1.0);
    s.utility.valuation_scale = get_or<double>(u, "valuation_scale", "utility", 1.0);
    s.utility.budget_cap = get_or<bool>(u, "budget_cap", "utility", true);
  }

  if (j.contains("selfreg")) {
    const auto& r = j["selfreg"];
    check_keys(r, "selfreg", {"qos_slack", "weighted_clock", "discharge_when_bid_exceeded", "discharge_when_priced_out"});
    s.selfreg.qos_slack = get_or<double>(r, "qos_slack", "selfreg", 0.0);
    if (!(s.selfreg.qos_slack >= 0.0 && s.selfreg.qos_slack < 1.0)) throw ScenarioError("selfreg.qos_slack", "must lie in [0,1)");
    s.selfreg.weighted_clock = get_or<bool>(r, "weighted_clock", "selfreg", false);
    s.selfreg.discharge_when_bid_exceeded = get_or<bool>(r, "discharge_when_bid_exceeded", "selfreg", false);
    s.selfreg.discharge_when_priced_out = get_or<bool>(r, "discharge_when_priced_out", "selfreg", true);
  }

  if (j.contains("arrivals")) {
    const auto& a = j["arrivals"];
    if (!a.is_array()) throw ScenarioError("arrivals", "expected an array");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto w = "arrivals[" + std::to_string(i) + "]";
      check_keys(a[i], w, {"tick", "cluster", "count"});
      s.arrivals.push_back({get<std::size_t>(a[i], "tick", w), get<std::string>(a[i], "cluster", w), get<int>(a[i], "count", w)});
    }
  }

  if (j.contains("calibration")) {
    const auto& c = j["calibration"];
    check_keys(c, "calibration", {"targets", "holdout", "theta_range", "fit_valuation_scale", "scale_range", "max_rel_error", "holdout_max_rel_error"});
    if (c.contains("targets")) s.calibration.targets = detail::parse_targets(c["targets"], "calibration.targets");
    if (c.contains("holdout")) s.calibration.holdout = detail::parse_targets(c["holdout"], "calibration.holdout");
    std::tie(s.calibration.theta_lo, s.calibration.theta_hi) = detail::parse_range(c, "theta_range", "calibration", {0.1, 20.0});
    std::tie(s.calibration.scale_lo, s.calibration.scale_hi) = detail::parse_range(c, "scale_range", "calibration", {1.0, 20.0});
    s.calibration.fit_valuation_scale = get_or<bool>(c, "fit_valuation_scale", "calibration", false);
    s.calibration.max_rel_error = get_or<double>(c, "max_rel_error", "calibration", 0.05);
    s.calibration.holdout_max_rel_error = get_or<double>(c, "holdout_max_rel_error", "calibration", 0.10);
  }

  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, "cannot open scenario file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into a line number.
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ScenarioError(path + ":" + std::to_string(line), e.what());
  }
  return scenario_from_json(j);
}

/// Five clusters of five users on the AB-BC-CD-DE chain, every link at
/// capacity 40, bids 2..10 with x_star 2.5.
inline Scenario build_five_cluster_scenario() {
  Scenario s;
  s.name = "five_clusters";
  for (const char* l : {"AB", "BC", "CD", "DE"}) s.topology.add_link(l, 40.0);
  s.topology.add_route("AB", {"AB"});
  s.topology.add_route("ABCD", {"AB", "BC", "CD"});
  s.topology.add_route("ABCDE", {"AB", "BC", "CD", "DE"});

  const double bids[] = {2, 4, 6, 8, 10};
  const double tolerance[] = {5, 3.9, 2.5, 1.7, 0.9};
  const char* routes[] = {"AB", "AB", "ABCDE", "ABCD", "ABCDE"};
  for (int i = 0; i < 5; ++i) {
    ClusterSpec c;
    c.label = "c" + std::to_string(i + 1);
    c.route = routes[i];
    c.x_star = 2.5;
    c.budget = bids[i] * c.x_star;
    c.x_max = 2.0 * c.x_star;
    c.tolerance = tolerance[i];
    c.beta = 2.0;
    c.sigma_w = 0.0;
    c.discharge_threshold = 0.0;
    c.count = 5;
    s.clusters.push_back(c);
  }

  s.utility.variant = SigmoidVariant::UnshiftedSigmoid;
  s.utility.theta = 1.0;
  s.utility.valuation_scale = 8.0;
  s.utility.budget_cap = false;

  s.pricing.strategy = StrategyKind::Micc;
  s.pricing.lambda_min = 0.0;
  s.pricing.price_set = {2, 4, 6, 8, 10};
  s.pricing.fixed_price = 6.0;
  s.pricing.grid = {2, 4, 6, 8, 10};
  s.pricing.dwell = 5;

  s.selfreg.qos_slack = 0.05;
  s.horizon = 40;

  s.calibration.targets = {{6, "c1", 1.49}, {6, "c2", 2.42}, {6, "c3", 2.89}};
  s.calibration.holdout = {{5, "c1", 1.76}, {5, "c2", 2.64}, {5, "c3", 3.09}};
  s.validate();
  return s;
}

}  // namespace micc
