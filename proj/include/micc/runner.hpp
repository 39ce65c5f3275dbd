#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "micc/experiments.hpp"
#include "micc/micc.hpp"
#include "micc/num_solver.hpp"
#include "micc/scenario.hpp"
#include "micc/selfreg.hpp"

namespace micc {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kScenarioError = 2,
  kNonConvergence = 3,
  kCalibrationFailure = 4,
};

struct ExperimentSpec {
  std::string verb{"run"};  // run, sweep, verify, calibrate, emit-tables
  std::string scenario_path;
  std::optional<std::string> mode;  // strategy for `run`
  std::optional<std::string> price_grid;
  std::optional<std::size_t> dwell;
  std::optional<std::size_t> horizon;
  std::uint64_t seed{1};
  std::string out{"out"};
  std::optional<std::string> fidelity;
  std::optional<std::string> utility;
  std::optional<double> price;
  std::vector<std::string> clusters;  // restrict the population
  std::size_t count{100};             // randomized markets for `verify`
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

inline nlohmann::json tick_report(const TickRecord& t) {
  return {{"tick", t.tick},           {"prices", prices_to_json(t.prices)}, {"total_flow", t.total_flow},
          {"revenue", t.revenue},     {"link_loads", t.link_loads},       {"feasible", t.feasible},
          {"survivors", t.survivors}, {"population", t.population}};
}

inline nlohmann::json allocation_to_json(const Topology& topo, const std::vector<User>& users,
                                         const AllocationReport& r) {
  nlohmann::json us = nlohmann::json::array();
  for (std::size_t i = 0; i < users.size(); ++i) {
    us.push_back({{"id", users[i].id}, {"cluster", users[i].cluster}, {"rate", r.rates[i]}});
  }
  nlohmann::json loads;
  for (std::size_t l = 0; l < topo.link_count(); ++l) loads[topo.links()[l].id] = r.link_loads[l];
  return {{"prices", prices_to_json(r.prices)}, {"users", us},          {"link_loads", loads},
          {"total_flow", r.total_flow},         {"revenue", r.revenue}, {"aggregate_utility", r.aggregate_utility},
          {"survivors", r.survivors},           {"feasible", r.feasible}};
}

inline void apply_overrides(Scenario& sc, const ExperimentSpec& spec) {
  if (spec.utility) {
    if (*spec.utility == "centered") {
      sc.utility.variant = SigmoidVariant::CenteredSigmoid;
    } else if (*spec.utility == "literal") {
      sc.utility.variant = SigmoidVariant::UnshiftedSigmoid;
    } else {
      throw ScenarioError("--utility", "expected centered or literal");
    }
  }
  if (spec.fidelity) {
    if (*spec.fidelity == "normalized") {
      sc.pricing.fidelity = Fidelity::Normalized;
    } else if (*spec.fidelity == "literal") {
      sc.pricing.fidelity = Fidelity::Literal;
    } else {
      throw ScenarioError("--fidelity", "expected normalized or literal");
    }
  }
  if (spec.mode) sc.pricing.strategy = strategy_from_string(*spec.mode);
  if (spec.price) sc.pricing.fixed_price = *spec.price;
  if (spec.dwell) sc.pricing.dwell = *spec.dwell;
  if (spec.horizon) sc.horizon = *spec.horizon;
  if (spec.price_grid) sc.pricing.grid = parse_grid(*spec.price_grid);
  if (!spec.clusters.empty()) {
    std::vector<ClusterSpec> keep;
    for (const auto& label : spec.clusters) keep.push_back(sc.cluster(label));
    sc.clusters = keep;
    std::erase_if(sc.arrivals, [&](const Arrival& a) {
      return std::find(spec.clusters.begin(), spec.clusters.end(), a.cluster) == spec.clusters.end();
    });
  }
  sc.validate();
}

inline int run_simulation(const Scenario& sc, const std::filesystem::path& out) {
  const auto tr = run(sc);
  nlohmann::json rep;
  rep["scenario"] = sc.name;
  rep["strategy"] = to_string(sc.pricing.strategy);
  rep["first_tick"] = tick_report(tr.ticks.front());
  rep["final_tick"] = tick_report(tr.ticks.back());
  if (sc.pricing.strategy == StrategyKind::Micc) {
    if (tr.micc_price) {
      rep["micc"] = {{"result", "price"},
                     {"price", *tr.micc_price},
                     {"iterations", tr.micc_iterations},
                     {"selected_tick", tick_report(tr.ticks[*tr.micc_tick])}};
    } else {
      rep["micc"] = {{"result", "unaffordable"}};
    }
    const auto users = sc.users();
    if (!users.empty()) {
      std::vector<double> cands = sc.pricing.price_set;
      if (cands.empty()) cands = BidSet::of_users(users).prices();
      const auto st = micc_select(sc.topology, users, sc.utility, BidSet(cands), sc.pricing.lambda_min);
      std::ofstream f(out / "micc_candidates.csv", std::ios::binary);
      write_trace_csv(f, sc.topology, st.trace);
      rep["micc_static"] = {{"result", st.affordable ? "price" : "unaffordable"},
                            {"price", st.affordable ? nlohmann::json(st.price) : nlohmann::json(nullptr)},
                            {"iterations", st.iterations},
                            {"case", to_string(st.kase)}};
    }
  }
  write_json(out / "report.json", rep);
  write_json(out / "trace.json", trace_to_json(tr));
  std::ofstream csv(out / "trace.csv", std::ios::binary);
  write_trace_csv(csv, tr);
  return kOk;
}

inline int run_static_subgradient(const Scenario& sc, const std::filesystem::path& out) {
  SubgradientOptions opt;
  opt.step = sc.pricing.step;
  opt.tol = sc.pricing.tol;
  opt.max_iters = sc.pricing.max_iters;
  opt.lambda_min = sc.pricing.lambda_min;
  const auto users = sc.users();
  const auto res = run_subgradient(sc.topology, users, sc.utility, opt);
  nlohmann::json rep;
  rep["scenario"] = sc.name;
  rep["status"] = res.converged() ? "converged" : "non_convergence";
  rep["iterations"] = res.iterations;
  nlohmann::json lam;
  for (std::size_t l = 0; l < sc.topology.link_count(); ++l) {
    lam[sc.topology.links()[l].id] = res.lambda(l);
    std::ofstream f(out / ("history_" + sc.topology.links()[l].id + ".csv"), std::ios::binary);
    write_history_csv(f, res.links[l].history);
  }
  rep["lambda"] = lam;
  rep["allocation"] = allocation_to_json(sc.topology, users, res.report);
  write_json(out / "report.json", rep);
  return res.converged() ? kOk : kNonConvergence;
}

}  // namespace detail

/// Executes one CLI verb and writes its outputs under `spec.out`.
inline int run_experiment(const ExperimentSpec& spec, std::ostream& log) {
  Scenario sc;
  try {
    sc = load_scenario(spec.scenario_path);
    detail::apply_overrides(sc, spec);
  } catch (const ScenarioError& e) {
    log << "scenario error: " << e.what() << '\n';
    return kScenarioError;
  } catch (const std::exception& e) {
    log << "scenario error: " << e.what() << '\n';
    return kScenarioError;
  }

  const std::filesystem::path out(spec.out);
  std::filesystem::create_directories(out);

  if (spec.verb == "run") {
    if (sc.pricing.strategy == StrategyKind::Subgradient && !spec.horizon) {
      const int rc = detail::run_static_subgradient(sc, out);
      if (rc == kNonConvergence) log << "subgradient did not converge within " << sc.pricing.max_iters << " iterations\n";
      return rc;
    }
    return detail::run_simulation(sc, out);
  }

  if (spec.verb == "sweep") {
    if (sc.pricing.grid.empty()) sc.pricing.grid = sc.pricing.price_set;
    if (sc.pricing.grid.empty()) {
      log << "scenario error: sweep needs --price-grid or pricing.grid\n";
      return kScenarioError;
    }
    const auto rows = progressive_sweep(sc, sc.pricing.grid, sc.pricing.dwell);
    std::vector<std::string> labels;
    for (const auto& c : sc.clusters) labels.push_back(c.label);
    std::ofstream f(out / "sweep.csv", std::ios::binary);
    write_sweep_csv(f, rows, labels);
    return kOk;
  }

  if (spec.verb == "verify") {
    SubgradientOptions opt;
    opt.step = sc.pricing.step;
    opt.tol = sc.pricing.tol;
    opt.max_iters = sc.pricing.max_iters;
    const auto s = bound_sweep(spec.count, spec.seed, sc.utility, opt);
    nlohmann::json j = {{"seed", spec.seed},       {"scenarios", s.scenarios}, {"converged", s.converged},
                        {"holds", s.holds},        {"violated", s.violated},   {"inconclusive", s.inconclusive},
                        {"unaffordable_skipped", s.unaffordable}};
    if (s.converged > 0) j["max_excess"] = s.max_excess;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : s.records) {
      recs.push_back({{"status", to_string(r.status)},
                      {"selected", r.selected_price},
                      {"optimal", r.optimal_price},
                      {"gap", r.gap},
                      {"iterations", r.iterations},
                      {"telescoping", r.telescoping_holds}});
    }
    j["records"] = recs;
    detail::write_json(out / "verify.json", j);
    log << "bound check: " << s.holds << " hold, " << s.violated << " violated, " << s.inconclusive
        << " inconclusive of " << s.scenarios << '\n';
    return s.violated == 0 ? kOk : kFailure;
  }

  if (spec.verb == "calibrate") {
    if (sc.calibration.targets.empty()) {
      log << "scenario error: no calibration targets\n";
      return kScenarioError;
    }
    const auto res = calibrate(sc);
    detail::write_json(out / "calibration.json", calibration_to_json(res));
    log << "theta " << res.params.theta << " max relative error " << res.error << " (held out " << res.holdout_error
        << ")\n";
    return res.ok ? kOk : kCalibrationFailure;
  }

  if (spec.verb == "emit-tables") {
    auto rows = reference_rows();
    try {
      reproduce_reference_rows(sc, rows);
    } catch (const std::exception& e) {
      log << "scenario error: cannot reproduce reference rows: " << e.what() << '\n';
      return kScenarioError;
    }
    std::ofstream f(out / "tables.csv", std::ios::binary);
    emit_reference_tables(f, rows);
    return kOk;
  }

  log << "unknown verb " << spec.verb << '\n';
  return kScenarioError;
}

}  // namespace micc
