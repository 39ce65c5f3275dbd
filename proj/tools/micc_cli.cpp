#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "micc/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Congestion pricing simulator with market-informed price search"};
  app.require_subcommand(1);

  micc::ExperimentSpec spec;
  std::string mode;
  std::string grid;
  std::string fidelity;
  std::string utility;
  std::size_t dwell = 0;
  std::size_t horizon = 0;
  double price = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", spec.scenario_path, "scenario JSON file")->required();
    sub->add_option("--out", spec.out, "output directory");
    sub->add_option("--seed", spec.seed, "seed for randomized sweeps");
    sub->add_option("--utility", utility, "sigmoid variant")->check(CLI::IsMember({"centered", "literal"}));
    sub->add_option("--fidelity", fidelity, "bid distribution formula")->check(CLI::IsMember({"normalized", "literal"}));
    sub->add_option("--clusters", spec.clusters, "restrict the population to these clusters")->delimiter(',');
    sub->add_option("--horizon", horizon, "ticks to simulate");
    sub->add_option("--dwell", dwell, "ticks per price level");
    sub->add_option("--price-grid", grid, "price grid a:b:step");
  };

  auto* run = app.add_subcommand("run", "simulate one pricing strategy");
  add_common(run);
  run->add_option("--mode", mode, "pricing strategy")
      ->check(CLI::IsMember({"micc", "micc_multilink", "subgradient", "fixed", "progressive"}));
  run->add_option("--price", price, "price for --mode fixed");

  auto* sweep = app.add_subcommand("sweep", "progressive price sweep, one row per level");
  add_common(sweep);
  auto* verify = app.add_subcommand("verify", "randomized check that the subgradient optimum stays below the MICC price");
  add_common(verify);
  verify->add_option("--count", spec.count, "number of affordable random markets");
  auto* cal = app.add_subcommand("calibrate", "fit the sigmoid steepness to target rates");
  add_common(cal);
  auto* tables = app.add_subcommand("emit-tables", "reference tables with consistency flags");
  add_common(tables);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : micc::kScenarioError;
  }

  spec.verb = app.get_subcommands().front()->get_name();
  if (!mode.empty()) spec.mode = mode;
  if (!grid.empty()) spec.price_grid = grid;
  if (!fidelity.empty()) spec.fidelity = fidelity;
  if (!utility.empty()) spec.utility = utility;
  if (dwell > 0) spec.dwell = dwell;
  if (horizon > 0) spec.horizon = horizon;
  if (run->count("--price") > 0) spec.price = price;

  try {
    return micc::run_experiment(spec, std::cerr);
  } catch (const micc::ScenarioError& e) {
    std::cerr << "scenario error: " << e.what() << '\n';
    return micc::kScenarioError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return micc::kFailure;
  }
}
