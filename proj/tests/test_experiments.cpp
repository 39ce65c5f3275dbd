#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "micc/experiments.hpp"
#include "micc/runner.hpp"

using namespace micc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("micc_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string scenario(const std::string& name) { return std::string(MICC_SCENARIO_DIR) + "/" + name; }

}  // namespace

TEST(Calibrate, FiveClusterTargets) {
  const auto res = calibrate(build_five_cluster_scenario());
  EXPECT_TRUE(res.ok);
  EXPECT_LE(res.error, 0.05);
  EXPECT_LE(res.holdout_error, 0.10);
  EXPECT_GE(res.params.theta, 0.1);
  EXPECT_LE(res.params.theta, 20.0);
}

TEST(Calibrate, SingleConsistentTargetFitsExactly) {
  auto sc = build_five_cluster_scenario();
  auto p = sc.utility;
  p.theta = 3.0;
  const double x = best_response(6.0, sc.cluster("c3").make_user(0), p);
  sc.calibration.targets = {{6.0, "c3", x}};
  sc.calibration.holdout.clear();
  const auto res = calibrate(sc);
  EXPECT_LT(res.error, 1e-6);
  EXPECT_TRUE(res.ok);
}

TEST(Calibrate, ReportsBestWhenBoundMissed) {
  auto sc = build_five_cluster_scenario();
  sc.calibration.targets = {{6.0, "c1", 4.9}, {6.0, "c2", 0.1}};
  const auto res = calibrate(sc);
  EXPECT_FALSE(res.ok);
  EXPECT_GT(res.error, 0.05);
  EXPECT_EQ(res.rows.size(), 2u);
}

TEST(Calibrate, NoTargetsThrows) {
  auto sc = build_five_cluster_scenario();
  sc.calibration.targets.clear();
  EXPECT_THROW(calibrate(sc), std::domain_error);
}

TEST(ReferenceTables, FlagsOnlyInconsistentRows) {
  const auto rows = reference_rows();
  std::map<std::string, bool> ok;
  for (const auto& r : rows) ok[r.label] = r.consistent();
  EXPECT_TRUE(ok["price_5"]);
  EXPECT_TRUE(ok["price_6"]);
  EXPECT_TRUE(ok["before"]);
  EXPECT_FALSE(ok["after"]);
  EXPECT_FALSE(ok["plus_4_new"]);
  for (const auto& r : rows) {
    if (r.label == "after") {
      EXPECT_FALSE(r.flow_consistent());
      EXPECT_TRUE(r.revenue_consistent());
    }
    if (r.label == "plus_4_new") {
      EXPECT_FALSE(r.flow_consistent());
      EXPECT_FALSE(r.revenue_consistent());
    }
  }
}

TEST(ReferenceTables, EmptyInputGivesHeaderOnly) {
  std::ostringstream os;
  emit_reference_tables(os, {});
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
}

TEST(ReferenceTables, Reproduction) {
  auto rows = reference_rows();
  reproduce_reference_rows(build_five_cluster_scenario(), rows);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.artifact_flow.has_value()) << r.label;
    EXPECT_NEAR(*r.artifact_revenue, r.price * *r.artifact_flow, 1e-9);
  }
  EXPECT_NEAR(*rows[0].artifact_flow, 37.45, 0.02 * 37.45);
  EXPECT_NEAR(*rows[1].artifact_flow, 34.0, 0.02 * 34.0);
}

TEST(Sweep, GridParsing) {
  EXPECT_EQ(parse_grid("2:10:2"), (std::vector<double>{2, 4, 6, 8, 10}));
  EXPECT_EQ(parse_grid("1:1:1"), (std::vector<double>{1}));
  EXPECT_THROW(parse_grid("2:10"), std::invalid_argument);
  EXPECT_THROW(parse_grid("2:10:0"), std::invalid_argument);
  EXPECT_THROW(parse_grid("10:2:1"), std::invalid_argument);
}

TEST(Sweep, InteriorRevenueMaximum) {
  const auto rows = progressive_sweep(build_five_cluster_scenario(), {2, 4, 6, 8, 10}, 5);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_GT(rows[3].revenue, rows[2].revenue);
  EXPECT_GT(rows[3].revenue, rows[4].revenue);
}

TEST(BoundSweep, SmallRunHolds) {
  SubgradientOptions opt;
  const auto s = bound_sweep(10, 9, build_five_cluster_scenario().utility, opt);
  EXPECT_EQ(s.scenarios, 10u);
  EXPECT_EQ(s.violated, 0u);
}

TEST(Runner, ExitCodes) {
  ExperimentSpec spec;
  spec.out = scratch("exit").string();
  spec.scenario_path = "/nonexistent.json";
  std::ostringstream log;
  EXPECT_EQ(run_experiment(spec, log), kScenarioError);

  spec.scenario_path = scenario("five_clusters.json");
  spec.verb = "calibrate";
  EXPECT_EQ(run_experiment(spec, log), kOk);
  EXPECT_TRUE(fs::exists(fs::path(spec.out) / "calibration.json"));

  spec.verb = "run";
  spec.mode = "subgradient";
  EXPECT_EQ(run_experiment(spec, log), kOk);

  const auto bad = scratch("bad_cal.json");
  {
    auto j = nlohmann::json::parse(slurp(spec.scenario_path));
    j["calibration"]["targets"] = nlohmann::json::array({{{"price", 6}, {"cluster", "c1"}, {"rate", 4.9}}});
    j["pricing"]["max_iters"] = 2;
    std::ofstream f(bad);
    f << j.dump();
  }
  spec.scenario_path = bad.string();
  spec.verb = "calibrate";
  spec.mode.reset();
  EXPECT_EQ(run_experiment(spec, log), kCalibrationFailure);
  spec.verb = "run";
  spec.mode = "subgradient";
  EXPECT_EQ(run_experiment(spec, log), kNonConvergence);
  fs::remove(bad);
}

TEST(Runner, FixedPriceOnThreeClusters) {
  ExperimentSpec spec;
  spec.scenario_path = scenario("five_clusters.json");
  spec.out = scratch("fixed5").string();
  spec.mode = "fixed";
  spec.price = 5.0;
  spec.clusters = {"c1", "c2", "c3"};
  std::ostringstream log;
  ASSERT_EQ(run_experiment(spec, log), kOk);
  const auto rep = nlohmann::json::parse(slurp(fs::path(spec.out) / "report.json"));
  EXPECT_NEAR(rep["first_tick"]["total_flow"].get<double>(), 37.45, 0.02 * 37.45);
  EXPECT_NEAR(rep["first_tick"]["revenue"].get<double>(), 5.0 * rep["first_tick"]["total_flow"].get<double>(), 1e-9);
}

TEST(Runner, MiccReport) {
  ExperimentSpec spec;
  spec.scenario_path = scenario("five_clusters.json");
  spec.out = scratch("micc").string();
  spec.mode = "micc";
  std::ostringstream log;
  ASSERT_EQ(run_experiment(spec, log), kOk);
  const auto rep = nlohmann::json::parse(slurp(fs::path(spec.out) / "report.json"));
  EXPECT_EQ(rep["micc"]["price"].get<double>(), 6.0);
  EXPECT_EQ(rep["micc"]["iterations"].get<int>(), 3);
  EXPECT_TRUE(fs::exists(fs::path(spec.out) / "micc_candidates.csv"));
  EXPECT_TRUE(fs::exists(fs::path(spec.out) / "trace.csv"));
}

TEST(Runner, ByteIdenticalOutputs) {
  for (const char* verb : {"run", "sweep", "verify", "emit-tables"}) {
    ExperimentSpec spec;
    spec.verb = verb;
    spec.scenario_path = scenario("release_refill.json");
    spec.seed = 77;
    spec.count = 5;
    std::ostringstream log;
    const auto a = scratch(std::string("a_") + verb);
    const auto b = scratch(std::string("b_") + verb);
    spec.out = a.string();
    ASSERT_EQ(run_experiment(spec, log), kOk) << verb << log.str();
    spec.out = b.string();
    ASSERT_EQ(run_experiment(spec, log), kOk) << verb;
    int files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
      EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
      ++files;
    }
    EXPECT_GT(files, 0) << verb;
  }
}
