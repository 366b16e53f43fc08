#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "meco/harness.hpp"
#include "test_support.hpp"

using namespace meco;
using namespace meco::harness;

namespace {

const std::string kScenarios = MECO_SCENARIO_DIR;

double delay_of(const SingleResult& r, Model m) {
  for (const auto& x : r.models)
    if (x.model == m) return x.delay.total.value_or_inf();
  return NAN;
}

std::filesystem::path temp_file(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Models, Parsing) {
  EXPECT_EQ(parse_models("all").size(), 4u);
  EXPECT_EQ(parse_models("partial-special"), std::vector<Model>{Model::partial_special});
  EXPECT_EQ(parse_models("edge"), std::vector<Model>{Model::edge});
  EXPECT_THROW(parse_models("fastest"), ValidationError);
}

TEST(Experiments, ParsingAndDefaults) {
  EXPECT_EQ(parse_experiment("K"), ExperimentKind::sweep_K);
  EXPECT_EQ(parse_experiment("sweep_Vd1"), ExperimentKind::sweep_Vd1);
  EXPECT_THROW(parse_experiment("Q"), ValidationError);
  EXPECT_EQ(default_points(ExperimentKind::sweep_K).size(), 10u);
  EXPECT_EQ(default_points(ExperimentKind::sweep_K).back(), 50.0);
  EXPECT_EQ(default_points(ExperimentKind::sweep_Vd).front(), 0.75);
  EXPECT_EQ(default_points(ExperimentKind::sweep_Vd).back(), 2.0);
  EXPECT_EQ(default_points(ExperimentKind::sweep_L1).size(), 10u);
  EXPECT_EQ(default_points(ExperimentKind::sweep_Vd1).back(), 2.0);
  EXPECT_EQ(parse_level("full"), VerifyLevel::full);
  EXPECT_THROW(parse_level("medium"), ValidationError);
}

TEST(RunSingle, BaseCaseAllModels) {
  std::ostringstream os;
  const auto out = temp_file("meco_harness_base5.json");
  std::filesystem::remove(out);
  const auto r = run_single(kScenarios + "/base5.json", all_models(), std::nullopt, os, out.string());
  ASSERT_EQ(r.models.size(), 4u);
  for (const auto& m : r.models) ASSERT_EQ(m.allocation.size(), 5u);
  const double partial = delay_of(r, Model::partial);
  EXPECT_LE(partial, delay_of(r, Model::local));
  EXPECT_LE(partial, delay_of(r, Model::edge));
  EXPECT_TRUE(std::isfinite(delay_of(r, Model::partial_special)));
  EXPECT_NE(os.str().find("[partial]"), std::string::npos);
  ASSERT_TRUE(std::filesystem::exists(out));
  std::ifstream in(out);
  const auto j = io::json::parse(in);
  EXPECT_EQ(j["scenario_hash"], r.scenario_hash);
  EXPECT_EQ(j["models"].size(), 4u);
  EXPECT_EQ(j["models"][2]["devices"].size(), 5u);
  std::filesystem::remove(out);
}

TEST(RunSingle, OverrideConfigWins) {
  std::ostringstream os;
  SolverConfig c;
  c.step_rule = StepRule::diminishing;
  const auto r = run_single(kScenarios + "/two_devices.json", {Model::partial}, c, os);
  ASSERT_TRUE(r.models[0].report.has_value());
  EXPECT_EQ(r.models[0].report->step_rule, "diminishing");
}

TEST(RunSingle, MalformedFileWritesNothing) {
  const auto bad = temp_file("meco_harness_bad.json");
  const auto out = temp_file("meco_harness_bad_out.json");
  std::filesystem::remove(out);
  io::write_text(bad.string(), "{\"devices\": [ {\"data_size_mbits\": 5 ");
  std::ostringstream os;
  EXPECT_THROW(run_single(bad.string(), all_models(), std::nullopt, os, out.string()), io::ParseError);
  EXPECT_FALSE(std::filesystem::exists(out));
  std::filesystem::remove(bad);
}

TEST(RunModels, DistancesAreTurnedIntoRates) {
  const auto s = sample_scenario(3, 5);
  ASSERT_FALSE(s.has_rates());
  const auto r = run_models(s, {Model::local});
  EXPECT_EQ(r.scenario_hash, io::scenario_hash(channel::attach_expected_rates(s)));
}

TEST(FormatDouble, Infinity) {
  EXPECT_EQ(format_double(INFINITY), "inf");
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Sweep, RowsLayoutAndCsvHeader) {
  ExperimentSpec spec;
  spec.points = {5, 10};
  spec.trials = 2;
  const auto r = run_sweep(spec);
  ASSERT_EQ(r.rows.size(), 8u);
  EXPECT_TRUE(r.allocations.empty());
  EXPECT_EQ(r.rows[0].model, Model::local);
  EXPECT_EQ(r.rows[3].model, Model::partial_special);
  EXPECT_EQ(r.rows[4].devices, 10u);
  EXPECT_EQ(r.rows[0].scenario_hash, r.rows[3].scenario_hash);
  EXPECT_NE(r.rows[0].scenario_hash, r.rows[4].scenario_hash);
  const std::string csv = to_csv(r.rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "experiment,K,model,point_value,mean_delay_s,seed,scenario_hash");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
}

TEST(Sweep, ThreadCountDoesNotChangeOutput) {
  ExperimentSpec spec;
  spec.points = {5, 15};
  spec.trials = 3;
  spec.seed = 4;
  const auto a = to_csv(run_sweep(spec).rows);
  spec.threads = 3;
  EXPECT_EQ(a, to_csv(run_sweep(spec).rows));
}

TEST(Sweep, CommonRandomNumbersAcrossModels) {
  ExperimentSpec spec;
  spec.points = {5};
  spec.trials = 1;
  spec.models = {Model::local};
  const auto a = run_sweep(spec);
  spec.models = {Model::edge, Model::partial};
  const auto b = run_sweep(spec);
  EXPECT_EQ(a.rows[0].scenario_hash, b.rows[0].scenario_hash);
  EXPECT_EQ(a.rows[0].scenario_hash, io::scenario_hash(sweep_scenario(spec, 5, 0)));
}

TEST(Sweep, SingleTrialRowReproducesFromTheCli) {
  ExperimentSpec spec;
  spec.points = {5};
  spec.trials = 1;
  spec.seed = 9;
  spec.models = {Model::edge};
  const auto r = run_sweep(spec);
  const Scenario s = sweep_scenario(spec, 5, 0);
  EXPECT_DOUBLE_EQ(r.rows[0].mean_delay, solve_edge(s).system_delay_direct);
}

TEST(Sweep, LocalCapacitySweepScalesTheMean) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::sweep_Vd;
  spec.devices = 200;
  const Scenario s = sweep_scenario(spec, 2.0, 0);
  double mean = 0.0;
  for (const auto& d : s.devices()) mean += d.local_capacity;
  mean /= static_cast<double>(s.size());
  EXPECT_NEAR(mean, units::mbps(2.0), units::mbps(0.15));
}

TEST(Sweep, DeviceOneSweepEmitsAllocations) {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::sweep_L1;
  spec.points = {20, 60};
  spec.models = {Model::partial};
  const auto r = run_sweep(spec);
  ASSERT_EQ(r.rows.size(), 2u);
  ASSERT_EQ(r.allocations.size(), 10u);
  EXPECT_EQ(r.allocations[0].device, 1u);
  EXPECT_LT(r.allocations[0].t, r.allocations[5].t);
  const std::string csv = to_csv(r.allocations, "sweep_L1");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "experiment,point_value,model,device,t,vc_mbps,lambda");
}

TEST(Sweep, SpecValidation) {
  ExperimentSpec spec;
  spec.trials = 0;
  EXPECT_THROW(run_sweep(spec), ValidationError);
  spec = {};
  spec.points = {2.5};
  EXPECT_THROW(run_sweep(spec), ValidationError);
  spec = {};
  spec.models.clear();
  EXPECT_THROW(run_sweep(spec), ValidationError);
}

TEST(ParallelFor, RethrowsTheLowestIndexFailure) {
  try {
    harness::detail::parallel_for(10, 4, [](std::size_t i) {
      if (i == 3 || i == 7) throw SolverError("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const SolverError& e) {
    EXPECT_EQ(std::string(e.what()), "fail 3");
  }
}

TEST(Verify, FastLevelPasses) {
  VerifyOptions opt;
  const auto rep = verify(opt);
  EXPECT_TRUE(rep.passed());
  EXPECT_GE(rep.checks.size(), 6u);
  std::ostringstream os;
  print_report(os, rep);
  EXPECT_NE(os.str().find("all checks passed"), std::string::npos);
}

TEST(Verify, ScenarioChecksAreAdded) {
  VerifyOptions opt;
  opt.scenario = io::to_scenario(io::read_scenario_file(kScenarios + "/base5.json"));
  const auto rep = verify(opt);
  EXPECT_TRUE(rep.passed());
  const bool has = std::any_of(rep.checks.begin(), rep.checks.end(),
                               [](const CheckResult& c) { return c.name == "scenario.local_kkt"; });
  EXPECT_TRUE(has);
}

TEST(Verify, FullLevelIncludesTheGridOracle) {
  VerifyOptions opt;
  opt.level = VerifyLevel::full;
  const auto rep = verify(opt);
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.checks.back().name, "subgradient.vs_grid_oracle");
}

TEST(Verify, FlippedDerivativeIsCaught) {
  VerifyOptions opt;
  opt.flip_gradient_sign = true;
  const auto rep = verify(opt);
  EXPECT_FALSE(rep.passed());
  for (const auto& c : rep.checks)
    if (c.name == "subgradient.finite_difference") EXPECT_FALSE(c.passed);
}
