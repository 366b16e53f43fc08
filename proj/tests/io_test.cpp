#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "meco/io.hpp"
#include "test_support.hpp"

using namespace meco;
using meco::units::mbps;

namespace {

const char* kMinimal = R"({
  "devices": [
    {"data_size_mbits": 50, "local_capacity_mbps": 1, "avg_rate_mbps": 10},
    {"weight": 3, "data_size_mbits": 20, "local_capacity_mbps": 2, "distance_m": 80}
  ]
})";

std::string error_of(const std::string& text) {
  try {
    io::parse_scenario(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ParseScenario, MinimalDocumentUsesDefaults) {
  const auto f = io::parse_scenario(kMinimal);
  ASSERT_EQ(f.devices.size(), 2u);
  EXPECT_EQ(f.devices[0].weight, 1.0);
  EXPECT_EQ(f.devices[1].weight, 3.0);
  EXPECT_EQ(f.devices[0].data_size, 50e6);
  EXPECT_EQ(*f.devices[0].avg_rate, 10e6);
  EXPECT_FALSE(f.devices[1].avg_rate.has_value());
  EXPECT_EQ(*f.devices[1].distance, 80.0);
  EXPECT_EQ(f.params.cloud_capacity, SystemParams{}.cloud_capacity);
  EXPECT_EQ(f.solver.step_rule, StepRule::polyak);
  const auto s = io::to_scenario(f);
  EXPECT_DOUBLE_EQ(s[1].weight, 0.75);
}

TEST(ParseScenario, ReadsSystemAndSolverBlocks) {
  const auto f = io::parse_scenario(R"({
    "system": {"cloud_capacity_mbps": 80, "compression_ratio": 0.05, "bandwidth_mhz": 5,
               "noise_density_dbm_hz": -170, "tx_power_dbm": 20, "pathloss_exp": 3.5,
               "cell_radius_m": 300, "min_distance_m": 20},
    "devices": [{"data_size_mbits": 5, "local_capacity_mbps": 1, "avg_rate_mbps": 2}],
    "solver": {"step_rule": "diminishing", "step_scale": 0.3, "step_decay": 0.9, "max_iters": 1000,
               "tol": 1e-5, "positivity_floor": 1e-8, "stagnation_window": 50}
  })");
  EXPECT_DOUBLE_EQ(f.params.cloud_capacity, mbps(80));
  EXPECT_DOUBLE_EQ(f.params.compression_ratio, 0.05);
  EXPECT_DOUBLE_EQ(f.params.bandwidth, 5e6);
  EXPECT_NEAR(units::watts_to_dbm(f.params.noise_density), -170, 1e-12);
  EXPECT_NEAR(units::watts_to_dbm(f.params.tx_power), 20, 1e-12);
  EXPECT_EQ(f.params.pathloss_exp, 3.5);
  EXPECT_EQ(f.params.cell_radius, 300);
  EXPECT_EQ(f.params.min_distance, 20);
  EXPECT_EQ(f.solver.step_rule, StepRule::diminishing);
  EXPECT_EQ(f.solver.step_scale, 0.3);
  EXPECT_EQ(f.solver.step_decay, 0.9);
  EXPECT_EQ(f.solver.max_iters, 1000u);
  EXPECT_EQ(f.solver.tol, 1e-5);
  EXPECT_EQ(f.solver.positivity_floor, 1e-8);
  EXPECT_EQ(f.solver.stagnation_window, 50u);
}

TEST(ParseScenario, SyntaxErrorsCarryLineContext) {
  const std::string msg = error_of("{\n  \"devices\": [\n    {\"data_size_mbits\": 50,, }\n  ]\n}");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("data_size_mbits"), std::string::npos) << msg;
}

TEST(ParseScenario, ErrorsNameTheOffendingPath) {
  EXPECT_NE(error_of(R"({"devices": [{"data_size_mbits": 5, "local_capacity_mbps": 1}]})").find("$.devices[0]"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"devices": [{"data_size_mbits": "x", "local_capacity_mbps": 1, "avg_rate_mbps": 1}]})")
                .find("$.devices[0].data_size_mbits"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"devices": [{"data_size_mbits": 5, "local_capacity_mbps": 1, "avg_rate_mbps": 1, "speed": 3}]})")
                .find("unknown key \"speed\""),
            std::string::npos);
  EXPECT_NE(error_of(R"({"devices": [], "colour": 1})").find("$: unknown key"), std::string::npos);
  EXPECT_NE(error_of(R"({"system": {}})").find("$.devices"), std::string::npos);
  EXPECT_NE(error_of(R"([1, 2])").find("JSON object"), std::string::npos);
  EXPECT_NE(error_of(R"({"devices": [], "solver": {"step_rule": "newton"}})").find("step_rule"), std::string::npos);
  EXPECT_NE(error_of(R"({"devices": [], "solver": {"max_iters": -4}})").find("max_iters"), std::string::npos);
}

TEST(ParseScenario, SemanticErrorsComeFromValidation) {
  const auto f = io::parse_scenario(R"({"devices": [{"data_size_mbits": 0, "local_capacity_mbps": 1, "avg_rate_mbps": 1}]})");
  try {
    io::to_scenario(f);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("devices[0].data_size"), std::string::npos);
  }
}

TEST(ReadScenarioFile, MissingFileAndPathPrefix) {
  EXPECT_THROW(io::read_scenario_file("/nonexistent/scenario.json"), ValidationError);
  const auto path = (std::filesystem::temp_directory_path() / "meco_io_test_bad.json").string();
  io::write_text(path, "{ nope");
  try {
    io::read_scenario_file(path);
    FAIL();
  } catch (const io::ParseError& e) {
    EXPECT_EQ(std::string(e.what()).rfind(path, 0), 0u);
  }
  std::remove(path.c_str());
}

TEST(ToJson, RoundTripsThroughTheParser) {
  const auto s = channel::attach_expected_rates(sample_scenario(4, 9));
  SolverConfig c;
  c.step_rule = StepRule::diminishing;
  c.tol = 1e-7;
  const auto f = io::parse_scenario(io::to_json(s, c).dump());
  const auto back = io::to_scenario(f);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    EXPECT_DOUBLE_EQ(back[k].weight, s[k].weight);
    EXPECT_DOUBLE_EQ(back[k].data_size, s[k].data_size);
    EXPECT_DOUBLE_EQ(back[k].local_capacity, s[k].local_capacity);
    EXPECT_DOUBLE_EQ(back[k].rate(), s[k].rate());
    EXPECT_DOUBLE_EQ(*back[k].distance, *s[k].distance);
  }
  EXPECT_NEAR(back.params().noise_density, s.params().noise_density, 1e-12 * s.params().noise_density);
  EXPECT_EQ(f.solver.step_rule, StepRule::diminishing);
  EXPECT_EQ(f.solver.tol, 1e-7);
}

TEST(Hashing, KnownVectorsAndSensitivity) {
  EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(io::hex64(0xabcULL), "0000000000000abc");
  const auto a = sample_scenario(5, 1), b = sample_scenario(5, 2);
  EXPECT_EQ(io::scenario_hash(a), io::scenario_hash(sample_scenario(5, 1)));
  EXPECT_NE(io::scenario_hash(a), io::scenario_hash(b));
  EXPECT_EQ(io::scenario_hash(a).size(), 16u);
}

TEST(WriteText, FailsOnUnwritablePath) {
  EXPECT_THROW(io::write_text("/nonexistent/dir/out.txt", "x"), ValidationError);
}
