#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "meco/meco.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kSolver = 3 };

struct SolverFlags {
  std::string step_rule;
  double tol = 0.0;
  std::size_t max_iters = 0;

  std::optional<meco::SolverConfig> apply(std::optional<meco::SolverConfig> base) const {
    if (step_rule.empty() && tol == 0.0 && max_iters == 0) return base;
    meco::SolverConfig c = base.value_or(meco::SolverConfig{});
    if (step_rule == "polyak") c.step_rule = meco::StepRule::polyak;
    if (step_rule == "diminishing") c.step_rule = meco::StepRule::diminishing;
    if (tol > 0.0) c.tol = tol;
    if (max_iters > 0) c.max_iters = max_iters;
    return c;
  }
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f) {
  cmd->add_option("--step-rule", f.step_rule, "sub-gradient step rule")
      ->check(CLI::IsMember({"polyak", "diminishing"}));
  cmd->add_option("--tol", f.tol, "sub-gradient convergence tolerance, seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", f.max_iters, "sub-gradient iteration cap")->check(CLI::PositiveNumber);
}

std::string companion_path(const std::string& out) {
  const auto dot = out.rfind(".csv");
  return (dot != std::string::npos && dot + 4 == out.size() ? out.substr(0, dot) : out) + ".alloc.csv";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resource allocation for multi-device video compression offloading"};
  app.require_subcommand(1);

  // solve
  auto* solve = app.add_subcommand("solve", "solve one scenario file");
  std::string scenario_path, solver = "all", solve_out;
  SolverFlags solve_flags;
  solve->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  solve->add_option("--solver", solver, "model to solve")
      ->check(CLI::IsMember({"local", "edge", "partial", "partial-special", "all"}));
  solve->add_option("--out", solve_out, "write the result as JSON");
  add_solver_flags(solve, solve_flags);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a parameter sweep and write CSV");
  std::string experiment = "K", sweep_out, sweep_solver = "all";
  std::uint64_t sweep_seed = 1;
  std::size_t trials = 50, threads = 1;
  SolverFlags sweep_flags;
  sweep->add_option("--experiment", experiment, "K, Vd, L1 or Vd1")->check(CLI::IsMember({"K", "Vd", "L1", "Vd1"}));
  sweep->add_option("--seed", sweep_seed, "base seed");
  sweep->add_option("--trials", trials, "random scenarios per point")->check(CLI::PositiveNumber);
  sweep->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--solver", sweep_solver, "model(s) to run")
      ->check(CLI::IsMember({"local", "edge", "partial", "partial-special", "all"}));
  sweep->add_option("--out", sweep_out, "CSV path (stdout if omitted)");
  add_solver_flags(sweep, sweep_flags);

  // verify
  auto* ver = app.add_subcommand("verify", "run the invariant suite");
  std::string level = "fast", verify_scenario;
  std::uint64_t verify_seed = 1;
  bool inject_fault = false;
  ver->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  ver->add_option("--seed", verify_seed, "seed for the random instances");
  ver->add_option("--scenario", verify_scenario, "also check this scenario file");
  ver->add_flag("--inject-fault", inject_fault)->group("");

  // sample
  auto* sample = app.add_subcommand("sample", "write a random scenario file");
  std::size_t devices = 5;
  std::uint64_t sample_seed = 1;
  std::string sample_out;
  bool with_rates = false;
  sample->add_option("-K,--devices", devices, "number of devices")->check(CLI::PositiveNumber);
  sample->add_option("--seed", sample_seed, "seed");
  sample->add_option("--out", sample_out, "output path (stdout if omitted)");
  sample->add_flag("--with-rates", with_rates, "store average rates instead of only distances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) {
      const auto file = meco::io::read_scenario_file(scenario_path);
      const auto config = solve_flags.apply(file.solver);
      const auto out = solve_out.empty() ? std::nullopt : std::optional<std::string>(solve_out);
      meco::harness::run_single(scenario_path, meco::harness::parse_models(solver), config, std::cout, out);
      return kOk;
    }
    if (*sweep) {
      meco::harness::ExperimentSpec spec;
      spec.kind = meco::harness::parse_experiment(experiment);
      spec.seed = sweep_seed;
      spec.trials = trials;
      spec.threads = threads;
      spec.models = meco::harness::parse_models(sweep_solver);
      spec.solver = sweep_flags.apply(std::nullopt).value_or(meco::SolverConfig{});
      const auto result = meco::harness::run_sweep(spec);
      const std::string csv = meco::harness::to_csv(result.rows);
      if (sweep_out.empty()) {
        std::cout << csv;
      } else {
        meco::io::write_text(sweep_out, csv);
        if (!result.allocations.empty())
          meco::io::write_text(companion_path(sweep_out),
                               meco::harness::to_csv(result.allocations, result.rows.front().experiment));
      }
      return kOk;
    }
    if (*ver) {
      meco::harness::VerifyOptions opt;
      opt.level = meco::harness::parse_level(level);
      opt.seed = verify_seed;
      opt.flip_gradient_sign = inject_fault;
      if (!verify_scenario.empty()) opt.scenario = meco::io::to_scenario(meco::io::read_scenario_file(verify_scenario));
      const auto rep = meco::harness::verify(opt);
      meco::harness::print_report(std::cout, rep);
      return rep.passed() ? kOk : kSolver;
    }
    if (*sample) {
      meco::Scenario s = meco::sample_scenario(devices, sample_seed);
      if (with_rates) s = meco::channel::attach_expected_rates(s);
      const std::string text = meco::io::to_json(s).dump(2) + "\n";
      if (sample_out.empty())
        std::cout << text;
      else
        meco::io::write_text(sample_out, text);
      return kOk;
    }
  } catch (const meco::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const meco::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolver;
  }
  return kUsage;
}
