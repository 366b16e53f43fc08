#ifndef MECO_HARNESS_HPP
#define MECO_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "meco/channel.hpp"
#include "meco/closed_form.hpp"
#include "meco/delay.hpp"
#include "meco/io.hpp"
#include "meco/oracle.hpp"
#include "meco/scenario.hpp"
#include "meco/subgradient.hpp"

namespace meco::harness {

inline const std::vector<Model>& all_models() {
  static const std::vector<Model> m{Model::local, Model::edge, Model::partial, Model::partial_special};
  return m;
}

/// Parses a --solver value; "all" expands to the four models.
inline std::vector<Model> parse_models(const std::string& name) {
  if (name == "all") return all_models();
  for (Model m : all_models())
    if (name == to_string(m)) return {m};
  throw ValidationError("unknown solver \"" + name + "\" (expected local, edge, partial, partial-special or all)");
}

struct ModelResult {
  Model model = Model::partial;
  Allocation allocation;
  SystemDelay delay;                    ///< pipelined delay of the allocation; zero-share special-case devices count at L/Vd
  std::optional<SolverReport> report;  ///< iterative solvers only
};

/// Runs one model on a scenario that already has rates.
inline ModelResult run_model(const Scenario& s, Model model, const SolverConfig& config = {}) {
  ModelResult r;
  r.model = model;
  switch (model) {
    case Model::local: r.allocation = solve_local(s).allocation; break;
    case Model::edge: r.allocation = solve_edge(s).allocation; break;
    case Model::partial: {
      auto sol = solve_partial(s, config);
      r.allocation = std::move(sol.allocation);
      r.report = std::move(sol.report);
      break;
    }
    case Model::partial_special: {
      auto sol = solve_partial_special(s);
      r.allocation = std::move(sol.allocation);
      r.report = std::move(sol.report);
      break;
    }
  }
  r.delay = model == Model::partial_special ? evaluate_special(s, r.allocation) : evaluate(s, r.allocation);
  return r;
}

/// Fills in rates derived from distances where a device lacks one.
inline Scenario with_rates(const Scenario& s) { return s.has_rates() ? s : channel::attach_expected_rates(s); }

struct SingleResult {
  std::string scenario_hash;
  std::vector<ModelResult> models;
};

inline SingleResult run_models(const Scenario& scenario, const std::vector<Model>& models,
                               const SolverConfig& config = {}) {
  SingleResult out;
  const Scenario s = with_rates(scenario);
  out.scenario_hash = io::scenario_hash(s);
  for (Model m : models) out.models.push_back(run_model(s, m, config));
  return out;
}

inline std::string format_double(double v, int digits = 12) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline io::json to_json(const ModelResult& r) {
  io::json devices = io::json::array();
  for (std::size_t k = 0; k < r.allocation.size(); ++k) {
    const auto& b = r.delay.devices[k];
    devices.push_back({{"t", r.allocation.t[k]},
                       {"vc_mbps", units::to_mbps(r.allocation.vc[k])},
                       {"lambda", r.allocation.lambda[k]},
                       {"comp_d_s", b.comp_d},
                       {"tran_d_s", b.tran_d},
                       {"tran_c_s", b.tran_c},
                       {"comp_c_s", b.comp_c},
                       {"delay_s", format_double(b.total.value_or_inf())},
                       {"branch", std::string(to_string(b.branch))}});
  }
  io::json j = {{"model", std::string(to_string(r.model))},
                {"system_delay_s", format_double(r.delay.total.value_or_inf())},
                {"devices", std::move(devices)}};
  if (r.report) {
    j["report"] = {{"step_rule", r.report->step_rule},
                   {"iterations", r.report->iterations},
                   {"termination", std::string(to_string(r.report->termination))},
                   {"best_objective_s", r.report->best_objective}};
  }
  return j;
}

inline io::json to_json(const SingleResult& r) {
  io::json models = io::json::array();
  for (const auto& m : r.models) models.push_back(to_json(m));
  return {{"scenario_hash", r.scenario_hash}, {"models", std::move(models)}};
}

/// Human-readable table of one result.
inline void print_result(std::ostream& os, const SingleResult& r) {
  os << "scenario " << r.scenario_hash << "\n";
  for (const auto& m : r.models) {
    os << "\n[" << to_string(m.model) << "]  D_sys = " << format_double(m.delay.total.value_or_inf(), 9) << " s";
    if (m.report)
      os << "  (" << m.report->step_rule << ", " << m.report->iterations << " iterations, "
         << to_string(m.report->termination) << ")";
    os << "\n  k          t    vc_mbps     lambda    delay_s  branch\n";
    for (std::size_t k = 0; k < m.allocation.size(); ++k) {
      char line[160];
      std::snprintf(line, sizeof line, "%3zu %10.6f %10.4f %10.6f %10.5g  %s\n", k + 1, m.allocation.t[k],
                    units::to_mbps(m.allocation.vc[k]), m.allocation.lambda[k],
                    m.delay.devices[k].total.value_or_inf(), std::string(to_string(m.delay.devices[k].branch)).c_str());
      os << line;
    }
  }
}

/// Loads a scenario file, solves it and, when `out_path` is given, writes the
/// JSON result there. Nothing is written unless every model succeeds.
inline SingleResult run_single(const std::string& scenario_path, const std::vector<Model>& models,
                               const std::optional<SolverConfig>& override_config, std::ostream& os,
                               const std::optional<std::string>& out_path = std::nullopt) {
  const auto file = io::read_scenario_file(scenario_path);
  const Scenario s = io::to_scenario(file);
  const SingleResult r = run_models(s, models, override_config.value_or(file.solver));
  print_result(os, r);
  if (out_path) io::write_text(*out_path, to_json(r).dump(2) + "\n");
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class ExperimentKind { sweep_K, sweep_Vd, sweep_L1, sweep_Vd1 };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::sweep_K: return "sweep_K";
    case ExperimentKind::sweep_Vd: return "sweep_Vd";
    case ExperimentKind::sweep_L1: return "sweep_L1";
    case ExperimentKind::sweep_Vd1: return "sweep_Vd1";
  }
  return "?";
}

inline ExperimentKind parse_experiment(const std::string& name) {
  if (name == "K" || name == "sweep_K") return ExperimentKind::sweep_K;
  if (name == "Vd" || name == "sweep_Vd") return ExperimentKind::sweep_Vd;
  if (name == "L1" || name == "sweep_L1") return ExperimentKind::sweep_L1;
  if (name == "Vd1" || name == "sweep_Vd1") return ExperimentKind::sweep_Vd1;
  throw ValidationError("unknown experiment \"" + name + "\" (expected K, Vd, L1 or Vd1)");
}

/// Points swept by default: K for sweep_K, Mbps for sweep_Vd/Vd1, Mbits for sweep_L1.
inline std::vector<double> default_points(ExperimentKind kind) {
  std::vector<double> p;
  switch (kind) {
    case ExperimentKind::sweep_K:
      for (int k = 5; k <= 50; k += 5) p.push_back(k);
      break;
    case ExperimentKind::sweep_Vd:
      for (int i = 0; i <= 5; ++i) p.push_back(0.75 + 0.25 * i);
      break;
    case ExperimentKind::sweep_L1:
      for (int l = 10; l <= 100; l += 10) p.push_back(l);
      break;
    case ExperimentKind::sweep_Vd1:
      for (int i = 0; i <= 6; ++i) p.push_back(0.5 + 0.25 * i);
      break;
  }
  return p;
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::sweep_K;
  std::vector<double> points;  ///< empty selects default_points(kind)
  std::size_t trials = 50;     ///< random scenarios per point (sweep_K, sweep_Vd)
  std::uint64_t seed = 1;
  std::vector<Model> models = all_models();
  SolverConfig solver;
  std::size_t threads = 1;
  std::size_t devices = 20;  ///< K for sweep_Vd

  void validate() const {
    if (trials == 0) throw ValidationError("trials must be >= 1");
    if (models.empty()) throw ValidationError("at least one model is required");
    if (threads == 0) throw ValidationError("threads must be >= 1");
    if (kind == ExperimentKind::sweep_Vd && devices == 0) throw ValidationError("devices must be >= 1");
    if (kind == ExperimentKind::sweep_K)
      for (double k : points)
        if (!(k >= 1.0) || k != std::floor(k)) throw ValidationError("sweep_K points must be positive integers");
  }
};

struct SweepRow {
  std::string experiment;
  std::size_t devices = 0;
  Model model = Model::partial;
  double point_value = 0.0;
  double mean_delay = 0.0;
  std::uint64_t seed = 0;
  std::string scenario_hash;
};

struct AllocationRow {
  double point_value = 0.0;
  Model model = Model::partial;
  std::size_t device = 0;  ///< 1-based
  double t = 0.0;
  double vc = 0.0;
  double lambda = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<AllocationRow> allocations;  ///< sweep_L1 / sweep_Vd1 only
};

/// Per-trial seed; the same for every K, so that with the device-prefix
/// property of sample_scenario the K-sweep uses nested device sets.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  return CounterRng(seed, 0x5000'0000ULL).at(trial);
}

/// Scenario for one sweep cell, rates attached.
inline Scenario sweep_scenario(const ExperimentSpec& spec, double point, std::size_t trial) {
  switch (spec.kind) {
    case ExperimentKind::sweep_K:
      return channel::attach_expected_rates(
          sample_scenario(static_cast<std::size_t>(point), trial_seed(spec.seed, trial)));
    case ExperimentKind::sweep_Vd: {
      // Scale a standard draw so the mean of Uniform[0.5, 2] Mbps lands on the point.
      const SamplingRanges ranges;
      const double mean = 0.5 * (ranges.local_capacity_lo + ranges.local_capacity_hi);
      const double factor = units::mbps(point) / mean;
      const Scenario base = sample_scenario(spec.devices, trial_seed(spec.seed, trial));
      return channel::attach_expected_rates(
          transform_devices(base, [factor](std::size_t, DeviceProfile& d) { d.local_capacity *= factor; }));
    }
    case ExperimentKind::sweep_L1:
      return channel::attach_expected_rates(base_scenario(units::mbits(point), units::mbps(1.1)));
    case ExperimentKind::sweep_Vd1:
      return channel::attach_expected_rates(base_scenario(units::mbits(100.0), units::mbps(point)));
  }
  throw ValidationError("unknown experiment");
}

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers; the first
/// exception (lowest index) is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::min(threads, n);
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Runs the sweep. Rows are ordered by point then model, whatever the
/// thread count.
inline SweepResult run_sweep(ExperimentSpec spec) {
  if (spec.points.empty()) spec.points = default_points(spec.kind);
  spec.validate();
  const bool deterministic_point = spec.kind == ExperimentKind::sweep_L1 || spec.kind == ExperimentKind::sweep_Vd1;
  const std::size_t trials = deterministic_point ? 1 : spec.trials;
  const std::size_t n_points = spec.points.size();
  const std::size_t n_models = spec.models.size();

  struct Cell {
    std::vector<double> delays;
    std::vector<Allocation> allocations;
    std::string hash;
  };
  std::vector<Cell> cells(n_points * trials);
  detail::parallel_for(cells.size(), spec.threads, [&](std::size_t idx) {
    const std::size_t p = idx / trials, trial = idx % trials;
    const Scenario s = sweep_scenario(spec, spec.points[p], trial);
    Cell& c = cells[idx];
    c.hash = io::scenario_hash(s);
    for (Model m : spec.models) {
      auto r = run_model(s, m, spec.solver);
      c.delays.push_back(r.delay.total.value_or_inf());
      c.allocations.push_back(std::move(r.allocation));
    }
  });

  SweepResult out;
  for (std::size_t p = 0; p < n_points; ++p) {
    // Rows for a multi-trial point carry the hash of the trial hashes.
    std::string joined;
    for (std::size_t tr = 0; tr < trials; ++tr) joined += cells[p * trials + tr].hash;
    const std::string hash = trials == 1 ? cells[p * trials].hash : io::hex64(io::fnv1a(joined));
    for (std::size_t m = 0; m < n_models; ++m) {
      double sum = 0.0;
      for (std::size_t tr = 0; tr < trials; ++tr) sum += cells[p * trials + tr].delays[m];
      SweepRow row;
      row.experiment = std::string(to_string(spec.kind));
      row.devices = cells[p * trials].allocations[m].size();
      row.model = spec.models[m];
      row.point_value = spec.points[p];
      row.mean_delay = sum / static_cast<double>(trials);
      row.seed = spec.seed;
      row.scenario_hash = hash;
      out.rows.push_back(std::move(row));
      if (deterministic_point) {
        const auto& a = cells[p * trials].allocations[m];
        for (std::size_t k = 0; k < a.size(); ++k)
          out.allocations.push_back({spec.points[p], spec.models[m], k + 1, a.t[k], a.vc[k], a.lambda[k]});
      }
    }
  }
  return out;
}

inline std::string to_csv(const std::vector<SweepRow>& rows) {
  std::string csv = "experiment,K,model,point_value,mean_delay_s,seed,scenario_hash\n";
  for (const auto& r : rows) {
    csv += r.experiment + "," + std::to_string(r.devices) + "," + std::string(to_string(r.model)) + "," +
           format_double(r.point_value) + "," + format_double(r.mean_delay) + "," + std::to_string(r.seed) + "," +
           r.scenario_hash + "\n";
  }
  return csv;
}

inline std::string to_csv(const std::vector<AllocationRow>& rows, const std::string& experiment) {
  std::string csv = "experiment,point_value,model,device,t,vc_mbps,lambda\n";
  for (const auto& r : rows) {
    csv += experiment + "," + format_double(r.point_value) + "," + std::string(to_string(r.model)) + "," +
           std::to_string(r.device) + "," + format_double(r.t) + "," + format_double(units::to_mbps(r.vc)) + "," +
           format_double(r.lambda) + "\n";
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Verify

enum class VerifyLevel { fast, full };

inline VerifyLevel parse_level(const std::string& s) {
  if (s == "fast") return VerifyLevel::fast;
  if (s == "full") return VerifyLevel::full;
  throw ValidationError("level must be fast or full");
}

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
};

struct VerifyOptions {
  VerifyLevel level = VerifyLevel::fast;
  std::uint64_t seed = 1;
  std::optional<Scenario> scenario;  ///< extra checks on a user scenario
  bool flip_gradient_sign = false;   ///< negative control: corrupts d/dt in the gradient check
};

namespace detail {

inline CheckResult check_at_most(std::string name, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), measured <= threshold, measured, threshold, std::move(detail)};
}

/// Worst relative error between the analytic sub-gradient and central
/// differences of the objective at random interior points.
inline double gradient_check(const Scenario& s, std::size_t points, std::uint64_t seed, bool flip) {
  const std::size_t n = s.size();
  const double cloud = s.params().cloud_capacity;
  const double beta = s.params().compression_ratio;
  CounterRng rng(seed, streams::diagnostics + 1);
  double worst = 0.0;
  std::size_t done = 0;
  std::vector<double> x(2 * n);
  while (done < points) {
    double st = 0.0, sv = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = rng.uniform(0.05, 1.0);
      x[n + k] = rng.uniform(0.05, 1.0);
      st += x[k];
      sv += x[n + k];
    }
    const double shrink = 0.9;
    bool near_boundary = false;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] *= shrink / st;
      x[n + k] *= shrink * cloud / sv;
      const double b = formulas::boundary(s[k].local_capacity, x[n + k], beta);
      if (std::abs(x[k] * s[k].rate() - b) <= 1e-4 * b) near_boundary = true;
    }
    if (near_boundary) continue;
    ++done;
    const auto g = ::meco::detail::subgradient_impl(s, x, flip);
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const double h = 1e-6 * x[i];
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (objective(s, xp) - objective(s, xm)) / (2.0 * h);
      // Errors are measured on the log-scaled gradient x_i dF/dx_i.
      const double scale = std::max(std::abs(g[i]) * x[i], 1e-9 * objective(s, x));
      worst = std::max(worst, std::abs(fd - g[i]) * x[i] / scale);
    }
  }
  return worst;
}

}  // namespace detail

/// Runs the invariant suite. `fast` finishes in seconds; `full` adds larger
/// samples and the grid-oracle comparison.
inline VerifyReport verify(const VerifyOptions& opt) {
  VerifyReport rep;
  const bool full = opt.level == VerifyLevel::full;
  const std::size_t scenarios = full ? 20 : 5;

  // closed forms: KKT spreads and both D_sys code paths
  double spread = 0.0, value_gap = 0.0;
  for (std::size_t i = 0; i < scenarios; ++i) {
    const Scenario s = channel::attach_expected_rates(sample_scenario(2 + i % 9, trial_seed(opt.seed, i)));
    const auto loc = solve_local(s);
    const auto edge = solve_edge(s);
    spread = std::max(spread, oracle::kkt_residuals(s, loc.allocation, Model::local).worst());
    spread = std::max(spread, oracle::kkt_residuals(s, edge.allocation, Model::edge).worst());
    value_gap = std::max(value_gap, std::abs(loc.system_delay - loc.system_delay_direct) / loc.system_delay_direct);
    value_gap = std::max(value_gap, std::abs(edge.system_delay - edge.system_delay_direct) / edge.system_delay_direct);
  }
  rep.checks.push_back(detail::check_at_most("closed_form.kkt_spread", spread, 1e-9));
  rep.checks.push_back(detail::check_at_most("closed_form.dsys_paths", value_gap, 1e-12));

  // optimal split vs a lambda grid
  {
    CounterRng rng(opt.seed, streams::diagnostics + 2);
    const std::size_t triples = full ? 200 : 30;
    double worst = 0.0;
    for (std::size_t i = 0; i < triples; ++i) {
      DeviceProfile d;
      d.data_size = units::mbits(rng.uniform(10, 100));
      d.local_capacity = units::mbps(rng.uniform(0.5, 2));
      d.avg_rate = units::mbps(rng.uniform(1, 300));
      const double t = rng.uniform(0.01, 1.0), vc = units::mbps(rng.uniform(0.5, 40));
      const double opt_delay = optimal_partial_delay(d, 0.01, t, vc).delay;
      const auto grid = oracle::oracle_lambda(d, 0.01, t, vc, {1000});
      worst = std::max(worst, (opt_delay - grid.delay) / grid.delay);
    }
    rep.checks.push_back(detail::check_at_most("delay.lambda_vs_grid", worst, 1e-9));
  }

  // convexity of the two pieces
  {
    std::size_t violations = 0;
    const std::size_t devices = full ? 20 : 3;
    for (std::size_t i = 0; i < devices; ++i) {
      const Scenario s = channel::attach_expected_rates(sample_scenario(1, trial_seed(opt.seed, 1000 + i)));
      violations += convexity_diagnostics(s[0], s.params().compression_ratio, s.params().cloud_capacity,
                                          full ? 10'000 : 1'000, opt.seed + i)
                        .violations;
    }
    rep.checks.push_back(detail::check_at_most("subgradient.convexity_violations", static_cast<double>(violations), 0));
  }

  // analytic gradient vs finite differences
  {
    const Scenario s = channel::attach_expected_rates(sample_scenario(4, trial_seed(opt.seed, 2000)));
    const double err = detail::gradient_check(s, full ? 200 : 20, opt.seed, opt.flip_gradient_sign);
    rep.checks.push_back(detail::check_at_most("subgradient.finite_difference", err, 1e-5));
    if (opt.scenario) {
      const Scenario u = with_rates(*opt.scenario);
      rep.checks.push_back(detail::check_at_most("scenario.finite_difference",
                                                 detail::gradient_check(u, 20, opt.seed, opt.flip_gradient_sign),
                                                 1e-5));
    }
  }

  // special case: constraints active, stationarity equalized
  {
    const Scenario base = channel::attach_expected_rates(sample_scenario(10, trial_seed(opt.seed, 3000)));
    const Scenario s = channel::scale_rates(base, 100.0);
    const auto sol = solve_partial_special(s);
    rep.checks.push_back(detail::check_at_most(
        "closed_form.special_kkt", oracle::kkt_residuals(s, sol.allocation, Model::partial_special).worst(), 1e-8));
  }

  if (opt.scenario) {
    const Scenario u = with_rates(*opt.scenario);
    rep.checks.push_back(detail::check_at_most(
        "scenario.local_kkt", oracle::kkt_residuals(u, solve_local(u).allocation, Model::local).worst(), 1e-9));
    rep.checks.push_back(detail::check_at_most(
        "scenario.edge_kkt", oracle::kkt_residuals(u, solve_edge(u).allocation, Model::edge).worst(), 1e-9));
  }

  if (full) {
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const Scenario s = channel::attach_expected_rates(sample_scenario(2, trial_seed(opt.seed, 4000 + i)));
      const double f = solve_partial(s).report.best_objective;
      const double g = oracle::oracle_allocation(s).objective;
      worst = std::max(worst, std::abs(f - g) / g);
    }
    rep.checks.push_back(detail::check_at_most("subgradient.vs_grid_oracle", worst, 1e-3));
  }
  return rep;
}

inline void print_report(std::ostream& os, const VerifyReport& rep) {
  for (const auto& c : rep.checks) {
    char line[200];
    std::snprintf(line, sizeof line, "%-36s %s  measured %.3e  threshold %.1e\n", c.name.c_str(),
                  c.passed ? "PASS" : "FAIL", c.measured, c.threshold);
    os << line;
  }
  os << (rep.passed() ? "verify: all checks passed\n" : "verify: FAILED\n");
}

}  // namespace meco::harness

#endif  // MECO_HARNESS_HPP
