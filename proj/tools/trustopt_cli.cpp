#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trustopt/bounds.hpp"
#include "trustopt/csv.hpp"
#include "trustopt/harness.hpp"

namespace fs = std::filesystem;
using namespace trustopt;

namespace {

std::vector<Algorithm> parse_algorithms(const std::string& list) {
  std::vector<Algorithm> out;
  for (const auto& name : split(list, ',')) out.push_back(parse_algorithm(std::string(trim(name))));
  return out;
}

void print_summary(const ExperimentResult& result) {
  for (const auto& s : result.stats) {
    const std::size_t last = s.times.size() - 1;
    std::printf("%-9s  t=%-6ld  mean_err=%.6g  ratio=%.6g  mean_sq=%.6g  residual_violations=%ld\n",
                to_string(s.algorithm).c_str(), s.times[last], s.mean_err[last], s.mean_ratio[last],
                s.mean_sq[last], s.residual_violations);
  }
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir, const std::string& algorithms,
                 std::optional<int> realizations, bool plot) {
  ExperimentConfig config = read_experiment_config(config_path);
  if (seed) config.run.seed = *seed;
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (!algorithms.empty()) config.algorithms = parse_algorithms(algorithms);
  if (realizations) config.realizations = *realizations;

  const ExperimentResult result = run_experiment(config);
  fs::create_directories(config.output_dir);
  const auto rows = result_rows(result);
  export_csv(rows, config.output_dir / "results.csv");
  if (plot) {
    std::ofstream gp(config.output_dir / "results.gp");
    write_gnuplot_script(gp, "results.csv", config.algorithms);
  }
  print_summary(result);
  long violations = 0;
  for (const auto& s : result.stats) violations += s.residual_violations;
  std::printf("wrote %s\n", (config.output_dir / "results.csv").string().c_str());
  return violations == 0 ? 0 : 1;
}

int cmd_bounds(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig config = read_experiment_config(config_path);
  if (!out_dir.empty()) config.output_dir = out_dir;
  const BoundParams p = derive_bound_params(config);
  const auto grid = sample_grid(config);
  const auto curves = standard_curves(p, grid);
  fs::create_directories(config.output_dir);
  const fs::path path = config.output_dir / "bounds.csv";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_bound_csv(out, curves);
  std::printf("mu=%.6g L=%.6g G=%.6g eta=%.6g rho_L=%.6g D_L=%ld D_M=%ld T0=%ld C_M=%.6g\n", p.mu,
              p.L, p.G, p.eta, p.rho, p.D_L, p.D_M, p.T0, C_M(p.T0, p));
  std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

bool report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s  %s  %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  return ok;
}

int cmd_check(const std::string& config_path, std::optional<int> realizations) {
  ExperimentConfig config = read_experiment_config(config_path);
  if (realizations) config.realizations = *realizations;
  bool ok = true;

  SimulationConfig traced = config.run;
  traced.algorithm = Algorithm::resilient;
  TraceOptions options;
  options.record_weights = true;
  options.record_snapshots = true;
  options.strict = false;
  const SimulationTrace trace = run_simulation(traced, options);
  const TraceInvariantReport inv = check_trace_invariants(traced, trace);
  std::string detail = std::to_string(inv.rounds_checked) + " rounds";
  for (const auto& f : inv.failures) detail += "; " + f;
  ok &= report("trace-invariants", inv.ok(), detail);

  const ExperimentResult result = run_experiment(config);
  const bool theorem = config.run.schedule.kind() == StepSchedule::Kind::theorem;
  for (const auto& s : result.stats) {
    const std::string tag = to_string(s.algorithm);
    if (s.algorithm == Algorithm::resilient)
      ok &= report(tag + " residual-bound", s.residual_violations == 0,
                   "max ratio " + format_double(s.max_residual_ratio));
    if (!theorem || result.curves.empty()) continue;
    for (const auto& curve : result.curves) {
      const bool applies = s.algorithm == Algorithm::nominal ? curve.name == "thm1"
                           : s.algorithm == Algorithm::resilient ? curve.name != "thm1"
                                                                 : false;
      if (!applies) continue;
      const BoundComparison cmp = compare_to_bounds(s, curve);
      ok &= report(tag + " " + cmp.name, cmp.violations.empty(),
                   std::to_string(cmp.checked) + " times, worst margin " +
                       format_double(cmp.worst_margin));
    }
    if (s.algorithm == Algorithm::resilient) {
      const BoundComparison cmp = compare_to_delta_M(s, result.params);
      ok &= report(tag + " delta_M", cmp.violations.empty(),
                   std::to_string(cmp.checked) + " times, worst margin " +
                       format_double(cmp.worst_margin));
    }
  }
  print_summary(result);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-aware resilient distributed optimization simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, algorithms;
  std::optional<std::uint64_t> seed;
  std::optional<int> realizations;
  bool plot = false;

  auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo experiment and write results.csv");
  simulate->add_option("--config", config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "Master seed");
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_option("--algorithms", algorithms, "Comma list of resilient,nominal,wmsr");
  simulate->add_option("--realizations", realizations, "Number of realizations")->check(CLI::PositiveNumber);
  simulate->add_flag("--plot", plot, "Also write a gnuplot script");

  auto* bounds = app.add_subcommand("bounds", "Evaluate the bound curves and write bounds.csv");
  bounds->add_option("--config", config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
  bounds->add_option("--out", out_dir, "Output directory");

  auto* check = app.add_subcommand("check", "Run the invariant and bound-domination suite");
  check->add_option("--config", config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
  check->add_option("--realizations", realizations, "Number of realizations")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(config_path, seed, out_dir, algorithms, realizations, plot);
    if (*bounds) return cmd_bounds(config_path, out_dir);
    if (*check) return cmd_check(config_path, realizations);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
