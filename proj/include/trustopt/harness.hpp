#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustopt/bounds.hpp"
#include "trustopt/dynamics.hpp"

namespace trustopt {

struct ExperimentConfig {
  SimulationConfig run;                   // run.seed is the master seed
  int realizations = 100;
  std::vector<long> sample_times;         // empty: default_sample_grid
  std::vector<Algorithm> algorithms{Algorithm::resilient};
  std::filesystem::path output_dir = "out";
  std::optional<double> norm_radius;      // bounds use η√d when unset
  int threads = 0;                        // 0: hardware concurrency
};

/// Reads the INI run configuration. Sections [topology], [trust], [problem],
/// [schedule], [attack], [run]; unknown sections or keys are errors and file
/// paths resolve relative to the configuration file.
ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir);
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

/// About ten log-spaced points per decade plus 0, T0, T0+1 and the horizon.
std::vector<long> default_sample_grid(long horizon, long T0);

std::vector<long> sample_grid(const ExperimentConfig& config);

struct ErrorCurve {
  std::vector<long> times;
  std::vector<double> mean_err;     // ē(t) = (1/|L|)Σ‖x_i(t) − x*‖
  std::vector<double> mean_sq_err;  // (1/|L|)Σ‖x_i(t) − x*‖²
  std::vector<double> dist_to_avg;  // (1/|L|)Σ‖x_i(t) − x̄_L(t)‖
};

ErrorCurve error_metric(const SimulationTrace& trace, const Vector& x_star);

/// Per sample time, mean over realizations and its standard error.
struct ErrorStatistics {
  Algorithm algorithm = Algorithm::resilient;
  long realizations = 0;
  std::vector<long> times;
  std::vector<double> mean_err, se_err;
  std::vector<double> mean_ratio, se_ratio;  // ē(t)/ē(0)
  std::vector<double> mean_sq, se_sq;
  std::vector<double> mean_dist, se_dist;
  long residual_violations = 0;
  double max_residual_ratio = 0.0;
  std::vector<std::optional<long>> correct_classification_times;
};

/// Order-independent reduction of per-realization curves sharing one grid.
ErrorStatistics aggregate(Algorithm algorithm, std::span<const ErrorCurve> curves);

struct ExperimentResult {
  std::vector<ErrorStatistics> stats;  // one per requested algorithm
  std::vector<BoundCurve> curves;      // standard_curves on the sample grid
  BoundParams params;
  Vector x_star;
};

BoundParams derive_bound_params(const ExperimentConfig& config);

/// Runs every algorithm over `realizations` seeded runs. Realization r uses
/// seed derive_seed(master, r) for every algorithm, so all algorithms start
/// from the same x(0). A failing run aborts with its seed.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct BoundComparison {
  std::string name;
  long checked = 0;
  std::vector<long> violations;  // times where mean_sq > bound + 3·se
  double worst_margin = 0.0;     // max over checked times of mean_sq − bound − 3·se
};

BoundComparison compare_to_bounds(const ErrorStatistics& stats, const BoundCurve& curve);

/// Same check on the distance-to-average column against δ_M(t, T0).
BoundComparison compare_to_delta_M(const ErrorStatistics& stats, const BoundParams& params);

struct TraceInvariantReport {
  long rounds_checked = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

/// Structural checks on a full resilient trace recorded with weights and
/// snapshots: stochastic rows, w_ii ≥ 1/2, x ∈ X, freezing before T0 and
/// agreement with W̄_L after the correct classification time.
TraceInvariantReport check_trace_invariants(const SimulationConfig& config,
                                            const SimulationTrace& trace);

struct ResultRow {
  long t = 0;
  std::string algorithm;
  double mean_err = 0.0;
  double mean_err_ratio = 0.0;
  double mean_sq_err = 0.0;
  double stderr_sq = 0.0;
  std::optional<double> bound_thm1, bound_cor5a, bound_cor5b, bound_cor5c, bound_thm9;

  bool operator==(const ResultRow&) const = default;
};

std::vector<ResultRow> result_rows(const ExperimentResult& result);

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);
std::vector<ResultRow> read_results_csv(std::istream& in);

void export_csv(std::span<const ResultRow> rows, const std::filesystem::path& path);
std::vector<ResultRow> import_csv(const std::filesystem::path& path);

/// gnuplot script plotting mean_err_ratio per algorithm from `csv_name`.
void write_gnuplot_script(std::ostream& out, const std::string& csv_name,
                          std::span<const Algorithm> algorithms);

}  // namespace trustopt
