#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "trustopt/network.hpp"
#include "trustopt/problem.hpp"
#include "trustopt/trust.hpp"

namespace trustopt {

/// Agent values are stored column-wise: a d x |L| matrix.
using AgentValues = Eigen::MatrixXd;

/// Raised when a per-round invariant fails; carries the offending round.
class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(long round, const std::string& what)
      : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}
  long round() const { return round_; }

 private:
  long round_;
};

enum class Algorithm { resilient, nominal, wmsr };

std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);

/// Diminishing stepsize γ(k) with γ(k) = 0 for k < 0. Round t of the
/// resilient protocol uses γ(t − T0).
class StepSchedule {
 public:
  enum class Kind { theorem, experimental, custom };

  /// γ(k) = 2 / (μ(k + 2)).
  static StepSchedule theorem(double mu, long T0 = 0);
  /// γ(k) = 1 / (k + 2).
  static StepSchedule experimental(long T0 = 0);
  /// γ(k) = values[k]; the last value repeats past the end. Must be
  /// nonnegative and nonincreasing.
  static StepSchedule custom(std::vector<double> values, long T0 = 0);

  Kind kind() const { return kind_; }
  long T0() const { return T0_; }
  double mu() const { return mu_; }

  double gamma(long k) const;
  double at_round(long t) const { return gamma(t - T0_); }

 private:
  StepSchedule(Kind kind, double mu, long T0, std::vector<double> values)
      : kind_(kind), mu_(mu), T0_(T0), values_(std::move(values)) {}

  Kind kind_;
  double mu_;
  long T0_;
  std::vector<double> values_;
};

double step_size(const StepSchedule& schedule, long k);

/// What a malicious agent reports as d_j(t).
enum class DegreeReport { honest, one };

class StrategyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Values x_{mi}(t) sent by malicious agent m to legitimate agent i.
class MaliciousStrategy {
 public:
  using Callback = std::function<Vector(long t, int from, int to)>;
  using EdgeTable = std::map<std::pair<int, int>, Vector>;  // (malicious, legitimate)

  static MaliciousStrategy constant(Vector value);
  static MaliciousStrategy per_edge(EdgeTable table);
  static MaliciousStrategy time_varying(Callback callback);

  MaliciousStrategy& with_degree_report(DegreeReport report) {
    report_ = report;
    return *this;
  }
  DegreeReport degree_report() const { return report_; }
  int reported_degree(const Topology& topology, int malicious) const;

  /// Writes x_{from,to}(t) into `out`; rejects values outside X.
  void value_into(long t, int from, int to, const BoxConstraint& box, Eigen::Ref<Vector> out) const;

  std::string describe() const;

 private:
  using Payload = std::variant<Vector, EdgeTable, Callback>;
  explicit MaliciousStrategy(Payload payload) : payload_(std::move(payload)) {}

  Payload payload_;
  DegreeReport report_ = DegreeReport::honest;
};

Vector malicious_inputs(const MaliciousStrategy& strategy, long t, int from, int to,
                        const BoxConstraint& box);

struct RoundOutput {
  AgentValues next;
  std::vector<double> residual_norms;  // ‖φ_i(t)‖ = ‖Π_X(y_i) − c_i‖
  Eigen::MatrixXd weights;             // |L| x n applied weights, when requested
};

/// One synchronous round of the trust-weighted projected gradient protocol.
RoundOutput resilient_round(const AgentValues& x, const Topology& topology,
                            const ClassificationSnapshot& snapshot, const Problem& problem,
                            const StepSchedule& schedule, const MaliciousStrategy& strategy,
                            long t, bool record_weights = false);

/// Malicious-free reference dynamic driven by the nominal weights.
AgentValues nominal_round(const AgentValues& z, const NominalWeights& weights,
                          const Problem& problem, double gamma_t);

/// W-MSR round, applied coordinate-wise for d > 1: drop up to F received
/// values above and up to F below the agent's own, average the rest with its
/// own value, then take a projected gradient step.
RoundOutput wmsr_round(const AgentValues& x, const Topology& topology, const Problem& problem,
                       int F, double gamma_t, const MaliciousStrategy& strategy, long t);

struct SimulationConfig {
  Topology topology;
  TrustModel trust;
  Problem problem;
  StepSchedule schedule;
  MaliciousStrategy strategy;
  long horizon = 1;
  Algorithm algorithm = Algorithm::resilient;
  int wmsr_F = 2;
  std::uint64_t seed = 0;
};

struct TraceOptions {
  std::vector<long> record_times;  // empty: record every t in [0, horizon]
  bool record_weights = false;     // per-round applied weights (resilient only)
  bool record_snapshots = false;   // per-round classifications (resilient only)
  bool strict = true;              // throw on a residual-bound violation
};

struct SimulationTrace {
  std::vector<long> times;
  std::vector<AgentValues> values;                  // x(t) at `times`
  std::vector<std::vector<double>> residual_norms;  // per round, when recording every round
  std::vector<Eigen::MatrixXd> weights;
  std::vector<ClassificationSnapshot> snapshots;
  std::optional<long> correct_classification_time;  // resilient only
  double max_residual_ratio = 0.0;                  // max ‖φ‖ / (γG) over rounds with γ > 0
  long residual_violations = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

/// Initial values: each coordinate uniform on [−η, η] from a seeded stream.
AgentValues initial_values(const Problem& problem, int n_legitimate, std::uint64_t seed);

std::uint64_t config_fingerprint(const SimulationConfig& config);

SimulationTrace run_simulation(const SimulationConfig& config, const TraceOptions& options = {});

}  // namespace trustopt
