#include "trustopt/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "trustopt/rng.hpp"

namespace trustopt {

namespace {

constexpr std::uint64_t kInitStream = 0x696E6974;   // "init"
constexpr std::uint64_t kTrustStream = 0x74727374;  // "trst"
constexpr double kRowTolerance = 1e-12;

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h_ ^= p[k];
      h_ *= 0x100000001B3ULL;
    }
  }
  template <class T>
  void value(T v) {
    bytes(&v, sizeof v);
  }
  void text(const std::string& s) { bytes(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

}  // namespace

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::resilient: return "resilient";
    case Algorithm::nominal: return "nominal";
    case Algorithm::wmsr: return "wmsr";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "resilient") return Algorithm::resilient;
  if (name == "nominal") return Algorithm::nominal;
  if (name == "wmsr") return Algorithm::wmsr;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

StepSchedule StepSchedule::theorem(double mu, long T0) {
  if (!(mu > 0.0)) throw std::invalid_argument("theorem stepsize needs mu > 0");
  if (T0 < 0) throw std::invalid_argument("T0 must be nonnegative");
  return StepSchedule(Kind::theorem, mu, T0, {});
}

StepSchedule StepSchedule::experimental(long T0) {
  if (T0 < 0) throw std::invalid_argument("T0 must be nonnegative");
  return StepSchedule(Kind::experimental, 0.0, T0, {});
}

StepSchedule StepSchedule::custom(std::vector<double> values, long T0) {
  if (T0 < 0) throw std::invalid_argument("T0 must be nonnegative");
  if (values.empty()) throw std::invalid_argument("custom stepsize sequence is empty");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] >= 0.0) || !std::isfinite(values[k]))
      throw std::invalid_argument("stepsize " + std::to_string(k) + " is not a nonnegative number");
    if (k > 0 && values[k] > values[k - 1])
      throw std::invalid_argument("stepsize sequence increases at index " + std::to_string(k));
  }
  return StepSchedule(Kind::custom, 0.0, T0, std::move(values));
}

double StepSchedule::gamma(long k) const {
  if (k < 0) return 0.0;
  switch (kind_) {
    case Kind::theorem: return 2.0 / (mu_ * static_cast<double>(k + 2));
    case Kind::experimental: return 1.0 / static_cast<double>(k + 2);
    case Kind::custom:
      return values_[std::min<std::size_t>(static_cast<std::size_t>(k), values_.size() - 1)];
  }
  return 0.0;
}

double step_size(const StepSchedule& schedule, long k) { return schedule.gamma(k); }

MaliciousStrategy MaliciousStrategy::constant(Vector value) {
  return MaliciousStrategy(Payload(std::move(value)));
}

MaliciousStrategy MaliciousStrategy::per_edge(EdgeTable table) {
  return MaliciousStrategy(Payload(std::move(table)));
}

MaliciousStrategy MaliciousStrategy::time_varying(Callback callback) {
  if (!callback) throw std::invalid_argument("empty strategy callback");
  return MaliciousStrategy(Payload(std::move(callback)));
}

int MaliciousStrategy::reported_degree(const Topology& topology, int malicious) const {
  if (report_ == DegreeReport::one) return 1;
  return static_cast<int>(topology.neighbors(malicious).size()) + 1;
}

void MaliciousStrategy::value_into(long t, int from, int to, const BoxConstraint& box,
                                   Eigen::Ref<Vector> out) const {
  if (const auto* v = std::get_if<Vector>(&payload_)) {
    if (v->size() != out.size()) throw StrategyError("attack vector has wrong dimension");
    out = *v;
  } else if (const auto* table = std::get_if<EdgeTable>(&payload_)) {
    const auto it = table->find({from, to});
    if (it == table->end())
      throw StrategyError("no attack value for edge " + std::to_string(from) + "->" +
                          std::to_string(to));
    if (it->second.size() != out.size()) throw StrategyError("attack vector has wrong dimension");
    out = it->second;
  } else {
    const Vector v = std::get<Callback>(payload_)(t, from, to);
    if (v.size() != out.size()) throw StrategyError("attack vector has wrong dimension");
    out = v;
  }
  if (!out.allFinite() || out.cwiseAbs().maxCoeff() > box.eta)
    throw StrategyError("malicious agent " + std::to_string(from) + " emitted a value outside X at t=" +
                        std::to_string(t));
}

std::string MaliciousStrategy::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (const auto* v = std::get_if<Vector>(&payload_)) {
    os << "constant";
    for (double c : *v) os << ' ' << c;
  } else if (const auto* table = std::get_if<EdgeTable>(&payload_)) {
    os << "per_edge";
    for (const auto& [edge, v] : *table) {
      os << " (" << edge.first << ',' << edge.second << ')';
      for (double c : v) os << ' ' << c;
    }
  } else {
    os << "time_varying";
  }
  os << (report_ == DegreeReport::one ? " report=one" : " report=honest");
  return os.str();
}

Vector malicious_inputs(const MaliciousStrategy& strategy, long t, int from, int to,
                        const BoxConstraint& box) {
  Vector out(box.dim);
  strategy.value_into(t, from, to, box, out);
  return out;
}

namespace {

// Gradient step from c and projection; returns ‖φ‖.
double step_and_project(const QuadraticObjective& f, const Vector& c, double gamma, double eta,
                        Vector& grad, Eigen::Ref<Vector> out) {
  gradient_into(f, c, grad);
  out = c - gamma * grad;
  project_box_inplace(out, eta);
  return (out - c).norm();
}

void check_dimensions(const AgentValues& x, const Topology& topology, const Problem& problem) {
  if (x.cols() != topology.n_legitimate() || x.rows() != problem.dim() ||
      problem.n_agents() != topology.n_legitimate())
    throw std::invalid_argument("state, topology and problem dimensions disagree");
}

}  // namespace

RoundOutput resilient_round(const AgentValues& x, const Topology& topology,
                            const ClassificationSnapshot& snapshot, const Problem& problem,
                            const StepSchedule& schedule, const MaliciousStrategy& strategy,
                            long t, bool record_weights) {
  check_dimensions(x, topology, problem);
  const int n = topology.n_legitimate();
  const int dim = problem.dim();
  const bool active = t >= schedule.T0();
  const double gamma = schedule.at_round(t);

  RoundOutput out;
  out.next.resize(dim, n);
  out.residual_norms.resize(n);
  if (record_weights) out.weights = Eigen::MatrixXd::Zero(n, topology.n_agents());

  Vector c(dim), grad(dim), received(dim);
  for (int i = 0; i < n; ++i) {
    const int d_i = snapshot.d[i];
    double off_diagonal = 0.0;
    c.setZero();
    if (active) {
      for (int j : snapshot.trusted[i]) {
        const int d_j = topology.is_legitimate(j) ? snapshot.d[j]
                                                  : strategy.reported_degree(topology, j);
        const double w = 1.0 / (2.0 * std::max(d_i, d_j));
        if (topology.is_legitimate(j)) {
          c.noalias() += w * x.col(j);
        } else {
          strategy.value_into(t, j, i, problem.box, received);
          c.noalias() += w * received;
        }
        off_diagonal += w;
        if (record_weights) out.weights(i, j) = w;
      }
    }
    const double w_ii = 1.0 - off_diagonal;
    if (!(w_ii >= 0.5 - kRowTolerance) || off_diagonal < 0.0)
      throw InvariantViolation(t, "agent " + std::to_string(i) + " self weight " +
                                      std::to_string(w_ii) + " below 1/2");
    if (std::abs(w_ii + off_diagonal - 1.0) > kRowTolerance)
      throw InvariantViolation(t, "weight row " + std::to_string(i) + " is not stochastic");
    if (record_weights) out.weights(i, i) = w_ii;
    c.noalias() += w_ii * x.col(i);
    out.residual_norms[i] = step_and_project(problem.objectives[i], c, gamma, problem.box.eta,
                                             grad, out.next.col(i));
  }
  return out;
}

AgentValues nominal_round(const AgentValues& z, const NominalWeights& weights,
                          const Problem& problem, double gamma_t) {
  const int n = static_cast<int>(z.cols());
  if (weights.matrix.rows() != n || problem.n_agents() != n || z.rows() != problem.dim())
    throw std::invalid_argument("state, weights and problem dimensions disagree");
  const AgentValues r = z * weights.matrix.transpose();
  AgentValues next(z.rows(), n);
  Vector c(z.rows()), grad(z.rows());
  for (int i = 0; i < n; ++i) {
    c = r.col(i);
    step_and_project(problem.objectives[i], c, gamma_t, problem.box.eta, grad, next.col(i));
  }
  return next;
}

RoundOutput wmsr_round(const AgentValues& x, const Topology& topology, const Problem& problem,
                       int F, double gamma_t, const MaliciousStrategy& strategy, long t) {
  if (F < 0) throw std::invalid_argument("W-MSR parameter F must be nonnegative");
  check_dimensions(x, topology, problem);
  const int n = topology.n_legitimate();
  const int dim = problem.dim();

  RoundOutput out;
  out.next.resize(dim, n);
  out.residual_norms.resize(n);

  Vector c(dim), grad(dim);
  Eigen::MatrixXd received;  // dim x |N_i|
  std::vector<std::pair<double, int>> above, below;
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = topology.neighbors(i);
    received.resize(dim, static_cast<Eigen::Index>(nbrs.size()));
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const int j = nbrs[k];
      if (topology.is_legitimate(j))
        received.col(k) = x.col(j);
      else
        strategy.value_into(t, j, i, problem.box, received.col(k));
    }
    for (int coord = 0; coord < dim; ++coord) {
      const double own = x(coord, i);
      above.clear();
      below.clear();
      double sum = own;
      int count = 1;
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        const double v = received(coord, k);
        if (v > own)
          above.emplace_back(v, nbrs[k]);
        else if (v < own)
          below.emplace_back(v, nbrs[k]);
        else {
          sum += v;
          ++count;
        }
      }
      // Largest values first, ties by agent index.
      std::sort(above.begin(), above.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::sort(below.begin(), below.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second < b.second;
      });
      for (std::size_t k = std::min<std::size_t>(F, above.size()); k < above.size(); ++k) {
        sum += above[k].first;
        ++count;
      }
      for (std::size_t k = std::min<std::size_t>(F, below.size()); k < below.size(); ++k) {
        sum += below[k].first;
        ++count;
      }
      c(coord) = sum / count;
    }
    out.residual_norms[i] = step_and_project(problem.objectives[i], c, gamma_t, problem.box.eta,
                                             grad, out.next.col(i));
  }
  return out;
}

AgentValues initial_values(const Problem& problem, int n_legitimate, std::uint64_t seed) {
  AgentValues x(problem.dim(), n_legitimate);
  const double eta = problem.box.eta;
  for (int i = 0; i < n_legitimate; ++i) {
    SplitMix64 rng(derive_seed(seed, kInitStream, static_cast<std::uint64_t>(i)));
    for (int k = 0; k < problem.dim(); ++k) x(k, i) = rng.uniform(-eta, eta);
  }
  return x;
}

std::uint64_t config_fingerprint(const SimulationConfig& config) {
  Fnv1a h;
  const auto& topo = config.topology;
  h.value(topo.n_legitimate());
  h.value(topo.n_malicious());
  for (const auto& [a, b] : topo.edges()) {
    h.value(a);
    h.value(b);
  }
  h.value(config.trust.E_L);
  h.value(config.trust.E_M);
  h.value(config.trust.spread);
  h.value(config.trust.seed);
  h.value(config.problem.box.eta);
  h.value(config.problem.box.dim);
  for (const auto& f : config.problem.objectives) {
    for (double v : f.a) h.value(v);
    h.value(f.b);
    h.value(f.lambda);
  }
  h.value(static_cast<int>(config.schedule.kind()));
  h.value(config.schedule.T0());
  h.value(config.schedule.mu());
  for (long k = 0; k < 4; ++k) h.value(config.schedule.gamma(k));
  h.text(config.strategy.describe());
  h.value(config.horizon);
  h.value(static_cast<int>(config.algorithm));
  h.value(config.wmsr_F);
  return h.digest();
}

SimulationTrace run_simulation(const SimulationConfig& config, const TraceOptions& options) {
  const auto& topo = config.topology;
  const auto& problem = config.problem;
  if (config.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (problem.n_agents() != topo.n_legitimate())
    throw std::invalid_argument("problem has " + std::to_string(problem.n_agents()) +
                                " objectives for " + std::to_string(topo.n_legitimate()) +
                                " legitimate agents");
  for (const auto& f : problem.objectives)
    if (f.dim() != problem.dim()) throw std::invalid_argument("objective dimension mismatch");
  for (long t : options.record_times)
    if (t < 0 || t > config.horizon)
      throw std::invalid_argument("record time " + std::to_string(t) + " outside [0, horizon]");

  SimulationTrace trace;
  trace.seed = config.seed;
  trace.config_hash = config_fingerprint(config);

  const bool every_round = options.record_times.empty();
  std::vector<long> wanted = options.record_times;
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  auto next_wanted = wanted.begin();

  AgentValues x = initial_values(problem, topo.n_legitimate(), config.seed);
  auto record = [&](long t) {
    if (every_round) {
      trace.times.push_back(t);
      trace.values.push_back(x);
    } else if (next_wanted != wanted.end() && *next_wanted == t) {
      trace.times.push_back(t);
      trace.values.push_back(x);
      ++next_wanted;
    }
  };
  record(0);

  const double G = regularity_constants(problem.objectives, problem.box).G;

  switch (config.algorithm) {
    case Algorithm::resilient: {
      TrustModel model = config.trust;
      model.seed = derive_seed(config.seed, kTrustStream, config.trust.seed);
      TrustState state(topo);
      const auto& monitored = state.monitored_edges();
      std::vector<double> alphas(monitored.size());
      ClassificationSnapshot snapshot;
      long last_bad = -1;
      for (long t = 0; t < config.horizon; ++t) {
        trusted_neighborhoods_into(state, topo, snapshot);
        if (has_misclassification(snapshot, topo)) last_bad = t;
        if (options.record_snapshots) trace.snapshots.push_back(snapshot);

        RoundOutput out = resilient_round(x, topo, snapshot, problem, config.schedule,
                                          config.strategy, t, options.record_weights);
        const double budget = config.schedule.at_round(t) * G;
        for (int i = 0; i < topo.n_legitimate(); ++i) {
          const double r = out.residual_norms[i];
          if (budget > 0.0) trace.max_residual_ratio = std::max(trace.max_residual_ratio, r / budget);
          if (r > budget * (1.0 + 1e-12) + 1e-12) {
            ++trace.residual_violations;
            if (options.strict)
              throw InvariantViolation(t, "residual " + std::to_string(r) + " exceeds gamma*G = " +
                                              std::to_string(budget) + " at agent " +
                                              std::to_string(i));
          }
        }
        if (every_round) trace.residual_norms.push_back(std::move(out.residual_norms));
        if (options.record_weights) trace.weights.push_back(std::move(out.weights));
        x = std::move(out.next);

        for (std::size_t e = 0; e < monitored.size(); ++e) {
          const auto [i, j] = monitored[e];
          alphas[e] = sample_alpha(model, i, j, topo.is_malicious(j), t);
        }
        state.update(alphas);
        record(t + 1);
      }
      if (last_bad < config.horizon - 1) trace.correct_classification_time = last_bad + 1;
      break;
    }
    case Algorithm::nominal: {
      const NominalWeights weights = nominal_weight_matrix(topo);
      for (long t = 0; t < config.horizon; ++t) {
        x = nominal_round(x, weights, problem, config.schedule.gamma(t));
        record(t + 1);
      }
      break;
    }
    case Algorithm::wmsr: {
      for (long t = 0; t < config.horizon; ++t) {
        RoundOutput out = wmsr_round(x, topo, problem, config.wmsr_F, config.schedule.gamma(t),
                                     config.strategy, t);
        if (every_round) trace.residual_norms.push_back(std::move(out.residual_norms));
        x = std::move(out.next);
        record(t + 1);
      }
      break;
    }
  }
  return trace;
}

}  // namespace trustopt
