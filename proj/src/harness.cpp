#include "trustopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "trustopt/csv.hpp"
#include "trustopt/rng.hpp"

namespace trustopt {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"topology", {"file", "preset", "malicious"}},
      {"trust", {"E_L", "E_M", "spread", "seed"}},
      {"problem", {"file", "preset", "lambda"}},
      {"schedule", {"kind", "T0", "mu", "values"}},
      {"attack", {"kind", "value", "table", "report"}},
      {"run", {"horizon", "realizations", "seed", "algorithms", "wmsr_F", "sample_times", "output",
               "threads", "norm_radius"}},
  };
  return keys;
}

class Section {
 public:
  Section(const pt::ptree& tree, std::string name) : name_(std::move(name)) {
    if (const auto child = tree.get_child_optional(name_)) node_ = &*child;
  }

  std::optional<std::string> text(const std::string& key) const {
    if (!node_) return std::nullopt;
    const auto v = node_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return std::string(trim(*v));
  }
  std::string required(const std::string& key) const {
    auto v = text(key);
    if (!v || v->empty()) throw std::invalid_argument("missing [" + name_ + "] " + key);
    return *v;
  }
  std::optional<double> real(const std::string& key) const {
    const auto v = text(key);
    if (!v) return std::nullopt;
    return wrap(key, [&] { return parse_double(*v); });
  }
  std::optional<long> integer(const std::string& key) const {
    const auto v = text(key);
    if (!v) return std::nullopt;
    return wrap(key, [&] { return parse_long(*v); });
  }
  std::vector<double> reals(const std::string& key) const {
    const auto v = text(key);
    if (!v) return {};
    return wrap(key, [&] { return parse_list(*v); });
  }

  static std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& f : split(s, ',')) out.push_back(parse_double(f));
    return out;
  }

 private:
  template <class F>
  auto wrap(const std::string& key, F f) const -> decltype(f()) {
    try {
      return f();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("[" + name_ + "] " + key + ": " + e.what());
    }
  }

  std::string name_;
  const pt::ptree* node_ = nullptr;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

MaliciousStrategy::EdgeTable parse_edge_table(const std::string& text) {
  // "m i : v1, v2 ; m i : ..."
  MaliciousStrategy::EdgeTable table;
  for (const auto& entry : split(text, ';')) {
    if (trim(entry).empty()) continue;
    const auto parts = split(entry, ':');
    if (parts.size() != 2) throw std::invalid_argument("bad attack table entry '" + entry + "'");
    std::istringstream ends{std::string(trim(parts[0]))};
    int m = 0, i = 0;
    if (!(ends >> m >> i)) throw std::invalid_argument("bad attack table edge '" + parts[0] + "'");
    table[{m, i}] = to_vector(Section::parse_list(parts[1]));
  }
  return table;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = allowed_keys().find(section);
    if (it == allowed_keys().end()) throw std::invalid_argument("unknown section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!it->second.count(key))
        throw std::invalid_argument("unknown key '" + key + "' in [" + section + "]");
  }

  const Section topo(tree, "topology"), trust(tree, "trust"), prob(tree, "problem"),
      sched(tree, "schedule"), attack(tree, "attack"), run(tree, "run");

  std::optional<Topology> topology;
  if (const auto file = topo.text("file")) {
    topology = read_topology(resolve(base_dir, *file).string());
  } else {
    const std::string preset = topo.text("preset").value_or("canonical");
    if (preset != "canonical") throw std::invalid_argument("unknown topology preset " + preset);
    topology = canonical_topology(static_cast<int>(topo.integer("malicious").value_or(0)));
  }

  std::optional<Problem> problem;
  if (const auto file = prob.text("file")) {
    problem = read_problem(resolve(base_dir, *file).string());
  } else {
    const std::string preset = prob.required("preset");
    if (preset == "consensus")
      problem = consensus_problem();
    else if (preset == "ridge5")
      problem = ridge5_problem(prob.real("lambda").value_or(0.5));
    else
      throw std::invalid_argument("unknown problem preset " + preset);
  }
  if (problem->n_agents() != topology->n_legitimate())
    throw std::invalid_argument("problem lists " + std::to_string(problem->n_agents()) +
                                " agents but the topology has " +
                                std::to_string(topology->n_legitimate()) + " legitimate agents");

  const TrustModel model(trust.real("E_L").value_or(0.05), trust.real("E_M").value_or(-0.05),
                         trust.real("spread").value_or(0.8),
                         static_cast<std::uint64_t>(trust.integer("seed").value_or(0)));

  const long T0 = sched.integer("T0").value_or(0);
  const std::string kind = sched.text("kind").value_or("theorem");
  std::optional<StepSchedule> schedule;
  if (kind == "theorem") {
    const double mu =
        sched.real("mu").value_or(regularity_constants(problem->objectives, problem->box).mu);
    schedule = StepSchedule::theorem(mu, T0);
  } else if (kind == "experimental") {
    schedule = StepSchedule::experimental(T0);
  } else if (kind == "custom") {
    schedule = StepSchedule::custom(sched.reals("values"), T0);
  } else {
    throw std::invalid_argument("unknown schedule kind " + kind);
  }

  const std::string attack_kind = attack.text("kind").value_or("constant");
  std::optional<MaliciousStrategy> strategy;
  if (attack_kind == "constant") {
    std::vector<double> v = attack.reals("value");
    if (v.empty()) v.assign(problem->dim(), -problem->box.eta);
    if (static_cast<int>(v.size()) != problem->dim())
      throw std::invalid_argument("[attack] value has wrong dimension");
    strategy = MaliciousStrategy::constant(to_vector(v));
  } else if (attack_kind == "per_edge") {
    strategy = MaliciousStrategy::per_edge(parse_edge_table(attack.required("table")));
  } else {
    throw std::invalid_argument("unknown attack kind " + attack_kind);
  }
  const std::string report = attack.text("report").value_or("honest");
  if (report == "one")
    strategy->with_degree_report(DegreeReport::one);
  else if (report != "honest")
    throw std::invalid_argument("unknown degree report " + report);

  SimulationConfig sim{.topology = *topology,
                       .trust = model,
                       .problem = *problem,
                       .schedule = *schedule,
                       .strategy = *strategy,
                       .horizon = run.integer("horizon").value_or(10000),
                       .algorithm = Algorithm::resilient,
                       .wmsr_F = static_cast<int>(run.integer("wmsr_F").value_or(2)),
                       .seed = static_cast<std::uint64_t>(run.integer("seed").value_or(1))};
  ExperimentConfig config{.run = std::move(sim),
                          .realizations = static_cast<int>(run.integer("realizations").value_or(100)),
                          .sample_times = {},
                          .algorithms = {Algorithm::resilient},
                          .output_dir = base_dir / "out",
                          .norm_radius = run.real("norm_radius"),
                          .threads = static_cast<int>(run.integer("threads").value_or(0))};
  if (const auto algos = run.text("algorithms")) {
    config.algorithms.clear();
    for (const auto& a : split(*algos, ',')) config.algorithms.push_back(parse_algorithm(std::string(trim(a))));
  }
  if (const auto times = run.text("sample_times"))
    for (const auto& f : split(*times, ',')) config.sample_times.push_back(parse_long(f));
  if (const auto out = run.text("output")) config.output_dir = resolve(base_dir, *out);

  if (config.run.horizon < 1) throw std::invalid_argument("[run] horizon must be at least 1");
  if (config.realizations < 1) throw std::invalid_argument("[run] realizations must be at least 1");
  if (config.run.wmsr_F < 0) throw std::invalid_argument("[run] wmsr_F must be nonnegative");
  for (long t : config.sample_times)
    if (t < 0 || t > config.run.horizon)
      throw std::invalid_argument("[run] sample time " + std::to_string(t) + " outside [0, horizon]");
  return config;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return parse_experiment_config(in, path.parent_path());
  } catch (const std::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::vector<long> default_sample_grid(long horizon, long T0) {
  std::set<long> grid{0, horizon};
  if (T0 <= horizon) grid.insert(T0);
  if (T0 + 1 <= horizon) grid.insert(T0 + 1);
  for (int k = 0;; ++k) {
    const long t = std::lround(std::pow(10.0, k / 10.0));
    if (t > horizon) break;
    grid.insert(t);
  }
  return {grid.begin(), grid.end()};
}

std::vector<long> sample_grid(const ExperimentConfig& config) {
  if (config.sample_times.empty())
    return default_sample_grid(config.run.horizon, config.run.schedule.T0());
  std::vector<long> grid = config.sample_times;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

ErrorCurve error_metric(const SimulationTrace& trace, const Vector& x_star) {
  ErrorCurve curve;
  curve.times = trace.times;
  for (const AgentValues& x : trace.values) {
    if (x.rows() != x_star.size())
      throw std::invalid_argument("x* has dimension " + std::to_string(x_star.size()) +
                                  ", trace has " + std::to_string(x.rows()));
    const double n = static_cast<double>(x.cols());
    const Vector avg = x.rowwise().mean();
    double e = 0.0, e2 = 0.0, dist = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const double r = (x.col(i) - x_star).norm();
      e += r;
      e2 += r * r;
      dist += (x.col(i) - avg).norm();
    }
    curve.mean_err.push_back(e / n);
    curve.mean_sq_err.push_back(e2 / n);
    curve.dist_to_avg.push_back(dist / n);
  }
  return curve;
}

namespace {

void mean_and_se(std::span<const double> xs, double& mean, double& se) {
  const double n = static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  mean = s / n;
  if (xs.size() < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

ErrorStatistics aggregate(Algorithm algorithm, std::span<const ErrorCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("no realizations to aggregate");
  ErrorStatistics s;
  s.algorithm = algorithm;
  s.realizations = static_cast<long>(curves.size());
  s.times = curves.front().times;
  for (const auto& c : curves)
    if (c.times != s.times) throw std::invalid_argument("realizations sampled on different grids");
  const std::size_t K = s.times.size();
  for (auto* v : {&s.mean_err, &s.se_err, &s.mean_ratio, &s.se_ratio, &s.mean_sq, &s.se_sq,
                  &s.mean_dist, &s.se_dist})
    v->resize(K);
  std::vector<double> column(curves.size());
  auto reduce = [&](auto get, std::vector<double>& mean, std::vector<double>& se) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t r = 0; r < curves.size(); ++r) column[r] = get(curves[r], k);
      mean_and_se(column, mean[k], se[k]);
    }
  };
  reduce([](const ErrorCurve& c, std::size_t k) { return c.mean_err[k]; }, s.mean_err, s.se_err);
  reduce(
      [](const ErrorCurve& c, std::size_t k) {
        return c.mean_err[0] > 0.0 ? c.mean_err[k] / c.mean_err[0] : 0.0;
      },
      s.mean_ratio, s.se_ratio);
  reduce([](const ErrorCurve& c, std::size_t k) { return c.mean_sq_err[k]; }, s.mean_sq, s.se_sq);
  reduce([](const ErrorCurve& c, std::size_t k) { return c.dist_to_avg[k]; }, s.mean_dist, s.se_dist);
  return s;
}

BoundParams derive_bound_params(const ExperimentConfig& config) {
  const auto& run = config.run;
  const ProblemConstants constants = regularity_constants(run.problem.objectives, run.problem.box);
  const double radius = config.norm_radius.value_or(run.problem.box.norm_radius());
  const NominalWeights weights = nominal_weight_matrix(run.topology);
  return make_bound_params(constants, radius, weights.rho_L, run.trust.E_L, run.trust.E_M,
                           degree_counts(run.topology), run.schedule.T0());
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.realizations < 1) throw std::invalid_argument("realizations must be at least 1");
  ExperimentResult result;
  const auto& problem = config.run.problem;
  result.x_star = constrained_optimum(problem.objectives, problem.box);
  const std::vector<long> grid = sample_grid(config);

  const ProblemConstants constants = regularity_constants(problem.objectives, problem.box);
  if (constants.strongly_convex) {
    result.params = derive_bound_params(config);
    result.curves = standard_curves(result.params, grid);
  }

  const int workers = std::max(
      1, std::min(config.threads > 0 ? config.threads
                                     : static_cast<int>(std::thread::hardware_concurrency()),
                  config.realizations));

  for (Algorithm algorithm : config.algorithms) {
    const int R = config.realizations;
    std::vector<ErrorCurve> curves(R);
    std::vector<std::optional<long>> tf(R);
    std::vector<long> violations(R, 0);
    std::vector<double> ratios(R, 0.0);
    std::atomic<int> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    std::string failure_context;

    auto work = [&] {
      for (int r = next++; r < R; r = next++) {
        SimulationConfig run = config.run;
        run.algorithm = algorithm;
        run.seed = derive_seed(config.run.seed, static_cast<std::uint64_t>(r));
        try {
          TraceOptions options;
          options.record_times = grid;
          const SimulationTrace trace = run_simulation(run, options);
          curves[r] = error_metric(trace, result.x_star);
          tf[r] = trace.correct_classification_time;
          violations[r] = trace.residual_violations;
          ratios[r] = trace.max_residual_ratio;
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
            failure_context = to_string(algorithm) + " realization " + std::to_string(r) +
                              " (seed " + std::to_string(run.seed) + ")";
          }
          next = R;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (failure) {
      try {
        std::rethrow_exception(failure);
      } catch (const std::exception& e) {
        throw std::runtime_error(failure_context + ": " + e.what());
      }
    }

    ErrorStatistics stats = aggregate(algorithm, curves);
    for (int r = 0; r < R; ++r) {
      stats.residual_violations += violations[r];
      stats.max_residual_ratio = std::max(stats.max_residual_ratio, ratios[r]);
    }
    stats.correct_classification_times = std::move(tf);
    result.stats.push_back(std::move(stats));
  }
  return result;
}

BoundComparison compare_to_bounds(const ErrorStatistics& stats, const BoundCurve& curve) {
  BoundComparison out;
  out.name = curve.name;
  out.worst_margin = -INFINITY;
  for (std::size_t k = 0; k < stats.times.size(); ++k) {
    const auto b = value_at(curve, stats.times[k]);
    if (!b) continue;
    ++out.checked;
    const double margin = stats.mean_sq[k] - *b - 3.0 * stats.se_sq[k];
    out.worst_margin = std::max(out.worst_margin, margin);
    if (margin > 0.0) out.violations.push_back(stats.times[k]);
  }
  return out;
}

BoundComparison compare_to_delta_M(const ErrorStatistics& stats, const BoundParams& params) {
  BoundComparison out;
  out.name = "delta_M";
  out.worst_margin = -INFINITY;
  for (std::size_t k = 0; k < stats.times.size(); ++k) {
    const long t = stats.times[k];
    if (t < params.T0) continue;
    ++out.checked;
    const double margin = stats.mean_dist[k] - delta_M(t, params) - 3.0 * stats.se_dist[k];
    out.worst_margin = std::max(out.worst_margin, margin);
    if (margin > 0.0) out.violations.push_back(t);
  }
  return out;
}

TraceInvariantReport check_trace_invariants(const SimulationConfig& config,
                                            const SimulationTrace& trace) {
  TraceInvariantReport report;
  const auto& topo = config.topology;
  const long H = config.horizon;
  const int n = topo.n_legitimate();
  auto fail = [&](long t, const std::string& what) {
    if (report.failures.size() < 20) report.failures.push_back("t=" + std::to_string(t) + ": " + what);
  };
  if (static_cast<long>(trace.values.size()) != H + 1 || static_cast<long>(trace.weights.size()) != H ||
      static_cast<long>(trace.snapshots.size()) != H) {
    report.failures.push_back("trace must record every round with weights and snapshots");
    return report;
  }
  const NominalWeights nominal = nominal_weight_matrix(topo);
  const long T0 = config.schedule.T0();
  const double eta = config.problem.box.eta;
  for (long t = 0; t <= H; ++t) {
    const AgentValues& x = trace.values[t];
    if (x.cwiseAbs().maxCoeff() > eta) fail(t, "value outside X");
    if (t <= T0 && x != trace.values[0]) fail(t, "values moved before T0");
    if (t == H) break;
    ++report.rounds_checked;
    const Eigen::MatrixXd& w = trace.weights[t];
    for (int i = 0; i < n; ++i) {
      if (w.row(i).minCoeff() < 0.0) fail(t, "negative weight in row " + std::to_string(i));
      if (std::abs(w.row(i).sum() - 1.0) > 1e-12) fail(t, "row " + std::to_string(i) + " not stochastic");
      if (w(i, i) < 0.5) fail(t, "self weight below 1/2 in row " + std::to_string(i));
    }
    if (trace.correct_classification_time && t >= *trace.correct_classification_time && t >= T0) {
      const double gap = (w.leftCols(n) - nominal.matrix).cwiseAbs().maxCoeff();
      const double mal = topo.n_malicious() > 0 ? w.rightCols(topo.n_malicious()).cwiseAbs().maxCoeff() : 0.0;
      if (gap > 1e-15) fail(t, "weights differ from the nominal matrix after T_f");
      if (mal != 0.0) fail(t, "malicious weight after T_f");
    }
  }
  if (trace.residual_violations != 0)
    report.failures.push_back(std::to_string(trace.residual_violations) + " residual bound violations");
  return report;
}

std::vector<ResultRow> result_rows(const ExperimentResult& result) {
  std::vector<ResultRow> rows;
  auto curve = [&](const std::string& name) -> const BoundCurve* {
    for (const auto& c : result.curves)
      if (c.name == name) return &c;
    return nullptr;
  };
  auto at = [&](const std::string& name, long t) -> std::optional<double> {
    const BoundCurve* c = curve(name);
    return c ? value_at(*c, t) : std::nullopt;
  };
  for (const auto& s : result.stats) {
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      const long t = s.times[k];
      rows.push_back(ResultRow{t, to_string(s.algorithm), s.mean_err[k], s.mean_ratio[k], s.mean_sq[k],
                               s.se_sq[k], at("thm1", t), at("cor5a", t), at("cor5b", t),
                               at("cor5c", t), at("thm9", t)});
    }
  }
  return rows;
}

namespace {

constexpr const char* kHeader =
    "t,algorithm,mean_err,mean_err_ratio,mean_sq_err,stderr_sq,bound_thm1,bound_cor5a,"
    "bound_cor5b,bound_cor5c,bound_thm9";

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& f) {
  if (trim(f).empty()) return std::nullopt;
  return parse_double(f);
}

}  // namespace

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << r.t << ',' << r.algorithm << ',' << format_double(r.mean_err) << ','
        << format_double(r.mean_err_ratio) << ',' << format_double(r.mean_sq_err) << ','
        << format_double(r.stderr_sq) << ',' << opt_field(r.bound_thm1) << ','
        << opt_field(r.bound_cor5a) << ',' << opt_field(r.bound_cor5b) << ','
        << opt_field(r.bound_cor5c) << ',' << opt_field(r.bound_thm9) << '\n';
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader)
    throw std::invalid_argument("results CSV: unexpected header");
  std::vector<ResultRow> rows;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 11)
      throw std::invalid_argument("results CSV line " + std::to_string(lineno) + ": expected 11 fields");
    try {
      rows.push_back(ResultRow{parse_long(f[0]), f[1], parse_double(f[2]), parse_double(f[3]),
                               parse_double(f[4]), parse_double(f[5]), parse_opt(f[6]),
                               parse_opt(f[7]), parse_opt(f[8]), parse_opt(f[9]), parse_opt(f[10])});
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("results CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void export_csv(std::span<const ResultRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_results_csv(out, rows);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ResultRow> import_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return read_results_csv(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_gnuplot_script(std::ostream& out, const std::string& csv_name,
                          std::span<const Algorithm> algorithms) {
  out << "set datafile separator ','\n"
      << "set key autotitle columnhead\n"
      << "set logscale x\n"
      << "set logscale y\n"
      << "set xlabel 't'\n"
      << "set ylabel 'mean error ratio'\n"
      << "plot ";
  for (std::size_t k = 0; k < algorithms.size(); ++k) {
    const std::string name = to_string(algorithms[k]);
    if (k > 0) out << ", \\\n     ";
    out << "'" << csv_name << "' using 1:(strcol(2) eq '" << name << "' ? $4 : NaN) with lines title '"
        << name << "'";
  }
  out << '\n';
}

}  // namespace trustopt
