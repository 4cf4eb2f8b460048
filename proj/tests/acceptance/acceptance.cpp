// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trustopt/bounds.hpp"
#include "trustopt/harness.hpp"
#include "trustopt/network.hpp"
#include "trustopt/problem.hpp"
#include "trustopt/rng.hpp"
#include "trustopt/trust.hpp"

using namespace trustopt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ExperimentConfig load(const std::string& name) {
  return read_experiment_config(std::string(TRUSTOPT_CONFIG_DIR) + "/" + name + ".ini");
}

// Experiments are shared between criteria; each config runs once.
std::map<std::string, ExperimentResult> g_results;
long g_resilient_rounds = 0;
std::vector<std::string> g_run_failures;

const ExperimentResult* experiment(const std::string& name) {
  if (auto it = g_results.find(name); it != g_results.end()) return &it->second;
  try {
    ExperimentConfig c = load(name);
    ExperimentResult r = run_experiment(c);
    for (const auto& s : r.stats)
      if (s.algorithm == Algorithm::resilient) g_resilient_rounds += s.realizations * c.run.horizon;
    return &g_results.emplace(name, std::move(r)).first->second;
  } catch (const std::exception& e) {
    g_run_failures.push_back(name + ": " + e.what());
    return nullptr;
  }
}

const ErrorStatistics* stats_for(const ExperimentResult& r, Algorithm a) {
  for (const auto& s : r.stats)
    if (s.algorithm == a) return &s;
  return nullptr;
}

Outcome ac1() {
  const auto start = std::chrono::steady_clock::now();
  const Problem c = consensus_problem();
  const Problem r = ridge5_problem();
  const Vector xc = optimal_point(c.objectives, c.box);
  const Vector xr = optimal_point(r.objectives, r.box);
  const double expected[] = {-50, -16.54, -21.19, -19.64, 50};
  bool ok = std::abs(xc(0) - 31.367) <= 0.001;
  for (int k = 0; k < 5; ++k) ok = ok && std::abs(xr(k) - expected[k]) <= 0.01;
  const double secs = seconds_since(start);
  ok = ok && secs < 1.0;
  return {ok, fmt("consensus x*=%.5f, d=5 x*=(%.3f, %.3f, %.3f, %.3f, %.3f), %.3fs", xc(0), xr(0), xr(1),
                  xr(2), xr(3), xr(4), secs)};
}

Outcome ac2() {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig c = load("consensus_m15_theorem_T0_0");
  c.run.algorithm = Algorithm::nominal;
  c.run.horizon = 2000;
  const BoundParams p = derive_bound_params(c);
  const Vector x_star = constrained_optimum(c.run.problem.objectives, c.run.problem.box);
  long checked = 0, violations = 0;
  double worst = -1e300;
  for (int r = 0; r < c.realizations; ++r) {
    SimulationConfig run = c.run;
    run.seed = derive_seed(c.run.seed, static_cast<std::uint64_t>(r));
    const SimulationTrace tr = run_simulation(run);
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      const long T = tr.times[k];
      if (T < 1) continue;
      const double msq = (tr.values[k].colwise() - x_star).colwise().squaredNorm().mean();
      const double bound = nominal_rate_bound(T, p);
      ++checked;
      worst = std::max(worst, msq - bound);
      if (msq > bound) ++violations;
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs < 10.0,
          fmt("%ld (T, run) pairs, %ld violations, max(err - bound)=%.4g, %.2fs", checked, violations, worst,
              secs)};
}

Outcome ac3() {
  const auto start = std::chrono::steady_clock::now();
  const int histories = 10000;
  const long checkpoints[] = {10, 100, 1000};
  bool ok = true;
  std::string detail;
  for (bool malicious : {false, true}) {
    const double E = malicious ? -0.05 : 0.05;
    const TrustModel model(0.05, -0.05, 0.8, 4242);
    std::vector<long> wrong(3, 0);
    for (int h = 0; h < histories; ++h) {
      double beta = 0.0;
      std::size_t next = 0;
      for (long t = 0; t <= 1000 && next < 3; ++t) {
        if (t == checkpoints[next]) {
          if (malicious ? beta >= 0.0 : beta < 0.0) ++wrong[next];
          ++next;
        }
        beta += sample_alpha(model, h, h + 1, malicious, t) - 0.5;
      }
    }
    for (int k = 0; k < 3; ++k) {
      const double p_hat = static_cast<double>(wrong[k]) / histories;
      const double bound = std::exp(-2.0 * checkpoints[k] * E * E) + 3 * std::sqrt(p_hat * (1 - p_hat) / histories);
      ok = ok && p_hat <= bound;
      detail += fmt("%s t=%ld p=%.4f<=%.4f; ", malicious ? "M" : "L", checkpoints[k], p_hat, bound);
    }
  }
  const double secs = seconds_since(start);
  return {ok && secs < 30.0, detail + fmt("%.2fs", secs)};
}

Outcome reproduction(const std::vector<std::string>& names, double budget_s) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (const auto& name : names) {
    const ExperimentResult* r = experiment(name);
    if (!r) return {false, name + " failed to run"};
    const ErrorStatistics* res = stats_for(*r, Algorithm::resilient);
    const ErrorStatistics* wm = stats_for(*r, Algorithm::wmsr);
    if (!res || !wm) return {false, name + " lacks resilient or wmsr runs"};
    const double a = res->mean_ratio.back(), b = wm->mean_ratio.back();
    ok = ok && a < 0.1 && b >= 5 * a;
    detail += fmt("%s: resilient %.4f, wmsr %.4f (x%.1f); ", name.c_str(), a, b, b / a);
  }
  const double secs = seconds_since(start);
  return {ok && secs < budget_s, detail + fmt("%.1fs", secs)};
}

Outcome ac7() {
  bool ok = true;
  std::string detail;
  for (const std::string name : {"consensus_m15_theorem_T0_0", "consensus_m15_theorem_T0_100"}) {
    const ExperimentResult* r = experiment(name);
    if (!r) return {false, name + " failed to run"};
    const ErrorStatistics* res = stats_for(*r, Algorithm::resilient);
    if (!res) return {false, name + " lacks resilient runs"};
    for (const auto& curve : r->curves) {
      if (curve.name == "thm1") continue;
      const BoundComparison cmp = compare_to_bounds(*res, curve);
      ok = ok && cmp.violations.empty() && cmp.checked > 0;
      detail += fmt("%s/%s %ld pts margin %.3g; ", name.c_str() + 14, curve.name.c_str(), cmp.checked,
                    cmp.worst_margin);
    }
  }
  return {ok, detail};
}

Outcome ac8() {
  bool ok = true;
  std::string detail;
  for (const std::string name : {"consensus_m15_theorem_T0_0", "consensus_m15_theorem_T0_100"}) {
    const ExperimentResult* r = experiment(name);
    if (!r) return {false, name + " failed to run"};
    const ErrorStatistics* res = stats_for(*r, Algorithm::resilient);
    if (!res) return {false, name + " lacks resilient runs"};
    const BoundComparison cmp = compare_to_delta_M(*res, r->params);
    ok = ok && cmp.violations.empty() && cmp.checked > 0;
    detail += fmt("%s: %ld pts, margin %.3g; ", name.c_str(), cmp.checked, cmp.worst_margin);
  }
  return {ok, detail};
}

Outcome ac4() {
  // runs after every experiment criterion; strict runs throw on the first violation
  bool ok = g_run_failures.empty();
  long violations = 0;
  double worst = 0.0;
  for (const auto& [name, r] : g_results)
    for (const auto& s : r.stats)
      if (s.algorithm == Algorithm::resilient) {
        violations += s.residual_violations;
        worst = std::max(worst, s.max_residual_ratio);
      }
  ok = ok && violations == 0 && g_resilient_rounds > 0;
  std::string detail = fmt("%zu experiments, %ld resilient rounds, %ld violations, max |phi|/(gamma G)=%.4f",
                           g_results.size(), g_resilient_rounds, violations, worst);
  for (const auto& f : g_run_failures) detail += "; " + f;
  return {ok, detail};
}

Outcome ac9() {
  const NominalWeights canonical = nominal_weight_matrix(canonical_topology(15));
  const int n = static_cast<int>(canonical.matrix.rows());
  const Eigen::MatrixXd J = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::MatrixXd half = 0.5 * Eigen::MatrixXd::Identity(n, n) + 0.5 * J;
  struct Case {
    const char* name;
    Eigen::MatrixXd W;
    double rho;
  };
  const Case cases[] = {{"rho=0", J, 0.0}, {"rho=1/2", half, 0.5}, {"rho_L", canonical.matrix, canonical.rho_L}};
  bool ok = true;
  std::string detail;
  std::uint64_t seed = 90;
  for (const auto& c : cases) {
    ContractionCase cc{c.W, c.rho, 50.0, 1, [](long t) { return 100.0 / (t + 2.0); }, 400, 1000, ++seed};
    const ContractionReport rep = perturbed_contraction_check(cc);
    ok = ok && rep.violations == 0;
    detail += fmt("%s: %ld violations; ", c.name, static_cast<long>(rep.violations));
  }
  return {ok, detail};
}

Outcome ac10() {
  std::vector<std::string> failures;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };

  for (int m : {15, 30}) {
    const NominalWeights w = nominal_weight_matrix(canonical_topology(m));
    const Eigen::MatrixXd& W = w.matrix;
    expect((W - W.transpose()).cwiseAbs().maxCoeff() <= 1e-15, "W_L symmetric");
    expect((W.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12, "W_L row stochastic");
    expect((W.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12, "W_L column stochastic");
    expect(W.diagonal().minCoeff() >= 0.5 - 1e-12, "W_L diagonal >= 1/2");
    expect(w.rho_L > 0.0 && w.rho_L < 1.0, "rho_L in (0,1)");
  }

  for (const std::string name : {"consensus_m15_T0_100", "ridge5_m30_T0_100"}) {
    ExperimentConfig c = load(name);
    SimulationConfig run = c.run;
    run.horizon = 400;
    run.seed = derive_seed(c.run.seed, 0);
    TraceOptions opt;
    opt.record_weights = true;
    opt.record_snapshots = true;
    try {
      const TraceInvariantReport rep = check_trace_invariants(run, run_simulation(run, opt));
      for (const auto& f : rep.failures) failures.push_back(name + ": " + f);
      expect(rep.rounds_checked == run.horizon, name + ": every round checked");
    } catch (const std::exception& e) {
      failures.push_back(name + ": " + e.what());
    }
    for (Algorithm a : {Algorithm::nominal, Algorithm::wmsr}) {
      run.algorithm = a;
      const SimulationTrace tr = run_simulation(run);
      for (const auto& x : tr.values)
        expect(x.cwiseAbs().maxCoeff() <= run.problem.box.eta, name + ": x in X (" + to_string(a) + ")");
    }
  }

  SplitMix64 rng(5);
  const Problem ridge = ridge5_problem();
  for (int trial = 0; trial < 2000; ++trial) {
    Vector y1(5), y2(5);
    for (int k = 0; k < 5; ++k) {
      y1(k) = rng.uniform(-150, 150);
      y2(k) = rng.uniform(-150, 150);
    }
    const double lhs = (project_box(y1, ridge.box) - project_box(y2, ridge.box)).norm();
    expect(lhs <= (y1 - y2).norm() * (1 + 1e-15), "projection nonexpansive");

    const auto& f = ridge.objectives[trial % ridge.n_agents()];
    Vector x(5);
    for (int k = 0; k < 5; ++k) x(k) = rng.uniform(-50, 50);
    const Vector g = gradient(f, x);
    Vector fd(5);
    for (int k = 0; k < 5; ++k) {
      const double h = 1e-4 * std::max(1.0, std::abs(x(k)));
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      fd(k) = (evaluate_objective(f, xp) - evaluate_objective(f, xm)) / (2 * h);
    }
    expect((fd - g).norm() <= 1e-5 * std::max(1.0, g.norm()), "gradient finite differences");
  }

  ExperimentConfig c = load("consensus_m15_T0_100");
  c.realizations = 3;
  c.run.horizon = 300;
  c.sample_times.clear();
  std::ostringstream a, b;
  const auto rows = result_rows(run_experiment(c));
  write_results_csv(a, rows);
  c.threads = 2;
  write_results_csv(b, result_rows(run_experiment(c)));
  expect(a.str() == b.str(), "replay determinism");

  std::sort(failures.begin(), failures.end());
  failures.erase(std::unique(failures.begin(), failures.end()), failures.end());
  std::string detail = failures.empty() ? "all structural checks green" : "";
  for (const auto& f : failures) detail += f + "; ";
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", ac1},
      {"AC2", ac2},
      {"AC3", ac3},
      {"AC5", [] { return reproduction({"consensus_m15_T0_0", "consensus_m15_T0_100"}, 300.0); }},
      {"AC6", [] { return reproduction({"ridge5_m30_T0_0", "ridge5_m30_T0_100"}, 600.0); }},
      {"AC7", ac7},
      {"AC8", ac8},
      {"AC4", ac4},
      {"AC9", ac9},
      {"AC10", ac10},
  };
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
