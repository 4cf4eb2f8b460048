#include "trustopt/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>

#include "trustopt/csv.hpp"
#include "trustopt/rng.hpp"
#include "trustopt/trust.hpp"

namespace trustopt {

void BoundParams::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("bound parameter mu must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("bound parameter rho must lie in [0,1)");
  if (!(E_L > 0.0) || !(E_M < 0.0)) throw std::invalid_argument("need E_L > 0 > E_M");
  if (!(eta > 0.0) || !(G >= 0.0) || !(L >= 0.0))
    throw std::invalid_argument("eta must be positive and G, L nonnegative");
  if (D_L < 0 || D_M < 0 || T0 < 0) throw std::invalid_argument("D_L, D_M, T0 must be nonnegative");
}

BoundParams make_bound_params(const ProblemConstants& constants, double norm_radius, double rho,
                              double E_L, double E_M, DegreeCounts degrees, long T0) {
  BoundParams p;
  p.mu = constants.mu;
  p.L = constants.L;
  p.G = constants.G;
  p.eta = norm_radius;
  p.rho = rho;
  p.E_L = E_L;
  p.E_M = E_M;
  p.D_L = degrees.legitimate;
  p.D_M = degrees.malicious;
  p.T0 = T0;
  p.validate();
  return p;
}

double theorem_stepsize(long k, double mu) {
  return k < 0 ? 0.0 : 2.0 / (mu * static_cast<double>(k + 2));
}

namespace {

long half(long t) { return t >= 0 ? t / 2 : -((-t + 1) / 2); }

double pc(long k, const BoundParams& p) { return p_c(k, p.D_L, p.D_M, p.E_L, p.E_M); }
double pe(long k, const BoundParams& p) { return p_e(k, p.D_L, p.D_M, p.E_L, p.E_M); }

double clamp_term(long s, const BoundParams& p) {
  // min{4η², 4h̄(s)/(μs(s+1))}; s < 1 leaves only the clamp.
  const double cap = 4.0 * p.eta * p.eta;
  if (s < 1) return cap;
  const double sd = static_cast<double>(s);
  return std::min(cap, 4.0 * h_bar(s, p) / (p.mu * sd * (sd + 1.0)));
}

}  // namespace

double h_bar(long T, const BoundParams& p) {
  if (T < 1) throw std::invalid_argument("h_bar needs T >= 1, got " + std::to_string(T));
  const double mu = p.mu, L = p.L, G = p.G, eta = p.eta;
  const double r = 1.0 - p.rho;
  const double Td = static_cast<double>(T);
  return G * G * Td / mu + 2.0 * G * G * Td / (mu * r) +
         8.0 * (mu + L) * G * G / (mu * mu * r * r) * std::log((Td + 2.0) / 2.0) +
         2.0 * eta * G / r +
         2.0 * (mu + L) * (mu * eta + 2.0 * G) * (mu * eta + 2.0 * G) / (mu * mu * r * r) +
         (2.0 * G * G + 4.0 * G * eta * (mu + L)) / (mu * r * r * r) +
         G * G * (mu + L) / (mu * mu * r * r * r * r);
}

double nominal_rate_bound(long T, const BoundParams& p) {
  if (T < 1) throw std::invalid_argument("nominal_rate_bound needs T >= 1");
  return clamp_term(T, p);
}

double nominal_distance_to_average_bound(long t, const BoundParams& p) {
  if (t < 0) throw std::invalid_argument("g(t) needs t >= 0");
  const double r = 1.0 - p.rho;
  const double tail = 2.0 * p.eta * std::pow(p.rho, static_cast<double>(t)) +
                      std::pow(p.rho, static_cast<double>(half(t))) * p.G *
                          theorem_stepsize(0, p.mu) / r +
                      p.G * theorem_stepsize(half(t), p.mu) / r;
  return std::min(2.0 * p.eta, tail);
}

double expected_gap_bound_Tf(long t, long m, const BoundParams& p) {
  if (m < p.T0 || m > t - 1)
    throw std::invalid_argument("m = " + std::to_string(m) + " outside [T0, t-1]");
  return clamp_term(t - m, p) + 4.0 * p.eta * p.eta * std::min(pe(m, p), 1.0);
}

double expected_gap_bound_best(long t, const BoundParams& p) {
  if (t - 1 < p.T0) throw std::invalid_argument("need t >= T0 + 1");
  double best = INFINITY;
  for (long m = p.T0; m <= t - 1; ++m) best = std::min(best, expected_gap_bound_Tf(t, m, p));
  return best;
}

double corollary_bound_window(long t, const BoundParams& p) {
  return expected_gap_bound_Tf(t, p.T0, p);
}

double corollary_bound_midpoint(long t, const BoundParams& p) {
  if (t - 1 < p.T0) throw std::invalid_argument("need t >= T0 + 1");
  const double cap = 4.0 * p.eta * p.eta;
  const long s = half(t - p.T0);
  double first = cap;
  if (s >= 1) {
    const double span = static_cast<double>(t - p.T0);
    first = std::min(cap, 16.0 * h_bar(s, p) / (p.mu * span * (span + 2.0)));
  }
  const long m = half(t + p.T0) - 1;
  const double miss = m < 0 ? 1.0 : std::min(pe(m, p), 1.0);
  return first + cap * miss;
}

std::optional<double> corollary_bound_log(long t, const BoundParams& p) {
  if (t < 2) return std::nullopt;
  const double e2 = std::min(p.E_L * p.E_L, p.E_M * p.E_M);
  const long m = static_cast<long>(std::ceil(std::log(static_cast<double>(t)) / (2.0 * e2)));
  if (m < p.T0 || m > t - 1) return std::nullopt;
  return clamp_term(t - m, p) +
         4.0 * p.eta * p.eta * static_cast<double>(p.D_L + p.D_M) / static_cast<double>(t);
}

double delta_M(long t, const BoundParams& p) {
  if (t < p.T0) throw std::invalid_argument("delta_M needs t >= T0");
  const double r = 1.0 - p.rho;
  const long k = t - p.T0;
  return 2.0 * p.eta * std::pow(p.rho, static_cast<double>(k)) +
         (2.0 * p.eta * std::sqrt(pc(p.T0, p)) + p.G * theorem_stepsize(0, p.mu)) *
             std::pow(p.rho, static_cast<double>(half(k))) / r +
         2.0 * (p.eta * std::sqrt(pc(half(t + p.T0), p)) + p.G * theorem_stepsize(half(k), p.mu)) / r;
}

double C1_tilde(long T0, double E, long D, const BoundParams& p) {
  const double mu = p.mu, L = p.L, G = p.G, eta = p.eta;
  const double r = 1.0 - p.rho;
  const double E2 = E * E;
  const double decay = std::exp(-static_cast<double>(T0) * E2);
  const double sqrtD = std::sqrt(static_cast<double>(D));
  const double q = -std::expm1(-E2);
  return 16.0 * eta * decay * sqrtD / r *
         (G / (q * q) + (G + (eta + 4.0 / mu) * (mu + L)) / (r * r) +
          (mu + L) * (G + 2.0 * mu * sqrtD * decay) / (mu * r * r * r));
}

double C2_tilde(long T0, double E, long D, const BoundParams& p) {
  const double mu = p.mu, L = p.L, G = p.G, eta = p.eta;
  const double E2 = E * E;
  const double v = std::exp(-2.0 * E2);
  const double q = -std::expm1(-2.0 * E2);
  return 4.0 * eta * (L + 1.0) * static_cast<double>(D) *
         std::exp(-2.0 * static_cast<double>(T0) * E2) / q *
         (4.0 * eta * v / (q * q) + (6.0 * eta + G / mu) * v / q + 4.0 * eta +
          4.0 * eta * L / (mu * mu) + G / mu);
}

double C_M_direct(long T0, const BoundParams& p) {
  if (T0 < 0) throw std::invalid_argument("C_M needs T0 >= 0");
  const double C1 = C1_tilde(T0, p.E_L, p.D_L, p) + C1_tilde(T0, p.E_M, p.D_M, p);
  const double C2 = C2_tilde(T0, p.E_L, p.D_L, p) + C2_tilde(T0, p.E_M, p.D_M, p);
  return 2.0 * C1 + p.mu * C2;
}

namespace {

// Minimal arithmetic expression tree; an independent transcription of C̃₁, C̃₂.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Op { constant, variable, add, sub, mul, div, exp, sqrt, pow } op;
  double value = 0.0;
  std::string name;
  ExprPtr lhs, rhs;

  double eval(const std::map<std::string, double>& env) const {
    switch (op) {
      case Op::constant: return value;
      case Op::variable: {
        const auto it = env.find(name);
        if (it == env.end()) throw std::logic_error("unbound variable " + name);
        return it->second;
      }
      case Op::add: return lhs->eval(env) + rhs->eval(env);
      case Op::sub: return lhs->eval(env) - rhs->eval(env);
      case Op::mul: return lhs->eval(env) * rhs->eval(env);
      case Op::div: return lhs->eval(env) / rhs->eval(env);
      case Op::exp: return std::exp(lhs->eval(env));
      case Op::sqrt: return std::sqrt(lhs->eval(env));
      case Op::pow: return std::pow(lhs->eval(env), rhs->eval(env));
    }
    return 0.0;
  }
};

ExprPtr num(double v) { return std::make_shared<Expr>(Expr{Expr::Op::constant, v, {}, {}, {}}); }
ExprPtr var(std::string n) {
  return std::make_shared<Expr>(Expr{Expr::Op::variable, 0.0, std::move(n), {}, {}});
}
ExprPtr node(Expr::Op op, ExprPtr a, ExprPtr b = {}) {
  return std::make_shared<Expr>(Expr{op, 0.0, {}, std::move(a), std::move(b)});
}
ExprPtr operator+(ExprPtr a, ExprPtr b) { return node(Expr::Op::add, std::move(a), std::move(b)); }
ExprPtr operator-(ExprPtr a, ExprPtr b) { return node(Expr::Op::sub, std::move(a), std::move(b)); }
ExprPtr operator*(ExprPtr a, ExprPtr b) { return node(Expr::Op::mul, std::move(a), std::move(b)); }
ExprPtr operator/(ExprPtr a, ExprPtr b) { return node(Expr::Op::div, std::move(a), std::move(b)); }
ExprPtr ex(ExprPtr a) { return node(Expr::Op::exp, std::move(a)); }
ExprPtr sq(ExprPtr a) { return node(Expr::Op::sqrt, std::move(a)); }
ExprPtr pw(ExprPtr a, double k) { return node(Expr::Op::pow, std::move(a), num(k)); }

const ExprPtr& c1_tree() {
  static const ExprPtr tree = [] {
    auto eta = var("eta"), mu = var("mu"), L = var("L"), G = var("G"), rho = var("rho");
    auto T0 = var("T0"), E = var("E"), D = var("D");
    auto one = num(1.0);
    auto E2 = E * E;
    auto omr = one - rho;
    auto lead = num(16.0) * eta * ex(num(0.0) - T0 * E2) * sq(D) / omr;
    auto a = G / pw(one - ex(num(0.0) - E2), 2.0);
    auto b = (G + (eta + num(4.0) / mu) * (mu + L)) / pw(omr, 2.0);
    auto c = (mu + L) * (G + num(2.0) * mu * sq(D) * ex(num(0.0) - T0 * E2)) / (mu * pw(omr, 3.0));
    return lead * (a + b + c);
  }();
  return tree;
}

const ExprPtr& c2_tree() {
  static const ExprPtr tree = [] {
    auto eta = var("eta"), mu = var("mu"), L = var("L"), G = var("G");
    auto T0 = var("T0"), E = var("E"), D = var("D");
    auto one = num(1.0);
    auto v = ex(num(-2.0) * E * E);
    auto q = one - v;
    auto lead = num(4.0) * eta * (L + one) * D * ex(num(-2.0) * T0 * E * E) / q;
    auto bracket = num(4.0) * eta * v / pw(q, 2.0) + (num(6.0) * eta + G / mu) * v / q +
                   num(4.0) * eta + num(4.0) * eta * L / pw(mu, 2.0) + G / mu;
    return lead * bracket;
  }();
  return tree;
}

}  // namespace

double C_M_expression(long T0, const BoundParams& p) {
  if (T0 < 0) throw std::invalid_argument("C_M needs T0 >= 0");
  std::map<std::string, double> env{{"eta", p.eta}, {"mu", p.mu}, {"L", p.L},
                                    {"G", p.G},     {"rho", p.rho}, {"T0", static_cast<double>(T0)}};
  auto term = [&](const ExprPtr& tree, double E, long D) {
    env["E"] = E;
    env["D"] = static_cast<double>(D);
    return tree->eval(env);
  };
  const double C1 = term(c1_tree(), p.E_L, p.D_L) + term(c1_tree(), p.E_M, p.D_M);
  const double C2 = term(c2_tree(), p.E_L, p.D_L) + term(c2_tree(), p.E_M, p.D_M);
  return 2.0 * C1 + p.mu * C2;
}

double C_M(long T0, const BoundParams& p) {
  const double a = C_M_direct(T0, p);
  const double b = C_M_expression(T0, p);
  if (std::abs(a - b) > 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}))
    throw std::logic_error("C_M transcriptions disagree: " + std::to_string(a) + " vs " +
                           std::to_string(b));
  return a;
}

double tightened_gap_bound(long T, const BoundParams& p) {
  if (T <= p.T0) throw std::invalid_argument("tightened_gap_bound needs T > T0");
  const double s = static_cast<double>(T - p.T0);
  return std::min(4.0 * p.eta * p.eta,
                  (4.0 * h_bar(T - p.T0, p) + C_M(p.T0, p)) / (p.mu * s * (s + 1.0)));
}

double h_M(long t, const BoundParams& p) {
  const double g = theorem_stepsize(t - p.T0, p.mu);
  return 4.0 * p.eta * p.eta * pc(t, p) *
         (2.0 * (p.L + 1.0) + g * g * p.L * p.L + g * p.G * (p.L + 1.0) / (2.0 * p.eta));
}

double h_tilde_M(long t, const BoundParams& p) {
  const double g = theorem_stepsize(t - p.T0, p.mu);
  const double d = delta_M(t, p);
  return g * p.G * p.G + 2.0 * p.G * d + (p.mu + p.L) * d * d;
}

TightenedDiagnostics tightened_gap_diagnostics(long T, const BoundParams& p) {
  if (T <= p.T0) throw std::invalid_argument("diagnostics need T > T0");
  TightenedDiagnostics out;
  for (long t = p.T0; t < T; ++t) {
    const double k = static_cast<double>(t - p.T0);
    out.weighted_h_tilde += (k + 1.0) * h_tilde_M(t, p);
    out.weighted_h_M += (k + 1.0) * (k + 2.0) * h_M(t, p);
  }
  const double s = static_cast<double>(T - p.T0);
  const double C1 = C1_tilde(p.T0, p.E_L, p.D_L, p) + C1_tilde(p.T0, p.E_M, p.D_M, p);
  out.h_tilde_cap = 2.0 * h_bar(T - p.T0, p) + C1;
  out.h_M_cap = C2_tilde(p.T0, p.E_L, p.D_L, p) + C2_tilde(p.T0, p.E_M, p.D_M, p);
  out.summed_bound = 2.0 * out.weighted_h_tilde / (p.mu * s * (s + 1.0)) +
                     out.weighted_h_M / (s * (s + 1.0));
  out.closed_form = (4.0 * h_bar(T - p.T0, p) + C_M(p.T0, p)) / (p.mu * s * (s + 1.0));
  return out;
}

BoundCurve make_curve(std::string name, std::span<const long> grid,
                      const std::function<std::optional<double>(long)>& f, double cap) {
  BoundCurve curve{std::move(name), {}, {}};
  for (long t : grid) {
    const auto v = f(t);
    if (!v) continue;
    curve.grid.push_back(t);
    curve.values.push_back(std::min(cap, std::max(0.0, *v)));
  }
  return curve;
}

std::vector<BoundCurve> standard_curves(const BoundParams& p, std::span<const long> grid) {
  const double cap = 4.0 * p.eta * p.eta;
  auto after_window = [&](auto fn) {
    return [&p, fn](long t) -> std::optional<double> {
      if (t < p.T0 + 1 || t < 1) return std::nullopt;
      return fn(t, p);
    };
  };
  std::vector<BoundCurve> curves;
  curves.push_back(make_curve(
      "thm1", grid,
      [&](long t) -> std::optional<double> {
        if (t < 1) return std::nullopt;
        return nominal_rate_bound(t, p);
      },
      cap));
  curves.push_back(make_curve("cor5a", grid, after_window(corollary_bound_window), cap));
  curves.push_back(make_curve("cor5b", grid, after_window(corollary_bound_midpoint), cap));
  curves.push_back(
      make_curve("cor5c", grid, [&](long t) { return corollary_bound_log(t, p); }, cap));
  curves.push_back(make_curve("thm9", grid, after_window(tightened_gap_bound), cap));
  return curves;
}

std::optional<double> value_at(const BoundCurve& curve, long t) {
  const auto it = std::lower_bound(curve.grid.begin(), curve.grid.end(), t);
  if (it == curve.grid.end() || *it != t) return std::nullopt;
  return curve.values[static_cast<std::size_t>(it - curve.grid.begin())];
}

void write_bound_csv(std::ostream& out, std::span<const BoundCurve> curves) {
  out << "t,name,value\n";
  for (const auto& c : curves)
    for (std::size_t k = 0; k < c.grid.size(); ++k)
      out << c.grid[k] << ',' << c.name << ',' << format_double(c.values[k]) << '\n';
}

ContractionReport perturbed_contraction_check(const ContractionCase& c) {
  const int n = static_cast<int>(c.W.rows());
  if (n < 1 || c.W.cols() != n) throw std::invalid_argument("W must be square and nonempty");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  if ((c.W * ones - ones).cwiseAbs().maxCoeff() > 1e-10 ||
      (c.W.transpose() * ones - ones).cwiseAbs().maxCoeff() > 1e-10 || c.W.minCoeff() < -1e-15)
    throw std::invalid_argument("W is not doubly stochastic");
  if (!(c.rho >= 0.0 && c.rho < 1.0)) throw std::invalid_argument("rho must lie in [0,1)");
  if (!c.delta) throw std::invalid_argument("missing perturbation budget");
  if (c.trials < 2 || c.horizon < 0 || c.dim < 1) throw std::invalid_argument("bad trial setup");
  for (long t = 1; t <= c.horizon; ++t)
    if (c.delta(t) > c.delta(t - 1) || c.delta(t) < 0.0)
      throw std::invalid_argument("delta must be nonnegative and nonincreasing");

  const long H = c.horizon;
  std::vector<double> s1(H + 1, 0.0), s2(H + 1, 0.0), q1(H + 1, 0.0), q2(H + 1, 0.0);
  Eigen::MatrixXd X(c.dim, n), next(c.dim, n);
  for (int trial = 0; trial < c.trials; ++trial) {
    SplitMix64 rng(derive_seed(c.seed, static_cast<std::uint64_t>(trial)));
    for (int j = 0; j < n; ++j) {
      // Start on the sphere of radius η to stress the 2ηρ^t term.
      Eigen::VectorXd v(c.dim);
      do {
        for (int k = 0; k < c.dim; ++k) v(k) = rng.uniform(-1.0, 1.0);
      } while (v.norm() < 1e-3);
      X.col(j) = c.eta * v / v.norm();
    }
    for (long t = 0;; ++t) {
      const Eigen::VectorXd mean = X.rowwise().mean();
      double d1 = 0.0, d2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double r = (X.col(j) - mean).norm();
        d1 += r;
        d2 += r * r;
      }
      d1 /= n;
      d2 /= n;
      s1[t] += d1;
      q1[t] += d1 * d1;
      s2[t] += d2;
      q2[t] += d2 * d2;
      if (t == H) break;
      next.noalias() = X * c.W.transpose();
      const double a = c.delta(t) * std::sqrt(3.0 / c.dim);
      if (a > 0.0)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < c.dim; ++k) next(k, j) += rng.uniform(-a, a);
      X.swap(next);
    }
  }

  ContractionReport report;
  const double N = static_cast<double>(c.trials);
  const double r = 1.0 - c.rho;
  for (long t = 0; t <= H; ++t) {
    const double m1 = s1[t] / N, m2 = s2[t] / N;
    const double se1 = std::sqrt(std::max(0.0, q1[t] / N - m1 * m1) / (N - 1.0));
    const double se2 = std::sqrt(std::max(0.0, q2[t] / N - m2 * m2) / (N - 1.0));
    const double b = 2.0 * c.eta * std::pow(c.rho, static_cast<double>(t)) +
                     c.delta(0) * std::pow(c.rho, static_cast<double>(t / 2)) / r +
                     c.delta(t / 2) / r;
    report.times.push_back(t);
    report.mean_distance.push_back(m1);
    report.mean_square.push_back(m2);
    report.se_distance.push_back(se1);
    report.se_square.push_back(se2);
    report.bound.push_back(b);
    if (m1 > b + 3.0 * se1 || m2 > b * b + 3.0 * se2) {
      ++report.violations;
      if (!report.first_violation) report.first_violation = t;
    }
  }
  return report;
}

}  // namespace trustopt
