#include "trustopt/problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "trustopt/csv.hpp"

namespace trustopt {

namespace {

void check_dim(const QuadraticObjective& obj, Eigen::Index n) {
  if (obj.a.size() != n)
    throw std::invalid_argument("dimension mismatch: objective has d=" +
                                std::to_string(obj.a.size()) + ", point has " +
                                std::to_string(n));
}

struct Normal {
  Eigen::MatrixXd H;
  Vector c;
};

// Hessian and linear term of mean f_i: ½xᵀHx − cᵀx + const.
Normal normal_equations(std::span<const QuadraticObjective> objectives) {
  if (objectives.empty()) throw std::invalid_argument("no objectives");
  const int d = objectives.front().dim();
  Normal ne{Eigen::MatrixXd::Zero(d, d), Vector::Zero(d)};
  for (const auto& o : objectives) {
    check_dim(o, d);
    ne.H += o.a * o.a.transpose() + o.lambda * Eigen::MatrixXd::Identity(d, d);
    ne.c += o.a * o.b;
  }
  const double n = static_cast<double>(objectives.size());
  ne.H /= n;
  ne.c /= n;
  return ne;
}

}  // namespace

BoxConstraint::BoxConstraint(double eta_, int dim_) : eta(eta_), dim(dim_) {
  if (!(eta > 0.0)) throw std::invalid_argument("box half-width must be positive");
  if (dim < 1) throw std::invalid_argument("box dimension must be positive");
}

double BoxConstraint::norm_radius() const { return eta * std::sqrt(static_cast<double>(dim)); }

bool BoxConstraint::contains(const Vector& x, double tol) const {
  return x.size() == dim && x.cwiseAbs().maxCoeff() <= eta + tol;
}

Vector gradient(const QuadraticObjective& obj, const Vector& x) {
  Vector g(x.size());
  gradient_into(obj, x, g);
  return g;
}

void gradient_into(const QuadraticObjective& obj, const Eigen::Ref<const Vector>& x,
                   Eigen::Ref<Vector> out) {
  check_dim(obj, x.size());
  const double r = obj.a.dot(x) - obj.b;
  out = obj.a * r + obj.lambda * x;
}

double evaluate_objective(const QuadraticObjective& obj, const Vector& x) {
  check_dim(obj, x.size());
  const double r = obj.a.dot(x) - obj.b;
  return 0.5 * r * r + 0.5 * obj.lambda * x.squaredNorm();
}

Vector project_box(const Vector& y, const BoxConstraint& box) {
  if (y.size() != box.dim) throw std::invalid_argument("dimension mismatch in projection");
  return y.cwiseMax(-box.eta).cwiseMin(box.eta);
}

void project_box_inplace(Eigen::Ref<Vector> y, double eta) {
  y = y.cwiseMax(-eta).cwiseMin(eta);
}

Vector unconstrained_optimum(std::span<const QuadraticObjective> objectives) {
  const Normal ne = normal_equations(objectives);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ne.H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ne.H.norm()))
    throw std::domain_error("singular normal equations: λ = 0 and Σ a aᵀ rank-deficient");
  return ldlt.solve(ne.c);
}

Vector optimal_point(std::span<const QuadraticObjective> objectives, const BoxConstraint& box) {
  const Vector uc = unconstrained_optimum(objectives);
  if (uc.size() != box.dim) throw std::invalid_argument("dimension mismatch with box");
  return project_box(uc, box);
}

Vector constrained_optimum(std::span<const QuadraticObjective> objectives,
                           const BoxConstraint& box) {
  const Normal ne = normal_equations(objectives);
  const int d = static_cast<int>(ne.c.size());
  if (d != box.dim) throw std::invalid_argument("dimension mismatch with box");
  (void)unconstrained_optimum(objectives);  // rejects singular systems

  // Primal active-set: state per coordinate is free (0), at −η (−1) or +η (+1).
  std::vector<int> state(d, 0);
  Vector x = Vector::Zero(d);
  for (int iter = 0; iter < 100 * (d + 1); ++iter) {
    std::vector<int> free;
    for (int k = 0; k < d; ++k)
      if (state[k] == 0) free.push_back(k);
    Vector target = x;
    for (int k = 0; k < d; ++k)
      if (state[k] != 0) target(k) = state[k] * box.eta;
    if (!free.empty()) {
      const int nf = static_cast<int>(free.size());
      Eigen::MatrixXd Hff(nf, nf);
      Vector rhs(nf);
      for (int r = 0; r < nf; ++r) {
        rhs(r) = ne.c(free[r]);
        for (int k = 0; k < d; ++k)
          if (state[k] != 0) rhs(r) -= ne.H(free[r], k) * target(k);
        for (int s = 0; s < nf; ++s) Hff(r, s) = ne.H(free[r], free[s]);
      }
      const Vector sol = Hff.ldlt().solve(rhs);
      for (int r = 0; r < nf; ++r) target(free[r]) = sol(r);
    }
    // Step from x toward target, stopping at the first bound that blocks.
    const Vector step = target - x;
    double alpha = 1.0;
    int blocking = -1;
    for (int k : free) {
      if (step(k) > 0 && x(k) + step(k) > box.eta) {
        const double a = (box.eta - x(k)) / step(k);
        if (a < alpha) alpha = a, blocking = k;
      } else if (step(k) < 0 && x(k) + step(k) < -box.eta) {
        const double a = (-box.eta - x(k)) / step(k);
        if (a < alpha) alpha = a, blocking = k;
      }
    }
    x += alpha * step;
    if (blocking >= 0) {
      state[blocking] = x(blocking) > 0 ? 1 : -1;
      x(blocking) = state[blocking] * box.eta;
      continue;
    }
    // Subproblem solved: release the bound with the most negative multiplier.
    const Vector g = ne.H * x - ne.c;
    int release = -1;
    double worst = 1e-12 * std::max(1.0, ne.c.lpNorm<Eigen::Infinity>());
    for (int k = 0; k < d; ++k) {
      if (state[k] == 0) continue;
      // At +η optimality needs g ≤ 0, at −η it needs g ≥ 0.
      const double violation = state[k] * g(k);
      if (violation > worst) worst = violation, release = k;
    }
    if (release < 0) return x;
    state[release] = 0;
  }
  throw std::runtime_error("box QP active-set solver did not converge");
}

ProblemConstants regularity_constants(std::span<const QuadraticObjective> objectives,
                                      const BoxConstraint& box) {
  if (objectives.empty()) throw std::invalid_argument("no objectives");
  const double r = box.norm_radius();
  ProblemConstants c;
  c.mu = std::numeric_limits<double>::infinity();
  for (const auto& o : objectives) {
    check_dim(o, box.dim);
    const double a2 = o.a.squaredNorm();
    const double min_eig = box.dim == 1 ? a2 : 0.0;
    c.mu = std::min(c.mu, o.lambda + min_eig);
    c.L = std::max(c.L, o.lambda + a2);
    const double an = std::sqrt(a2);
    c.G = std::max(c.G, an * (an * r + std::abs(o.b)) + o.lambda * r);
  }
  c.strongly_convex = c.mu > 0.0;
  return c;
}

Problem parse_problem(std::istream& in) {
  Problem p;
  int d = -1;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double eta = std::numeric_limits<double>::quiet_NaN();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error("problem line " + std::to_string(line_no) + ": " + what);
    };
    if (first == "d" || first == "lambda" || first == "eta") {
      if (!p.objectives.empty()) fail("header keys must precede agent rows");
      double v;
      if (!(ls >> v)) fail("missing value for " + first);
      if (first == "d") d = static_cast<int>(v);
      else if (first == "lambda") lambda = v;
      else eta = v;
      continue;
    }
    if (d < 1 || std::isnan(lambda) || std::isnan(eta)) fail("d, lambda and eta must precede rows");
    std::vector<double> row;
    try {
      row.push_back(std::stod(first));
    } catch (const std::exception&) {
      fail("unknown key '" + first + "'");
    }
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) fail("non-numeric token in agent row");
    if (static_cast<int>(row.size()) != d + 1)
      fail("expected " + std::to_string(d + 1) + " numbers, got " + std::to_string(row.size()));
    QuadraticObjective o;
    o.a = Eigen::Map<Vector>(row.data(), d);
    o.b = row.back();
    o.lambda = lambda;
    p.objectives.push_back(std::move(o));
  }
  if (p.objectives.empty()) throw std::runtime_error("problem file has no agent rows");
  if (lambda < 0.0) throw std::runtime_error("lambda must be nonnegative");
  p.box = BoxConstraint(eta, d);
  return p;
}

Problem read_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open problem file " + path);
  try {
    return parse_problem(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_problem(std::ostream& out, const Problem& problem) {
  out << "d " << problem.box.dim << "\nlambda " << format_shortest(problem.objectives.front().lambda)
      << "\neta " << format_shortest(problem.box.eta) << '\n';
  for (const auto& o : problem.objectives) {
    for (Eigen::Index k = 0; k < o.a.size(); ++k) out << format_shortest(o.a(k)) << ' ';
    out << format_shortest(o.b) << '\n';
  }
}

std::vector<double> reference_offsets() {
  return {115.7, 163.3, -81.7, 127.2, -63.7, 58.4, -3.1, 62.9,
          54.5,  144.9, -121.1, 9.3,  -2.6, -124.5, 131.0};
}

Problem consensus_problem() {
  Problem p;
  p.box = BoxConstraint(50.0, 1);
  for (double b : reference_offsets()) p.objectives.push_back({Vector::Ones(1), b, 0.0});
  return p;
}

Problem ridge5_problem(double lambda) {
  static constexpr double kRows[15][5] = {
      {-0.87, -1.05, -2.81, -0.4, -1.76}, {-0.88, -0.34, 0.34, -2.46, 0.44},
      {-0.25, 0.47, -0.09, -0.99, -2.33}, {-0.27, -0.61, -2.5, -0.79, 0.46},
      {-0.23, 1.83, 0.89, -0.83, -0.67},  {-1.6, 0.27, -0.81, -2.77, -0.21},
      {-1.42, -1.11, -1.63, -0.66, -1.54}, {-1.19, -0.3, -1.97, -1.42, -1.21},
      {-1.43, -1.64, 0.17, -2.11, -2.11}, {-0.73, 0.46, -0.42, -1.75, 0.22},
      {-0.97, -0.12, -2.35, -2.51, -1.63}, {-1.18, -1.42, -0.13, -1.66, 0.36},
      {-0.63, -2.19, -1.15, -1.65, -2.02}, {0.59, -2.08, 0.26, -0.74, -2.66},
      {-3.05, -0.7, 0.2, -1.94, -1.4}};
  Problem p;
  p.box = BoxConstraint(50.0, 5);
  const auto b = reference_offsets();
  for (int i = 0; i < 15; ++i) {
    Vector a(5);
    for (int k = 0; k < 5; ++k) a(k) = kRows[i][k];
    p.objectives.push_back({a, 2.0 * b[i], lambda});
  }
  return p;
}

}  // namespace trustopt
