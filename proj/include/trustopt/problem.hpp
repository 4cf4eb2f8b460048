#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace trustopt {

using Vector = Eigen::VectorXd;

/// f(x) = ½(aᵀx − b)² + (λ/2)‖x‖².
struct QuadraticObjective {
  Vector a;
  double b = 0.0;
  double lambda = 0.0;

  int dim() const { return static_cast<int>(a.size()); }
};

/// X = [−η, η]^d.
struct BoxConstraint {
  double eta = 1.0;
  int dim = 1;

  BoxConstraint() = default;
  BoxConstraint(double eta_, int dim_);

  /// Radius of the smallest origin-centred ball containing X (η√d).
  double norm_radius() const;
  bool contains(const Vector& x, double tol = 0.0) const;
};

struct ProblemConstants {
  double mu = 0.0;
  double L = 0.0;
  double G = 0.0;
  bool strongly_convex = false;
};

Vector gradient(const QuadraticObjective& obj, const Vector& x);
/// Allocation-free form used by the simulators.
void gradient_into(const QuadraticObjective& obj, const Eigen::Ref<const Vector>& x,
                   Eigen::Ref<Vector> out);
double evaluate_objective(const QuadraticObjective& obj, const Vector& x);

Vector project_box(const Vector& y, const BoxConstraint& box);
void project_box_inplace(Eigen::Ref<Vector> y, double eta);

/// (λI + mean a aᵀ)⁻¹ mean(a b). Throws if the system is singular.
Vector unconstrained_optimum(std::span<const QuadraticObjective> objectives);

/// Closed-form optimum: the unconstrained solution clipped coordinate-wise to
/// ±η. Exact when the Hessian is diagonal (e.g. d = 1); otherwise see
/// constrained_optimum.
Vector optimal_point(std::span<const QuadraticObjective> objectives, const BoxConstraint& box);

/// Exact minimizer of mean f_i over the box (active-set solve of the box QP).
Vector constrained_optimum(std::span<const QuadraticObjective> objectives,
                           const BoxConstraint& box);

ProblemConstants regularity_constants(std::span<const QuadraticObjective> objectives,
                                      const BoxConstraint& box);

/// Per-legitimate-agent objectives over a shared box.
struct Problem {
  std::vector<QuadraticObjective> objectives;
  BoxConstraint box;

  int dim() const { return box.dim; }
  int n_agents() const { return static_cast<int>(objectives.size()); }
};

// Problem file:
//   d <dim>
//   lambda <λ>
//   eta <η>
//   <a_1> ... <a_d> <b>      one row per legitimate agent
// '#' starts a comment.
Problem parse_problem(std::istream& in);
Problem read_problem(const std::string& path);
void write_problem(std::ostream& out, const Problem& problem);

/// b̃ values of the 15-agent experiments.
std::vector<double> reference_offsets();

/// 1-D constrained consensus: a_i = 1, λ = 0, b_i = b̃_i, η = 50.
Problem consensus_problem();

/// d = 5 regularized least squares: b_i = 2b̃_i, η = 50, reference a_i rows.
Problem ridge5_problem(double lambda = 0.5);

}  // namespace trustopt
