#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trustopt/network.hpp"
#include "trustopt/problem.hpp"

namespace trustopt {

/// Constants entering the closed-form bounds. `eta` is a norm radius: every
/// x ∈ X satisfies ‖x‖ ≤ eta.
struct BoundParams {
  double mu = 1.0;
  double L = 1.0;
  double G = 1.0;
  double eta = 1.0;
  double rho = 0.5;
  double E_L = 0.1;
  double E_M = -0.1;
  long D_L = 0;
  long D_M = 0;
  long T0 = 0;

  /// Throws std::invalid_argument unless mu > 0, 0 <= rho < 1, E_L > 0 > E_M.
  void validate() const;
};

/// Norm radius defaults to η√d; pass the box half-width for d = 1.
BoundParams make_bound_params(const ProblemConstants& constants, double norm_radius, double rho,
                              double E_L, double E_M, DegreeCounts degrees, long T0);

/// γ(k) = 2/(μ(k+2)), zero for k < 0.
double theorem_stepsize(long k, double mu);

double h_bar(long T, const BoundParams& p);

/// min{4η², 4h̄(T)/(μT(T+1))}.
double nominal_rate_bound(long T, const BoundParams& p);

/// g(t): bound on the mean distance to the average under the nominal dynamic.
double nominal_distance_to_average_bound(long t, const BoundParams& p);

/// min{4η², 4h̄(t−m)/(μ(t−m)(t−m+1))} + 4η² min{p_e(m), 1} for T0 <= m <= t−1.
double expected_gap_bound_Tf(long t, long m, const BoundParams& p);

/// The same bound minimized over every admissible m.
double expected_gap_bound_best(long t, const BoundParams& p);

/// m = T0.
double corollary_bound_window(long t, const BoundParams& p);
/// m = ⌊(t+T0)/2⌋ in the halved-argument form.
double corollary_bound_midpoint(long t, const BoundParams& p);
/// m = ⌈ln t / (2 min{E_L², E_M²})⌉ with the (D_L+D_M)/t tail; empty when
/// m falls outside [T0, t−1].
std::optional<double> corollary_bound_log(long t, const BoundParams& p);

double delta_M(long t, const BoundParams& p);

double C1_tilde(long T0, double E, long D, const BoundParams& p);
double C2_tilde(long T0, double E, long D, const BoundParams& p);

/// 2C₁(T0) + μC₂(T0). Evaluated by two independent transcriptions that must agree.
double C_M(long T0, const BoundParams& p);
double C_M_direct(long T0, const BoundParams& p);
double C_M_expression(long T0, const BoundParams& p);

/// min{4η², (4h̄(T−T0) + C_M(T0)) / (μ(T−T0)(T−T0+1))}, T > T0.
double tightened_gap_bound(long T, const BoundParams& p);

double h_M(long t, const BoundParams& p);
double h_tilde_M(long t, const BoundParams& p);

/// Intermediate sums behind tightened_gap_bound.
struct TightenedDiagnostics {
  double weighted_h_tilde = 0.0;  // Σ_{t=T0}^{T−1} (t−T0+1) h̃_M(t)
  double weighted_h_M = 0.0;      // Σ_{t=T0}^{T−1} (t−T0+1)(t−T0+2) h_M(t)
  double h_tilde_cap = 0.0;       // 2h̄(T−T0) + C₁(T0)
  double h_M_cap = 0.0;           // C₂(T0)
  double summed_bound = 0.0;      // bound before the closed-form caps
  double closed_form = 0.0;       // tightened_gap_bound(T) without the 4η² clamp
};

TightenedDiagnostics tightened_gap_diagnostics(long T, const BoundParams& p);

struct BoundCurve {
  std::string name;
  std::vector<long> grid;
  std::vector<double> values;
};

/// Evaluates `f` on every grid point where it is defined and clamps at cap.
BoundCurve make_curve(std::string name, std::span<const long> grid,
                      const std::function<std::optional<double>(long)>& f, double cap);

/// thm1, cor5a, cor5b, cor5c and thm9 on `grid`, each restricted to its domain.
std::vector<BoundCurve> standard_curves(const BoundParams& p, std::span<const long> grid);

std::optional<double> value_at(const BoundCurve& curve, long t);

/// CSV with header `t,name,value`.
void write_bound_csv(std::ostream& out, std::span<const BoundCurve> curves);

struct ContractionCase {
  Eigen::MatrixXd W;                      // doubly stochastic
  double rho = 0.0;                       // upper bound on σ₂(W)
  double eta = 1.0;                       // initial columns lie in the η-ball
  int dim = 1;
  std::function<double(long)> delta;      // nonincreasing δ(t)
  long horizon = 50;
  int trials = 1000;
  std::uint64_t seed = 1;
};

struct ContractionReport {
  std::vector<long> times;
  std::vector<double> mean_distance;     // mean over trials of (1/n)Σ‖X_j − X̄‖
  std::vector<double> mean_square;       // mean over trials of (1/n)Σ‖X_j − X̄‖²
  std::vector<double> se_distance;
  std::vector<double> se_square;
  std::vector<double> bound;             // 2ηρ^t + δ(0)ρ^{t/2}/(1−ρ) + δ(t/2)/(1−ρ)
  long violations = 0;
  std::optional<long> first_violation;   // earliest t exceeding bound + 3σ̂
};

/// Simulates X(t+1) = X(t)Wᵀ + Δ(t) with E‖Δ_i(t)‖² = δ²(t) and checks both
/// distance-to-average conclusions with 3σ̂ slack.
ContractionReport perturbed_contraction_check(const ContractionCase& c);

}  // namespace trustopt
