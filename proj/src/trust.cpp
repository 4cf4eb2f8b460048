#include "trustopt/trust.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "trustopt/rng.hpp"

namespace trustopt {

TrustModel::TrustModel(double e_legit, double e_malicious, double spread_, std::uint64_t seed_)
    : E_L(e_legit), E_M(e_malicious), spread(spread_), seed(seed_) {
  if (!(E_L > 0.0)) throw std::invalid_argument("E_L must be positive");
  if (!(E_M < 0.0)) throw std::invalid_argument("E_M must be negative");
  if (!(spread >= 0.0 && spread <= 1.0)) throw std::invalid_argument("spread must lie in [0,1]");
  for (double m : {mean(false), mean(true)}) {
    if (m - spread / 2 < 0.0 || m + spread / 2 > 1.0)
      throw std::invalid_argument("trust support [" + std::to_string(m - spread / 2) + ", " +
                                  std::to_string(m + spread / 2) + "] leaves [0,1]");
  }
}

double sample_alpha(const TrustModel& model, int i, int j, bool target_is_malicious, long round) {
  const double m = model.mean(target_is_malicious);
  if (model.spread == 0.0) return m;
  const std::uint64_t key =
      derive_seed(model.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
  const double u = counter_uniform(key, static_cast<std::uint64_t>(round));
  return m - model.spread / 2 + model.spread * u;
}

TrustState::TrustState(const Topology& topology) {
  const int n = topology.n_legitimate();
  offsets_.reserve(n + 1);
  for (int i = 0; i < n; ++i) {
    offsets_.push_back(static_cast<int>(edges_.size()));
    for (int j : topology.neighbors(i)) edges_.push_back({i, j});
  }
  offsets_.push_back(static_cast<int>(edges_.size()));
  beta_.assign(edges_.size(), 0.0);
}

double TrustState::beta(int i, int j) const {
  const auto [lo, hi] = edge_range(i);
  for (int e = lo; e < hi; ++e)
    if (edges_[e].to == j) return beta_[e];
  throw std::out_of_range("no monitored edge " + std::to_string(i) + "->" + std::to_string(j));
}

void TrustState::update(std::span<const double> alphas) {
  if (alphas.size() != beta_.size())
    throw std::invalid_argument("expected " + std::to_string(beta_.size()) +
                                " trust observations, got " + std::to_string(alphas.size()));
  for (std::size_t e = 0; e < beta_.size(); ++e) beta_[e] += alphas[e] - 0.5;
  ++round_;
}

TrustState update_beta(TrustState state, std::span<const double> alphas) {
  state.update(alphas);
  return state;
}

void trusted_neighborhoods_into(const TrustState& state, const Topology& topology,
                                ClassificationSnapshot& out) {
  const int n = topology.n_legitimate();
  out.trusted.resize(n);
  out.d.resize(n);
  const auto& edges = state.monitored_edges();
  const auto betas = state.betas();
  for (int i = 0; i < n; ++i) {
    auto& set = out.trusted[i];
    set.clear();
    const auto [lo, hi] = state.edge_range(i);
    for (int e = lo; e < hi; ++e)
      if (betas[e] >= 0.0) set.push_back(edges[e].to);
    out.d[i] = static_cast<int>(set.size()) + 1;
  }
}

ClassificationSnapshot trusted_neighborhoods(const TrustState& state, const Topology& topology) {
  ClassificationSnapshot out;
  trusted_neighborhoods_into(state, topology, out);
  return out;
}

bool has_misclassification(const ClassificationSnapshot& snapshot, const Topology& topology) {
  for (int i = 0; i < topology.n_legitimate(); ++i) {
    const auto& trusted = snapshot.trusted[i];
    // Correct iff the trusted set is exactly N_i ∩ L.
    if (static_cast<int>(trusted.size()) != topology.legitimate_degree(i)) return true;
    for (int j : trusted)
      if (topology.is_malicious(j)) return true;
  }
  return false;
}

double p_c(long k, long D_L, long D_M, double E_L, double E_M) {
  if (k < 0) return 0.0;
  const double kd = static_cast<double>(k);
  return D_L * std::exp(-2.0 * kd * E_L * E_L) + D_M * std::exp(-2.0 * kd * E_M * E_M);
}

double p_e(long k, long D_L, long D_M, double E_L, double E_M) {
  const double kd = static_cast<double>(k);
  auto term = [kd](long D, double E) {
    if (D == 0) return 0.0;
    return D * std::exp(-2.0 * kd * E * E) / -std::expm1(-2.0 * E * E);
  };
  return term(D_L, E_L) + term(D_M, E_M);
}

MisclassificationBounds error_bounds(long k, long D_L, long D_M, double E_L, double E_M) {
  const double kd = static_cast<double>(k);
  return {p_c(k, D_L, D_M, E_L, E_M), p_e(k, D_L, D_M, E_L, E_M),
          std::exp(-2.0 * kd * E_L * E_L), std::exp(-2.0 * kd * E_M * E_M)};
}

std::optional<long> detect_Tf(std::span<const ClassificationSnapshot> history,
                              const Topology& topology) {
  long last_bad = -1;
  for (std::size_t t = 0; t < history.size(); ++t)
    if (has_misclassification(history[t], topology)) last_bad = static_cast<long>(t);
  const long horizon = static_cast<long>(history.size());
  if (horizon > 0 && last_bad == horizon - 1) return std::nullopt;
  return last_bad + 1;
}

}  // namespace trustopt
