#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trustopt/network.hpp"

namespace trustopt {

/// Stochastic trust observations: α_ij is uniform on
/// [mean - spread/2, mean + spread/2] with mean 0.5 + E_L for a legitimate
/// neighbor and 0.5 + E_M for a malicious one.
struct TrustModel {
  TrustModel(double e_legit, double e_malicious, double spread, std::uint64_t seed);

  double mean(bool target_is_malicious) const {
    return 0.5 + (target_is_malicious ? E_M : E_L);
  }

  double E_L;
  double E_M;
  double spread;
  std::uint64_t seed;
};

/// Draw of α_ij(t). Each directed edge owns a counter-based substream keyed by
/// (seed, i, j) and indexed by the round, so draws do not depend on the order
/// in which edges or runs are processed.
double sample_alpha(const TrustModel& model, int i, int j, bool target_is_malicious, long round);

struct MonitoredEdge {
  int from;  // legitimate observer i
  int to;    // neighbor j
};

/// β_ij(t) for every legitimate agent i and every neighbor j ∈ N_i.
class TrustState {
 public:
  explicit TrustState(const Topology& topology);

  long round() const { return round_; }
  double beta(int i, int j) const;

  /// Edges in the order `update` expects its observations.
  const std::vector<MonitoredEdge>& monitored_edges() const { return edges_; }
  std::span<const double> betas() const { return beta_; }

  /// Adds α - 0.5 to every β and advances the round. One observation per
  /// monitored edge, in monitored_edges() order.
  void update(std::span<const double> alphas);

  /// Index range [first, last) of agent i's edges in monitored_edges().
  std::pair<int, int> edge_range(int i) const { return {offsets_[i], offsets_[i + 1]}; }

 private:
  long round_ = 0;
  std::vector<MonitoredEdge> edges_;
  std::vector<int> offsets_;
  std::vector<double> beta_;
};

TrustState update_beta(TrustState state, std::span<const double> alphas);

struct ClassificationSnapshot {
  std::vector<std::vector<int>> trusted;  // N_i(t) per legitimate agent
  std::vector<int> d;                     // |N_i(t)| + 1
};

ClassificationSnapshot trusted_neighborhoods(const TrustState& state, const Topology& topology);

/// Overwrites `out` without releasing its storage.
void trusted_neighborhoods_into(const TrustState& state, const Topology& topology,
                                ClassificationSnapshot& out);

/// True if some legitimate neighbor is untrusted or some malicious one trusted.
bool has_misclassification(const ClassificationSnapshot& snapshot, const Topology& topology);

struct MisclassificationBounds {
  double p_c;
  double p_e;
  double edge_L;  // bound on Pr(β_ij(k) < 0), j legitimate
  double edge_M;  // bound on Pr(β_ij(k) >= 0), j malicious
};

MisclassificationBounds error_bounds(long k, long D_L, long D_M, double E_L, double E_M);
double p_c(long k, long D_L, long D_M, double E_L, double E_M);
double p_e(long k, long D_L, long D_M, double E_L, double E_M);

/// Correct classification time over rounds 0..history.size()-1; empty if the
/// last round still holds a misclassification.
std::optional<long> detect_Tf(std::span<const ClassificationSnapshot> history,
                              const Topology& topology);

}  // namespace trustopt
