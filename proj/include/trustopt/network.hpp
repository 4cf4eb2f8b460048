#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace trustopt {

/// Undirected communication graph with a legitimate/malicious partition.
///
/// Agents are indexed 0..n-1 with the legitimate agents first, so agent i is
/// legitimate iff i < n_legitimate(). Construction rejects self-loops,
/// out-of-range endpoints and a disconnected legitimate subgraph.
class Topology {
 public:
  Topology(int n_legitimate, int n_malicious,
           std::vector<std::pair<int, int>> edges);

  int n_legitimate() const { return n_legitimate_; }
  int n_malicious() const { return n_malicious_; }
  int n_agents() const { return n_legitimate_ + n_malicious_; }

  bool is_legitimate(int agent) const { return agent < n_legitimate_; }
  bool is_malicious(int agent) const { return agent >= n_legitimate_; }

  std::vector<int> legitimate_ids() const;
  std::vector<int> malicious_ids() const;

  /// Sorted neighbor list N_i.
  const std::vector<int>& neighbors(int agent) const { return adjacency_[agent]; }
  bool has_edge(int a, int b) const;

  /// |N_i ∩ L| and |N_i ∩ M|.
  int legitimate_degree(int agent) const;
  int malicious_degree(int agent) const;

  /// Unordered edges, normalized to (lo, hi) and sorted.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

 private:
  int n_legitimate_;
  int n_malicious_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> adjacency_;
};

struct NominalWeights {
  Eigen::MatrixXd matrix;     // |L| x |L|
  double rho_L = 0.0;         // second largest eigenvalue modulus
  std::vector<int> d_L;       // |N_i ∩ L| + 1
};

struct DegreeCounts {
  long legitimate = 0;  // D_L
  long malicious = 0;   // D_M
};

NominalWeights nominal_weight_matrix(const Topology& topology);

/// Second largest eigenvalue modulus of a symmetric doubly stochastic matrix.
/// A 1x1 matrix has no second eigenvalue and yields 0.
double spectral_gap(const Eigen::MatrixXd& weights);

DegreeCounts degree_counts(const Topology& topology);

// Edge-list format:
//   agents <n_legit> <n_mal>
//   edge <i> <j>
// '#' starts a comment; indices are 0-based with legitimate agents first.
Topology parse_topology(std::istream& in);
Topology read_topology(const std::string& path);
void write_topology(std::ostream& out, const Topology& topology);

/// Legitimate ring 0..n-1 plus `n_chords` distinct chords drawn from `seed`.
std::vector<std::pair<int, int>> ring_with_chords(int n, int n_chords, std::uint64_t seed);

/// Adds malicious agents n_legit..n_legit+n_mal-1, each linked to every
/// legitimate agent.
Topology with_all_connected_malicious(int n_legitimate,
                                      std::vector<std::pair<int, int>> legit_edges,
                                      int n_malicious);

/// Stand-in for the 15-agent experimental graph: ring + 5 chords (seed 2023)
/// with `n_malicious` fully connected malicious agents.
Topology canonical_topology(int n_malicious);

}  // namespace trustopt
