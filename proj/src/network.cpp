#include "trustopt/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "trustopt/rng.hpp"

namespace trustopt {

Topology::Topology(int n_legitimate, int n_malicious,
                   std::vector<std::pair<int, int>> edges)
    : n_legitimate_(n_legitimate), n_malicious_(n_malicious) {
  if (n_legitimate < 1) throw std::invalid_argument("topology needs at least one legitimate agent");
  if (n_malicious < 0) throw std::invalid_argument("negative malicious count");

  const int n = n_agents();
  for (auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw std::invalid_argument("edge endpoint out of range: " + std::to_string(a) + "-" +
                                  std::to_string(b));
    if (a == b) throw std::invalid_argument("self-loop on agent " + std::to_string(a));
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  adjacency_.assign(n, {});
  for (const auto& [a, b] : edges_) {
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());

  // Legitimate-induced subgraph must be connected.
  std::vector<char> seen(n_legitimate_, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adjacency_[u]) {
      if (!is_legitimate(v) || seen[v]) continue;
      seen[v] = 1;
      ++reached;
      frontier.push(v);
    }
  }
  if (reached != n_legitimate_)
    throw std::invalid_argument("legitimate subgraph is disconnected (" + std::to_string(reached) +
                                " of " + std::to_string(n_legitimate_) + " reachable)");
}

std::vector<int> Topology::legitimate_ids() const {
  std::vector<int> ids(n_legitimate_);
  for (int i = 0; i < n_legitimate_; ++i) ids[i] = i;
  return ids;
}

std::vector<int> Topology::malicious_ids() const {
  std::vector<int> ids(n_malicious_);
  for (int i = 0; i < n_malicious_; ++i) ids[i] = n_legitimate_ + i;
  return ids;
}

bool Topology::has_edge(int a, int b) const {
  const auto& nb = adjacency_.at(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

int Topology::legitimate_degree(int agent) const {
  const auto& nb = adjacency_.at(agent);
  return static_cast<int>(std::count_if(nb.begin(), nb.end(),
                                        [this](int j) { return is_legitimate(j); }));
}

int Topology::malicious_degree(int agent) const {
  return static_cast<int>(adjacency_.at(agent).size()) - legitimate_degree(agent);
}

NominalWeights nominal_weight_matrix(const Topology& topology) {
  const int n = topology.n_legitimate();
  NominalWeights out;
  out.d_L.resize(n);
  for (int i = 0; i < n; ++i) out.d_L[i] = topology.legitimate_degree(i) + 1;

  out.matrix = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j : topology.neighbors(i)) {
      if (!topology.is_legitimate(j)) continue;
      const double w = 1.0 / (2.0 * std::max(out.d_L[i], out.d_L[j]));
      out.matrix(i, j) = w;
      off += w;
    }
    out.matrix(i, i) = 1.0 - off;
  }
  out.rho_L = spectral_gap(out.matrix);
  return out;
}

double spectral_gap(const Eigen::MatrixXd& weights) {
  if (weights.rows() != weights.cols()) throw std::invalid_argument("weight matrix must be square");
  if (weights.rows() <= 1) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(weights, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  // Ascending order; the Perron eigenvalue 1 is the largest.
  const Eigen::VectorXd& ev = solver.eigenvalues();
  const Eigen::Index n = ev.size();
  return std::max(std::abs(ev(0)), std::abs(ev(n - 2)));
}

DegreeCounts degree_counts(const Topology& topology) {
  DegreeCounts c;
  for (int i = 0; i < topology.n_legitimate(); ++i) {
    c.legitimate += topology.legitimate_degree(i);
    c.malicious += topology.malicious_degree(i);
  }
  return c;
}

Topology parse_topology(std::istream& in) {
  std::string line;
  int n_legit = -1, n_mal = -1;
  std::vector<std::pair<int, int>> edges;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error("graph line " + std::to_string(line_no) + ": " + what);
    };
    if (kw == "agents") {
      if (n_legit >= 0) fail("duplicate header");
      if (!(ls >> n_legit >> n_mal)) fail("expected 'agents <n_legit> <n_mal>'");
    } else if (kw == "edge") {
      if (n_legit < 0) fail("edge before 'agents' header");
      int a, b;
      if (!(ls >> a >> b)) fail("expected 'edge <i> <j>'");
      edges.emplace_back(a, b);
    } else {
      fail("unknown keyword '" + kw + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
  }
  if (n_legit < 0) throw std::runtime_error("graph file has no 'agents' header");
  return Topology(n_legit, n_mal, std::move(edges));
}

Topology read_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file " + path);
  try {
    return parse_topology(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_topology(std::ostream& out, const Topology& topology) {
  out << "agents " << topology.n_legitimate() << ' ' << topology.n_malicious() << '\n';
  for (const auto& [a, b] : topology.edges()) out << "edge " << a << ' ' << b << '\n';
}

std::vector<std::pair<int, int>> ring_with_chords(int n, int n_chords, std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("ring needs at least 3 agents");
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) edges.emplace(std::min(i, (i + 1) % n), std::max(i, (i + 1) % n));
  const long max_edges = static_cast<long>(n) * (n - 1) / 2;
  if (static_cast<long>(edges.size()) + n_chords > max_edges)
    throw std::invalid_argument("too many chords for ring size");

  SplitMix64 rng(seed);
  int added = 0;
  while (added < n_chords) {
    const int a = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    const int b = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    if (a == b) continue;
    if (edges.emplace(std::min(a, b), std::max(a, b)).second) ++added;
  }
  return {edges.begin(), edges.end()};
}

Topology with_all_connected_malicious(int n_legitimate,
                                      std::vector<std::pair<int, int>> legit_edges,
                                      int n_malicious) {
  for (int m = 0; m < n_malicious; ++m)
    for (int i = 0; i < n_legitimate; ++i) legit_edges.emplace_back(i, n_legitimate + m);
  return Topology(n_legitimate, n_malicious, std::move(legit_edges));
}

Topology canonical_topology(int n_malicious) {
  return with_all_connected_malicious(15, ring_with_chords(15, 5, 2023), n_malicious);
}

}  // namespace trustopt
