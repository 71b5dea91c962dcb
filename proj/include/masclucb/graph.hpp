#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "masclucb/errors.hpp"
#include "masclucb/rng.hpp"

namespace masclucb {

enum class TopologyKind { complete, ring, k_regular, erdos_renyi };

inline std::string_view to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::complete: return "complete";
    case TopologyKind::ring: return "ring";
    case TopologyKind::k_regular: return "k_regular";
    case TopologyKind::erdos_renyi: return "erdos_renyi";
  }
  return "?";
}

inline TopologyKind parse_topology(std::string_view name) {
  if (name == "complete") return TopologyKind::complete;
  if (name == "ring") return TopologyKind::ring;
  if (name == "k_regular") return TopologyKind::k_regular;
  if (name == "erdos_renyi") return TopologyKind::erdos_renyi;
  throw ConfigError("unknown topology '" + std::string(name) +
                    "' (valid: complete, ring, k_regular, erdos_renyi)");
}

struct WeightEntry {
  std::size_t col;
  double weight;
};

namespace detail {

constexpr std::size_t kDenseEigenLimit = 256;
constexpr double kPowerTolerance = 1e-10;
constexpr int kPowerMaxIterations = 100000;

// Largest |eigenvalue| of a symmetric operator restricted to 1-perp, by power
// iteration. `apply` computes y = B x with B = W - (1/N) 1 1^T.
template <typename Apply>
double power_iteration_norm(std::size_t n, Apply&& apply) {
  Rng rng(0x9a9ULL);
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(static_cast<Eigen::Index>(n));
  for (auto& v : x) v = normal(rng);
  x.array() -= x.mean();
  if (x.norm() == 0.0) return 0.0;
  x.normalize();

  double estimate = 0.0;
  double last_change = 0.0;
  for (int it = 0; it < kPowerMaxIterations; ++it) {
    Eigen::VectorXd y = apply(x);
    y.array() -= y.mean();
    const double norm = y.norm();
    if (norm < 1e-300) return 0.0;
    // ||B x|| converges to |l| even when x mixes the +l and -l eigenspaces.
    const double next = norm;
    y /= norm;
    if (it > 0) {
      const double change = std::abs(next - estimate);
      if (change == 0.0) return next;
      // Remaining error of a geometric sequence with the observed contraction.
      if (it > 1 && change < last_change) {
        const double q = change / last_change;
        if (change * q / (1.0 - q) <= kPowerTolerance * std::max(1.0, next)) return next;
      }
      last_change = change;
    }
    estimate = next;
    x = std::move(y);
  }
  return estimate;
}

}  // namespace detail

// Second largest eigenvalue magnitude of a symmetric doubly stochastic matrix,
// i.e. the spectral norm of W - (1/N) 1 1^T.
inline double spectral_gap(const Eigen::MatrixXd& weights) {
  const auto n = weights.rows();
  if (n == 0 || weights.cols() != n) throw ValidationError("spectral_gap: W must be square and non-empty");
  constexpr double tol = 1e-10;
  if ((weights - weights.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw ValidationError("spectral_gap: W is not symmetric");
  }
  if (weights.minCoeff() < -tol) throw ValidationError("spectral_gap: W has negative entries");
  if ((weights.rowwise().sum().array() - 1.0).abs().maxCoeff() > tol) {
    throw ValidationError("spectral_gap: W rows do not sum to 1");
  }
  if (n == 1) return 0.0;

  const Eigen::MatrixXd deflated =
      weights - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  if (static_cast<std::size_t>(n) <= detail::kDenseEigenLimit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(deflated, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
  }
  return detail::power_iteration_norm(static_cast<std::size_t>(n),
                                      [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(deflated * x); });
}

/// Undirected connected communication graph with Metropolis-Hastings weights.
///
/// Rows of the weight matrix are stored sparsely (self entry included) since
/// consensus only ever needs neighbor reads. Immutable after construction.
class NetworkGraph {
 public:
  static NetworkGraph from_adjacency(std::vector<std::vector<std::size_t>> adjacency) {
    NetworkGraph g;
    const std::size_t n = adjacency.size();
    if (n == 0) throw ConfigError("graph must have at least one node");
    for (std::size_t i = 0; i < n; ++i) {
      auto& row = adjacency[i];
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      for (std::size_t j : row) {
        if (j >= n) throw ConfigError("adjacency references node out of range");
        if (j == i) throw ConfigError("adjacency contains a self-loop");
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : adjacency[i]) {
        if (!std::binary_search(adjacency[j].begin(), adjacency[j].end(), i)) {
          throw ConfigError("adjacency is not symmetric");
        }
      }
    }
    g.adjacency_ = std::move(adjacency);
    if (!g.connected()) throw GenerationError("graph is not connected");
    g.build_metropolis_weights();
    g.lambda2_abs_ = g.compute_lambda2();
    return g;
  }

  std::size_t size() const { return adjacency_.size(); }
  std::span<const std::size_t> neighbors(std::size_t i) const { return adjacency_.at(i); }
  std::size_t degree(std::size_t i) const { return adjacency_.at(i).size(); }

  bool adjacent(std::size_t i, std::size_t j) const {
    const auto& row = adjacency_.at(i);
    return std::binary_search(row.begin(), row.end(), j);
  }

  // Sorted by column; includes the diagonal.
  std::span<const WeightEntry> weight_row(std::size_t i) const { return rows_.at(i); }

  double weight(std::size_t i, std::size_t j) const {
    const auto& row = rows_.at(i);
    auto it = std::lower_bound(row.begin(), row.end(), j,
                               [](const WeightEntry& e, std::size_t c) { return e.col < c; });
    return (it != row.end() && it->col == j) ? it->weight : 0.0;
  }

  double lambda2_abs() const { return lambda2_abs_; }

  bool is_complete() const {
    const std::size_t n = size();
    return std::all_of(adjacency_.begin(), adjacency_.end(),
                       [n](const auto& row) { return row.size() + 1 == n; });
  }

  Eigen::MatrixXd dense_weights() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < size(); ++i) {
      for (const auto& e : rows_[i]) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e.col)) = e.weight;
    }
    return w;
  }

  // y = W x. Complete graphs carry W = (1/N) 1 1^T, so y is the mean.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != size()) throw ValidationError("apply: vector size mismatch");
    if (complete_) return Eigen::VectorXd::Constant(x.size(), x.mean());
    Eigen::VectorXd y(x.size());
    for (std::size_t i = 0; i < size(); ++i) {
      double acc = 0.0;
      for (const auto& e : rows_[i]) acc += e.weight * x[static_cast<Eigen::Index>(e.col)];
      y[static_cast<Eigen::Index>(i)] = acc;
    }
    return y;
  }

 private:
  NetworkGraph() = default;

  bool connected() const {
    const std::size_t n = size();
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      for (std::size_t v : adjacency_[u]) {
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          frontier.push(v);
        }
      }
    }
    return count == n;
  }

  void build_metropolis_weights() {
    const std::size_t n = size();
    rows_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      double off = 0.0;
      std::vector<WeightEntry> row;
      row.reserve(adjacency_[i].size() + 1);
      for (std::size_t j : adjacency_[i]) {
        const double w = 1.0 / (1.0 + static_cast<double>(std::max(degree(i), degree(j))));
        row.push_back({j, w});
        off += w;
      }
      row.push_back({i, 1.0 - off});
      std::sort(row.begin(), row.end(), [](const WeightEntry& a, const WeightEntry& b) { return a.col < b.col; });
      rows_[i] = std::move(row);
    }
    complete_ = is_complete();
  }

  double compute_lambda2() const {
    const std::size_t n = size();
    if (n == 1 || complete_) return 0.0;
    if (n <= detail::kDenseEigenLimit) return spectral_gap(dense_weights());
    return detail::power_iteration_norm(n, [this](const Eigen::VectorXd& x) { return apply(x); });
  }

  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::vector<WeightEntry>> rows_;
  double lambda2_abs_ = 0.0;
  bool complete_ = false;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> circulant(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> adj(n);
  const std::size_t half = k / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t off = 1; off <= half; ++off) {
      adj[i].push_back((i + off) % n);
      adj[i].push_back((i + n - off) % n);
    }
    if (k % 2 == 1) adj[i].push_back((i + n / 2) % n);
  }
  return adj;
}

}  // namespace detail

constexpr int kErdosRenyiMaxAttempts = 1000;

/// Builds one of the supported topology families. `k` is required for
/// k_regular, `p` for erdos_renyi; the seed only matters for erdos_renyi.
inline NetworkGraph build_topology(TopologyKind kind, std::size_t n, std::optional<std::size_t> k = std::nullopt,
                                   std::optional<double> p = std::nullopt, std::uint64_t seed = 0) {
  if (n < 1) throw ConfigError("topology: n must be >= 1");
  switch (kind) {
    case TopologyKind::complete: {
      std::vector<std::vector<std::size_t>> adj(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j) adj[i].push_back(j);
      return NetworkGraph::from_adjacency(std::move(adj));
    }
    case TopologyKind::ring: {
      if (n <= 2) return build_topology(TopologyKind::complete, n);
      return NetworkGraph::from_adjacency(detail::circulant(n, 2));
    }
    case TopologyKind::k_regular: {
      if (!k) throw ConfigError("k_regular topology requires k");
      if (n == 1) throw ConfigError("k_regular topology requires n >= 2 (need 1 <= k <= n-1)");
      if (*k < 1 || *k > n - 1) {
        throw ConfigError("k_regular: k=" + std::to_string(*k) + " outside [1, n-1] for n=" + std::to_string(n));
      }
      if ((n * *k) % 2 != 0) {
        throw ConfigError("k_regular: n*k must be even (n=" + std::to_string(n) + ", k=" + std::to_string(*k) + ")");
      }
      try {
        return NetworkGraph::from_adjacency(detail::circulant(n, *k));
      } catch (const GenerationError&) {
        throw ConfigError("k_regular: circulant construction with k=" + std::to_string(*k) +
                          " is disconnected for n=" + std::to_string(n));
      }
    }
    case TopologyKind::erdos_renyi: {
      if (!p) throw ConfigError("erdos_renyi topology requires p");
      if (!(*p > 0.0 && *p <= 1.0)) throw ConfigError("erdos_renyi: p must lie in (0, 1]");
      Rng rng = make_stream(seed, Stream::topology);
      std::bernoulli_distribution edge(*p);
      for (int attempt = 0; attempt < kErdosRenyiMaxAttempts; ++attempt) {
        std::vector<std::vector<std::size_t>> adj(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j)
            if (edge(rng)) {
              adj[i].push_back(j);
              adj[j].push_back(i);
            }
        try {
          return NetworkGraph::from_adjacency(std::move(adj));
        } catch (const GenerationError&) {
        }
      }
      throw GenerationError("erdos_renyi: no connected sample after " + std::to_string(kErdosRenyiMaxAttempts) +
                            " attempts (n=" + std::to_string(n) + ", p=" + std::to_string(*p) + ")");
    }
  }
  throw ConfigError("unknown topology kind");
}

}  // namespace masclucb
