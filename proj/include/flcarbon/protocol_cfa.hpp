#pragma once

// Decentralized consensus FL with CHOCO-SGD. Each device keeps its model W,
// a tracker X of its own compressed model and a tracker S of the
// Omega-weighted neighbour models. Only the compressed difference
// W_{i+1/2} - X_i travels over the sidelink.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "flcarbon/compression.hpp"
#include "flcarbon/errors.hpp"
#include "flcarbon/model.hpp"
#include "flcarbon/protocol_fa.hpp"
#include "flcarbon/rng.hpp"

namespace flcarbon {

/// Undirected static graph over devices 0..K-1 (device id k+1).
class Topology {
 public:
  Topology() = default;

  /// Builds from adjacency lists; lists are sorted and must be symmetric.
  explicit Topology(std::vector<std::vector<std::size_t>> neighbors) : neighbors_(std::move(neighbors)) {
    for (auto& n : neighbors_) std::sort(n.begin(), n.end());
    validate();
  }

  static Topology fully_connected(std::size_t k) {
    detail::require(k >= 1, "topology: need at least one device");
    std::vector<std::vector<std::size_t>> n(k);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        if (a != b) n[a].push_back(b);
      }
    }
    return Topology(std::move(n));
  }

  static Topology ring(std::size_t k) {
    detail::require(k >= 2, "topology: a ring needs at least two devices");
    std::vector<std::vector<std::size_t>> n(k);
    for (std::size_t a = 0; a < k; ++a) {
      const std::size_t next = (a + 1) % k;
      const std::size_t prev = (a + k - 1) % k;
      n[a].push_back(next);
      if (prev != next) n[a].push_back(prev);
    }
    return Topology(std::move(n));
  }

  /// Random d-regular graph by incremental stub pairing: random pairs of
  /// open stubs are joined when they form a new edge, and the whole pairing
  /// restarts when it gets stuck or the result is disconnected. The output
  /// is close to, but not exactly, uniform over d-regular graphs.
  static Topology random_regular(std::size_t k, std::size_t degree, std::uint64_t seed) {
    detail::require(degree >= 1 && degree < k, "topology.degree: must be in [1, K-1]");
    detail::require((k * degree) % 2 == 0, "topology.degree: K * degree must be even");
    RngStream rng = make_stream(seed, {stream::topology});
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::vector<std::size_t> stubs;
      for (std::size_t a = 0; a < k; ++a) stubs.insert(stubs.end(), degree, a);
      std::vector<std::vector<std::size_t>> n(k);
      std::size_t misses = 0;
      while (!stubs.empty() && misses < 100 * k * degree) {
        const std::size_t i = static_cast<std::size_t>(rng.below(stubs.size()));
        const std::size_t j = static_cast<std::size_t>(rng.below(stubs.size()));
        const std::size_t a = stubs[i];
        const std::size_t b = stubs[j];
        if (i == j || a == b || std::find(n[a].begin(), n[a].end(), b) != n[a].end()) {
          ++misses;
          continue;
        }
        n[a].push_back(b);
        n[b].push_back(a);
        // Remove the higher slot first so the lower index stays valid.
        for (std::size_t slot : {std::max(i, j), std::min(i, j)}) {
          stubs[slot] = stubs.back();
          stubs.pop_back();
        }
      }
      if (!stubs.empty()) continue;
      for (auto& v : n) std::sort(v.begin(), v.end());
      Topology t;
      t.neighbors_ = std::move(n);
      if (t.connected()) return t;
    }
    throw ValidationError("topology: failed to sample a connected random regular graph");
  }

  std::size_t size() const noexcept { return neighbors_.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t k) const { return neighbors_.at(k); }
  std::size_t degree(std::size_t k) const { return neighbors_.at(k).size(); }

  bool adjacent(std::size_t a, std::size_t b) const {
    const auto& n = neighbors_.at(a);
    return std::binary_search(n.begin(), n.end(), b);
  }

  bool connected() const {
    if (neighbors_.empty()) return false;
    std::vector<bool> seen(size(), false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
      const std::size_t a = frontier.front();
      frontier.pop();
      for (std::size_t b : neighbors_[a]) {
        if (!seen[b]) {
          seen[b] = true;
          ++reached;
          frontier.push(b);
        }
      }
    }
    return reached == size();
  }

  void validate() const {
    detail::require(!neighbors_.empty(), "topology: no devices");
    for (std::size_t a = 0; a < size(); ++a) {
      const auto& n = neighbors_[a];
      for (std::size_t i = 0; i < n.size(); ++i) {
        detail::require(n[i] < size(), "topology: neighbour index out of range");
        detail::require(n[i] != a, "topology: device " + std::to_string(a + 1) + " lists itself");
        detail::require(i == 0 || n[i] != n[i - 1], "topology: duplicate neighbour");
        detail::require(adjacent(n[i], a), "topology: adjacency is not symmetric");
      }
    }
  }

 private:
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Dense K x K mixing weights.
class MixingMatrix {
 public:
  MixingMatrix() = default;
  explicit MixingMatrix(std::size_t k) : k_(k), w_(k * k, 0.0) {}

  std::size_t size() const noexcept { return k_; }
  double operator()(std::size_t a, std::size_t b) const { return w_[a * k_ + b]; }
  double& operator()(std::size_t a, std::size_t b) { return w_[a * k_ + b]; }

  /// Symmetric, non-negative, unit row and column sums (to tol), supported on
  /// the topology plus the diagonal.
  void validate(const Topology& topology, double tol = 1e-12) const {
    detail::require(topology.size() == k_, "mixing matrix size does not match topology");
    for (std::size_t a = 0; a < k_; ++a) {
      double row = 0.0;
      double col = 0.0;
      for (std::size_t b = 0; b < k_; ++b) {
        const double v = (*this)(a, b);
        detail::require(v >= 0.0, "mixing matrix: negative entry");
        detail::require(v == (*this)(b, a), "mixing matrix: not symmetric");
        detail::require(v == 0.0 || a == b || topology.adjacent(a, b),
                        "mixing matrix: weight on a non-edge");
        row += v;
        col += (*this)(b, a);
      }
      detail::require(std::abs(row - 1.0) <= tol && std::abs(col - 1.0) <= tol,
                      "mixing matrix: row or column sum differs from 1");
    }
  }

 private:
  std::size_t k_ = 0;
  std::vector<double> w_;
};

/// Metropolis-Hastings weights: 1 / (1 + max(deg_a, deg_b)) on edges, the
/// remainder on the diagonal.
inline MixingMatrix build_mixing_matrix(const Topology& topology) {
  topology.validate();
  detail::require(topology.connected(), "build_mixing_matrix: topology is disconnected");
  const std::size_t k = topology.size();
  MixingMatrix omega(k);
  for (std::size_t a = 0; a < k; ++a) {
    double off = 0.0;
    for (std::size_t b : topology.neighbors(a)) {
      const double w = 1.0 / (1.0 + static_cast<double>(std::max(topology.degree(a), topology.degree(b))));
      omega(a, b) = w;
      off += w;
    }
    omega(a, a) = 1.0 - off;
  }
  return omega;
}

struct CfaDeviceState {
  std::size_t device_id = 0;
  ParameterVector W;
  ParameterVector X;  ///< own compressed-model tracker, starts at 0
  ParameterVector S;  ///< neighbour tracker, starts at 0
  DatasetPartition partition;
  double gamma = 0.01;

  static CfaDeviceState initial(std::size_t device_id, ParameterVector w0, DatasetPartition partition,
                                double gamma) {
    const std::size_t n = w0.size();
    return {device_id, std::move(w0), ParameterVector(n), ParameterVector(n), std::move(partition), gamma};
  }

  void validate() const {
    detail::require(W.size() == X.size() && W.size() == S.size(),
                    "cfa device " + std::to_string(device_id) + ": W, X, S lengths differ");
    detail::require(gamma > 0.0 && gamma <= 1.0, "gamma: must be in (0, 1]");
  }
};

/// W_{i+1/2} = LO(W_i), payload Q(W_{i+1/2} - X_i). X is advanced later in
/// cfa_apply_round.
inline DeviceStep cfa_local_step(const Mlp& model, const CfaDeviceState& state,
                                 const CompressionPolicy& policy, const OptimizerConfig& optimizer,
                                 RngStream& rng) {
  state.validate();
  ParameterVector half = local_optimize(model, state.W, state.partition, optimizer, rng);
  ParameterVector diff = half - state.X;
  return {encode_update(diff, policy, rng), std::move(half)};
}

/// Lock-step consensus over all devices:
///   X_k += q_k
///   S_k += sum_j omega_kj q_j   (j over neighbours and k itself)
///   W_k  = W_{k,i+1/2} + gamma (S_k - X_k)
/// where q_j is the decoded payload of device j.
inline void cfa_apply_round(std::span<CfaDeviceState> states, std::span<const DeviceStep> steps,
                            const MixingMatrix& omega) {
  const std::size_t k = states.size();
  detail::require(steps.size() == k, "cfa_apply_round: need one payload per device");
  detail::require(omega.size() == k, "cfa_apply_round: mixing matrix size does not match devices");
  std::vector<ParameterVector> decoded;
  decoded.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    states[j].validate();
    const std::size_t n = states[j].W.size();
    detail::require(steps[j].update.n_params() == n && steps[j].half_step.size() == n,
                    "cfa_apply_round: payload from device " + std::to_string(states[j].device_id) +
                        " does not match the model size");
    decoded.push_back(steps[j].update.decode());
  }
  for (std::size_t a = 0; a < k; ++a) {
    CfaDeviceState& s = states[a];
    s.X += decoded[a];
    for (std::size_t b = 0; b < k; ++b) {
      const double w = omega(a, b);
      if (w != 0.0) s.S.axpy(w, decoded[b]);
    }
    ParameterVector next = steps[a].half_step;
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += s.gamma * (s.S[i] - s.X[i]);
    s.W = std::move(next);
  }
}

}  // namespace flcarbon
