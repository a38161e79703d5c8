#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <unordered_set>
#include <utility>
#include <vector>

#include "entente/graph.hpp"
#include "entente/model.hpp"

namespace entente {

struct AttackConfig {
  std::unordered_set<int> malicious_clients;  // indices in [1, K]
  double p = 0.0;  // per-snapshot injection likelihood
  double gamma = 1.0;
  std::uint64_t seed = 0;
};

inline void validate_attack(const AttackConfig& a, int clients) {
  if (a.p < 0.0 || a.p > 1.0) throw std::invalid_argument("p must be in [0,1]");
  if (a.gamma < 1.0) throw std::invalid_argument("gamma must be >= 1");
  for (int k : a.malicious_clients)
    if (k < 1 || k > clients) throw std::invalid_argument("malicious client out of range");
}

struct PoisonResult {
  std::vector<Snapshot> snapshots;
  double epm = 0.0;  // injected edges per malicious edge
};

// Replays future malicious edges into a controlled client's training windows:
// one uniform draw per snapshot, and on a hit every replayed edge lands where
// both endpoints already exist and the edge is absent. Injected edges carry
// unit weight and look benign to the (unsupervised) trainer.
inline PoisonResult poison_client_data(const std::vector<Snapshot>& snapshots,
                                       const std::vector<std::pair<NodeId, NodeId>>& em,
                                       double p, std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("p must be in [0,1]");
  PoisonResult out;
  out.snapshots = snapshots;
  if (em.empty()) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::size_t injected = 0;
  for (auto& snap : out.snapshots) {
    double draw = uni(rng);
    if (!(draw < p)) continue;
    std::unordered_set<NodeId> present(snap.nodes.begin(), snap.nodes.end());
    for (const auto& e : em) {
      if (!present.count(e.first) || !present.count(e.second)) continue;
      if (snap.edges.count(e)) continue;
      snap.edges[e] = 1.0;
      ++injected;
    }
  }
  out.epm = static_cast<double>(injected) / static_cast<double>(em.size());
  return out;
}

// Literal replay-and-scale submission: the whole parameter vector is scaled,
// so the server-side delta becomes gamma * w_k - w_i.
inline ModelParams scale_update(const ModelParams& w, double gamma) {
  ModelParams out = w;
  for (auto& x : out.flat) x *= gamma;
  return out;
}

}  // namespace entente
