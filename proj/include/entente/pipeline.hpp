#pragma once

#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "entente/federation.hpp"
#include "entente/graph.hpp"
#include "entente/model.hpp"
#include "entente/nn.hpp"
#include "entente/wl.hpp"

namespace entente {

// Feature rows follow the graph's node order; nodes absent from the snapshot
// contribute zero rows and therefore zero embeddings.
inline Mat snapshot_features(const TemporalGraph& g, const Snapshot& snap,
                             const std::unordered_map<NodeId, int>& index) {
  Mat x = Mat::Zero(static_cast<Eigen::Index>(g.nodes.size()), g.feature_dim);
  for (NodeId v : snap.nodes) {
    auto it = g.node_features.find(v);
    if (it == g.node_features.end())
      throw std::invalid_argument("snapshot node missing features");
    const auto& f = it->second;
    for (int c = 0; c < g.feature_dim; ++c)
      x(index.at(v), c) = f[static_cast<std::size_t>(c)];
  }
  return x;
}

inline SnapshotData make_snapshot_data(const TemporalGraph& g, const Snapshot& snap,
                                       const std::unordered_map<NodeId, int>& index) {
  SnapshotData sd;
  sd.a_hat = normalize_adjacency(snap, g.nodes);
  sd.x = snapshot_features(g, snap, index);
  sd.positives.reserve(snap.edges.size());
  for (const auto& [e, w] : snap.edges)
    sd.positives.emplace_back(index.at(e.first), index.at(e.second));
  return sd;
}

inline BatchSource make_batch_source(const TemporalGraph& g,
                                     const std::vector<Snapshot>& snaps,
                                     double neg_ratio, int offset) {
  BatchSource src;
  src.neg_ratio = neg_ratio;
  src.offset = offset;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    src.index[g.nodes[i]] = static_cast<int>(i);
  src.raw = snaps;
  src.snapshots.reserve(snaps.size());
  for (const auto& s : snaps) src.snapshots.push_back(make_snapshot_data(g, s, src.index));
  return src;
}

inline FederationClient make_federation_client(const TemporalGraph& g,
                                               const std::vector<Snapshot>& snaps,
                                               double neg_ratio, int offset,
                                               int wl_iters) {
  FederationClient c;
  c.data = make_batch_source(g, snaps, neg_ratio, offset);
  c.sketch = wl_histogram(g, wl_iters);
  c.node_count = static_cast<int>(g.nodes.size());
  return c;
}

}  // namespace entente
