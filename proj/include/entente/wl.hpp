#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "entente/graph.hpp"
#include "entente/hash.hpp"

namespace entente {

// Weisfeiler-Lehman label histograms, one per refinement iteration
// (per_iteration[0] is the raw degree histogram).
struct WLHistogram {
  int max_iters = 0;
  std::vector<std::map<std::uint64_t, std::uint64_t>> per_iteration;
};

inline WLHistogram wl_histogram(const StaticGraph& graph, int max_iters) {
  if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
  WLHistogram h;
  h.max_iters = max_iters;
  auto adj = graph.adjacency();
  std::vector<std::uint64_t> labels(static_cast<std::size_t>(graph.n));
  for (int v = 0; v < graph.n; ++v)
    labels[static_cast<std::size_t>(v)] = adj[static_cast<std::size_t>(v)].size();

  auto histogram = [&] {
    std::map<std::uint64_t, std::uint64_t> counts;
    for (std::uint64_t lab : labels) ++counts[lab];
    return counts;
  };
  h.per_iteration.push_back(histogram());

  for (int it = 1; it <= max_iters; ++it) {
    std::vector<std::uint64_t> next(labels.size());
    for (int v = 0; v < graph.n; ++v) {
      const auto& nbrs = adj[static_cast<std::size_t>(v)];
      if (nbrs.empty()) {
        // No neighborhood to fold in; the label is already stable.
        next[static_cast<std::size_t>(v)] = labels[static_cast<std::size_t>(v)];
        continue;
      }
      std::vector<std::uint64_t> nl;
      nl.reserve(nbrs.size());
      for (int u : nbrs) nl.push_back(labels[static_cast<std::size_t>(u)]);
      std::sort(nl.begin(), nl.end());
      std::string canon = std::to_string(labels[static_cast<std::size_t>(v)]);
      canon += '|';
      for (std::size_t i = 0; i < nl.size(); ++i) {
        if (i) canon += ',';
        canon += std::to_string(nl[i]);
      }
      next[static_cast<std::size_t>(v)] = fnv1a64(canon);
    }
    labels = std::move(next);
    h.per_iteration.push_back(histogram());
  }
  return h;
}

inline WLHistogram wl_histogram(const TemporalGraph& graph, int max_iters) {
  return wl_histogram(flatten(graph), max_iters);
}

// Multiset Jaccard over the union of labels, summed across all iterations.
inline double jaccard_similarity(const WLHistogram& h1, const WLHistogram& h2) {
  if (h1.per_iteration.size() != h2.per_iteration.size())
    throw std::invalid_argument("histograms built with different max_iters");
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < h1.per_iteration.size(); ++i) {
    const auto& a = h1.per_iteration[i];
    const auto& b = h2.per_iteration[i];
    for (const auto& [lab, ca] : a) {
      auto it = b.find(lab);
      std::uint64_t cb = it == b.end() ? 0 : it->second;
      inter += std::min(ca, cb);
      uni += std::max(ca, cb);
    }
    for (const auto& [lab, cb] : b) {
      if (!a.count(lab)) uni += cb;
    }
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace entente
