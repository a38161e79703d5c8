#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "entente/hash.hpp"

namespace entente {

using NodeId = std::int64_t;

struct LogEvent {
  NodeId src = 0;
  NodeId dst = 0;
  std::int64_t timestamp = 0;
  int label = 0;  // 0 = benign, 1 = malicious

  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

enum class FeatureMode { degree, role };

// Aggregated event graph for one silo (or the whole deployment).
// Nodes are kept sorted so every downstream tensor order is reproducible.
struct TemporalGraph {
  std::vector<NodeId> nodes;  // sorted, unique
  std::vector<LogEvent> events;  // sorted by timestamp (stable)
  std::unordered_map<NodeId, std::vector<double>> node_features;
  std::unordered_map<NodeId, int> roles;  // only used in role mode
  std::unordered_set<NodeId> foreign;  // filled by augment_one_hop
  FeatureMode feature_mode = FeatureMode::degree;
  int feature_dim = 2;
  int role_count = 0;
  bool has_self_loops = false;
  bool augmented = false;
};

// One time window of the event stream. Edges are directed (src,dst) pairs
// carrying the number of merged events as weight.
struct Snapshot {
  int index = 1;  // t in [1, T]
  std::int64_t window_start = 0;
  std::int64_t window_end = 0;  // [start, end)
  std::vector<NodeId> nodes;  // sorted unique endpoints within the window
  std::map<std::pair<NodeId, NodeId>, double> edges;
};

struct PartitionMap {
  std::unordered_map<NodeId, int> assignment;  // node -> client in [1, K]
  int clients = 0;
};

// Undirected simple graph with dense ids, the shape the reference-graph
// generator and the relabeling sketch operate on.
struct StaticGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // u < v, unique, sorted

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (auto [u, v] : edges) {
      adj[static_cast<std::size_t>(u)].push_back(v);
      adj[static_cast<std::size_t>(v)].push_back(u);
    }
    return adj;
  }
};

enum class PartitionStrategy { hash, degree_balanced, community };

namespace detail {

// Distinct-neighbor degree over the flattened undirected graph,
// self-loops excluded.
inline std::unordered_map<NodeId, std::size_t> simple_degrees(
    const std::vector<LogEvent>& events) {
  std::set<std::pair<NodeId, NodeId>> seen;
  for (const auto& e : events) {
    if (e.src == e.dst) continue;
    seen.insert({std::min(e.src, e.dst), std::max(e.src, e.dst)});
  }
  std::unordered_map<NodeId, std::size_t> deg;
  for (auto [u, v] : seen) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

inline std::vector<double> default_feature(const TemporalGraph& g) {
  // Degree mode keeps the constant slot; role mode lights the unknown slot.
  std::vector<double> f(static_cast<std::size_t>(g.feature_dim), 0.0);
  f[0] = 1.0;
  return f;
}

inline void assign_features(TemporalGraph& g) {
  g.node_features.clear();
  if (g.feature_mode == FeatureMode::degree) {
    g.feature_dim = 2;
    auto deg = simple_degrees(g.events);
    for (NodeId v : g.nodes) {
      auto it = deg.find(v);
      double d = it == deg.end() ? 0.0 : static_cast<double>(it->second);
      g.node_features[v] = {1.0, std::log1p(d)};
    }
  } else {
    if (g.role_count <= 0) {
      int max_role = -1;
      for (const auto& [node, role] : g.roles) max_role = std::max(max_role, role);
      g.role_count = max_role + 1;
    }
    g.feature_dim = g.role_count + 1;  // slot 0 reserved for unknown/foreign
    for (NodeId v : g.nodes) {
      std::vector<double> f(static_cast<std::size_t>(g.feature_dim), 0.0);
      auto it = g.roles.find(v);
      if (it != g.roles.end() && it->second >= 0 && it->second < g.role_count) {
        f[static_cast<std::size_t>(it->second) + 1] = 1.0;
      } else {
        f[0] = 1.0;
      }
      g.node_features[v] = f;
    }
  }
}

}  // namespace detail

inline TemporalGraph build_graph(
    const std::vector<LogEvent>& events, FeatureMode mode,
    const std::unordered_map<NodeId, int>& roles = {}, int role_count = 0) {
  if (events.empty()) throw std::invalid_argument("empty event stream");
  TemporalGraph g;
  g.feature_mode = mode;
  g.roles = roles;
  g.role_count = role_count;
  g.events = events;
  std::stable_sort(g.events.begin(), g.events.end(),
                   [](const LogEvent& a, const LogEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
  std::set<NodeId> node_set;
  for (const auto& e : g.events) {
    node_set.insert(e.src);
    node_set.insert(e.dst);
    if (e.src == e.dst) g.has_self_loops = true;
  }
  g.nodes.assign(node_set.begin(), node_set.end());
  detail::assign_features(g);
  return g;
}

// Splits the event stream into fixed-duration windows. By default the grid
// starts at the first event and covers through the last one; callers slicing
// a client view against a deployment-wide timeline can pin the grid start
// and window count so snapshot indices line up across silos.
inline std::vector<Snapshot> snapshot_split(const TemporalGraph& graph,
                                            std::int64_t window_seconds,
                                            std::int64_t anchor_start = -1,
                                            int window_count = -1) {
  if (window_seconds <= 0) throw std::invalid_argument("window_seconds must be positive");
  if (graph.events.empty()) throw std::invalid_argument("empty event stream");
  std::int64_t start = anchor_start >= 0 ? anchor_start : graph.events.front().timestamp;
  std::int64_t last = graph.events.back().timestamp;
  int total;
  if (window_count > 0) {
    total = window_count;
  } else {
    if (last < start) throw std::invalid_argument("anchor after last event");
    total = static_cast<int>((last - start) / window_seconds) + 1;
  }
  std::vector<Snapshot> snaps(static_cast<std::size_t>(total));
  for (int j = 0; j < total; ++j) {
    snaps[static_cast<std::size_t>(j)].index = j + 1;
    snaps[static_cast<std::size_t>(j)].window_start = start + j * window_seconds;
    snaps[static_cast<std::size_t>(j)].window_end = start + (j + 1) * window_seconds;
  }
  for (const auto& e : graph.events) {
    if (e.timestamp < start) throw std::invalid_argument("event before window grid");
    std::int64_t j = (e.timestamp - start) / window_seconds;
    if (j >= total) throw std::invalid_argument("event after window grid");
    snaps[static_cast<std::size_t>(j)].edges[{e.src, e.dst}] += 1.0;
  }
  for (auto& s : snaps) {
    std::set<NodeId> ns;
    for (const auto& [edge, w] : s.edges) {
      ns.insert(edge.first);
      ns.insert(edge.second);
    }
    s.nodes.assign(ns.begin(), ns.end());
  }
  return snaps;
}

namespace detail {

inline void repair_empty_clients(PartitionMap& pm,
                                 const std::vector<NodeId>& nodes) {
  int k_count = pm.clients;
  std::vector<std::vector<NodeId>> members(static_cast<std::size_t>(k_count) + 1);
  for (NodeId v : nodes) members[static_cast<std::size_t>(pm.assignment.at(v))].push_back(v);
  for (auto& m : members) std::sort(m.begin(), m.end());
  for (int k = 1; k <= k_count; ++k) {
    if (!members[static_cast<std::size_t>(k)].empty()) continue;
    int donor = 0;
    std::size_t best = 0;
    for (int c = 1; c <= k_count; ++c) {
      if (members[static_cast<std::size_t>(c)].size() > best) {
        best = members[static_cast<std::size_t>(c)].size();
        donor = c;
      }
    }
    if (donor == 0 || best < 2) throw std::runtime_error("cannot repair empty client");
    NodeId moved = members[static_cast<std::size_t>(donor)].back();
    members[static_cast<std::size_t>(donor)].pop_back();
    members[static_cast<std::size_t>(k)].push_back(moved);
    pm.assignment[moved] = k;
  }
}

inline PartitionMap partition_hash(const TemporalGraph& g, int k_count,
                                   std::uint64_t seed) {
  PartitionMap pm;
  pm.clients = k_count;
  for (NodeId v : g.nodes) {
    int k = static_cast<int>(stable_hash(static_cast<std::uint64_t>(v), seed) %
                             static_cast<std::uint64_t>(k_count)) + 1;
    pm.assignment[v] = k;
  }
  repair_empty_clients(pm, g.nodes);
  return pm;
}

inline PartitionMap partition_degree_balanced(const TemporalGraph& g, int k_count) {
  // Greedy bin packing on event-incidence degree: heaviest talkers first,
  // each into the lightest client so far.
  std::unordered_map<NodeId, std::size_t> load;
  for (const auto& e : g.events) {
    ++load[e.src];
    if (e.dst != e.src) ++load[e.dst];
  }
  std::vector<NodeId> order = g.nodes;
  std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
    std::size_t la = load.count(a) ? load[a] : 0;
    std::size_t lb = load.count(b) ? load[b] : 0;
    if (la != lb) return la > lb;
    return a < b;
  });
  PartitionMap pm;
  pm.clients = k_count;
  std::vector<std::size_t> client_load(static_cast<std::size_t>(k_count) + 1, 0);
  std::vector<std::size_t> client_count(static_cast<std::size_t>(k_count) + 1, 0);
  for (NodeId v : order) {
    int best = 1;
    for (int c = 2; c <= k_count; ++c) {
      auto cu = static_cast<std::size_t>(c);
      auto bu = static_cast<std::size_t>(best);
      if (client_load[cu] < client_load[bu] ||
          (client_load[cu] == client_load[bu] && client_count[cu] < client_count[bu])) {
        best = c;
      }
    }
    pm.assignment[v] = best;
    client_load[static_cast<std::size_t>(best)] += load.count(v) ? load[v] : 0;
    ++client_count[static_cast<std::size_t>(best)];
  }
  return pm;
}

inline PartitionMap partition_community(const TemporalGraph& g, int k_count,
                                        std::uint64_t seed) {
  // Seeded label propagation, then merge/split communities down to exactly K.
  std::unordered_map<NodeId, std::vector<NodeId>> adj;
  {
    std::set<std::pair<NodeId, NodeId>> seen;
    for (const auto& e : g.events) {
      if (e.src == e.dst) continue;
      seen.insert({std::min(e.src, e.dst), std::max(e.src, e.dst)});
    }
    for (auto [u, v] : seen) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
  }
  std::unordered_map<NodeId, NodeId> label;
  for (NodeId v : g.nodes) label[v] = v;
  std::vector<NodeId> order = g.nodes;
  std::mt19937_64 rng(seed);
  for (int sweep = 0; sweep < 50; ++sweep) {
    std::shuffle(order.begin(), order.end(), rng);
    bool changed = false;
    for (NodeId v : order) {
      auto it = adj.find(v);
      if (it == adj.end() || it->second.empty()) continue;
      std::map<NodeId, int> votes;
      for (NodeId u : it->second) ++votes[label[u]];
      int best_votes = 0;
      for (const auto& [lab, n] : votes) best_votes = std::max(best_votes, n);
      std::vector<NodeId> candidates;
      for (const auto& [lab, n] : votes)
        if (n == best_votes) candidates.push_back(lab);
      // Sticky on ties: keeping the current label when it is still maximal
      // stops near-unique labels from flooding across sparse cuts.
      if (std::find(candidates.begin(), candidates.end(), label[v]) != candidates.end())
        continue;
      NodeId picked = candidates.front();
      if (candidates.size() > 1) {
        std::uniform_int_distribution<std::size_t> uni(0, candidates.size() - 1);
        picked = candidates[uni(rng)];
      }
      label[v] = picked;
      changed = true;
    }
    if (!changed) break;
  }

  std::map<NodeId, std::vector<NodeId>> groups;
  for (NodeId v : g.nodes) groups[label[v]].push_back(v);
  std::vector<std::vector<NodeId>> comms;
  for (auto& [lab, members] : groups) {
    std::sort(members.begin(), members.end());
    comms.push_back(std::move(members));
  }

  auto cross_edges = [&](const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
    std::unordered_set<NodeId> bs(b.begin(), b.end());
    std::size_t cnt = 0;
    for (NodeId v : a) {
      auto it = adj.find(v);
      if (it == adj.end()) continue;
      for (NodeId u : it->second)
        if (bs.count(u)) ++cnt;
    }
    return cnt;
  };

  while (static_cast<int>(comms.size()) > k_count) {
    std::size_t smallest = 0;
    for (std::size_t i = 1; i < comms.size(); ++i) {
      if (comms[i].size() < comms[smallest].size() ||
          (comms[i].size() == comms[smallest].size() &&
           comms[i].front() < comms[smallest].front())) {
        smallest = i;
      }
    }
    std::size_t target = smallest == 0 ? 1 : 0;
    std::size_t best_cross = 0;
    for (std::size_t i = 0; i < comms.size(); ++i) {
      if (i == smallest) continue;
      std::size_t c = cross_edges(comms[smallest], comms[i]);
      if (c > best_cross || (c == best_cross && comms[i].size() > comms[target].size())) {
        best_cross = c;
        target = i;
      }
    }
    auto& dst = comms[target];
    dst.insert(dst.end(), comms[smallest].begin(), comms[smallest].end());
    std::sort(dst.begin(), dst.end());
    comms.erase(comms.begin() + static_cast<std::ptrdiff_t>(smallest));
  }
  while (static_cast<int>(comms.size()) < k_count) {
    std::size_t largest = 0;
    for (std::size_t i = 1; i < comms.size(); ++i)
      if (comms[i].size() > comms[largest].size()) largest = i;
    if (comms[largest].size() < 2) throw std::runtime_error("not enough nodes to split");
    auto& src = comms[largest];
    std::size_t half = src.size() / 2;
    std::vector<NodeId> moved(src.begin() + static_cast<std::ptrdiff_t>(half), src.end());
    src.resize(half);
    comms.push_back(std::move(moved));
  }

  std::sort(comms.begin(), comms.end(),
            [](const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
              if (a.size() != b.size()) return a.size() > b.size();
              return a.front() < b.front();
            });
  PartitionMap pm;
  pm.clients = k_count;
  for (std::size_t i = 0; i < comms.size(); ++i)
    for (NodeId v : comms[i]) pm.assignment[v] = static_cast<int>(i) + 1;
  return pm;
}

}  // namespace detail

inline PartitionMap partition_nodes(const TemporalGraph& graph, int clients,
                                    PartitionStrategy strategy, std::uint64_t seed) {
  if (clients < 2) throw std::invalid_argument("need at least 2 clients");
  if (static_cast<std::size_t>(clients) > graph.nodes.size())
    throw std::invalid_argument("more clients than nodes");
  switch (strategy) {
    case PartitionStrategy::hash:
      return detail::partition_hash(graph, clients, seed);
    case PartitionStrategy::degree_balanced:
      return detail::partition_degree_balanced(graph, clients);
    case PartitionStrategy::community:
      return detail::partition_community(graph, clients, seed);
  }
  throw std::invalid_argument("unknown partition strategy");
}

// Firewall view of client k: every event it sent or received, including those
// crossing to other silos, so 1-hop foreign endpoints arrive with the events.
inline TemporalGraph extract_client_graph(const TemporalGraph& graph,
                                          const PartitionMap& pm, int k) {
  if (k < 1 || k > pm.clients) throw std::invalid_argument("client index out of range");
  TemporalGraph out;
  out.feature_mode = graph.feature_mode;
  out.role_count = graph.role_count;
  for (const auto& e : graph.events) {
    auto sit = pm.assignment.find(e.src);
    auto dit = pm.assignment.find(e.dst);
    bool mine = (sit != pm.assignment.end() && sit->second == k) ||
                (dit != pm.assignment.end() && dit->second == k);
    if (mine) {
      out.events.push_back(e);
      if (e.src == e.dst) out.has_self_loops = true;
    }
  }
  std::set<NodeId> ns;
  for (const auto& e : out.events) {
    ns.insert(e.src);
    ns.insert(e.dst);
  }
  out.nodes.assign(ns.begin(), ns.end());
  for (NodeId v : out.nodes) {
    auto it = graph.roles.find(v);
    if (it != graph.roles.end()) out.roles[v] = it->second;
  }
  detail::assign_features(out);
  return out;
}

inline TemporalGraph augment_one_hop(const TemporalGraph& client_graph,
                                     const PartitionMap& pm, int k) {
  TemporalGraph out = client_graph;
  out.foreign.clear();
  for (NodeId v : out.nodes) {
    auto it = pm.assignment.find(v);
    if (it == pm.assignment.end() || it->second != k) out.foreign.insert(v);
  }
  auto def = detail::default_feature(out);
  for (NodeId v : out.foreign) out.node_features[v] = def;
  out.augmented = true;
  return out;
}

// Flattens the whole event history into one undirected simple graph with
// dense ids following the sorted node order. Self-loops are dropped.
inline StaticGraph flatten(const TemporalGraph& graph) {
  std::unordered_map<NodeId, int> index;
  index.reserve(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    index[graph.nodes[i]] = static_cast<int>(i);
  std::set<std::pair<int, int>> edges;
  for (const auto& e : graph.events) {
    if (e.src == e.dst) continue;
    int u = index[e.src];
    int v = index[e.dst];
    edges.insert({std::min(u, v), std::max(u, v)});
  }
  StaticGraph g;
  g.n = static_cast<int>(graph.nodes.size());
  g.edges.assign(edges.begin(), edges.end());
  return g;
}

inline StaticGraph ba_generate(int n, int m, std::uint64_t seed) {
  if (m < 1 || n <= m) throw std::invalid_argument("need n > m >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> edges;
  std::vector<std::int64_t> degree(static_cast<std::size_t>(n), 0);
  for (int u = 0; u < m; ++u) {
    for (int v = u + 1; v < m; ++v) {
      edges.emplace_back(u, v);
      ++degree[static_cast<std::size_t>(u)];
      ++degree[static_cast<std::size_t>(v)];
    }
  }
  for (int v = m; v < n; ++v) {
    // Attachment probabilities are frozen before v's own edges land.
    std::vector<std::int64_t> prefix(static_cast<std::size_t>(v));
    std::int64_t total = 0;
    for (int u = 0; u < v; ++u) {
      total += degree[static_cast<std::size_t>(u)];
      prefix[static_cast<std::size_t>(u)] = total;
    }
    std::set<int> chosen;
    while (static_cast<int>(chosen.size()) < m) {
      int pick;
      if (total == 0) {
        std::uniform_int_distribution<int> uni(0, v - 1);
        pick = uni(rng);
      } else {
        std::uniform_int_distribution<std::int64_t> uni(0, total - 1);
        std::int64_t r = uni(rng);
        pick = static_cast<int>(
            std::upper_bound(prefix.begin(), prefix.end(), r) - prefix.begin());
      }
      chosen.insert(pick);
    }
    for (int u : chosen) {
      edges.emplace_back(u, v);
      ++degree[static_cast<std::size_t>(u)];
      ++degree[static_cast<std::size_t>(v)];
    }
  }
  StaticGraph g;
  g.n = n;
  for (auto& [u, v] : edges)
    if (u > v) std::swap(u, v);
  std::sort(edges.begin(), edges.end());
  g.edges = std::move(edges);
  return g;
}

}  // namespace entente
