#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entente/graph.hpp"

namespace entente {

struct EdgeCsv {
  std::vector<LogEvent> events;
  // Non-numeric ids get interned in order of first appearance; id_names maps
  // the dense id back to the original token. Empty when ids were integers.
  std::vector<std::string> id_names;
};

namespace detail {

inline bool parse_i64(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline EdgeCsv load_edge_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
  };
  ++line_no;
  if (!std::getline(in, line)) fail("empty file");
  if (detail::strip_cr(line) != "src,dst,timestamp,label")
    fail("expected header src,dst,timestamp,label");

  struct RawRow {
    std::string src, dst;
    std::int64_t timestamp;
    int label;
  };
  std::vector<RawRow> rows;
  bool all_numeric = true;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      fail("blank row");
    }
    auto fields = detail::split_fields(line);
    if (fields.size() != 4) fail("expected 4 columns, got " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) fail("empty node id");
    std::int64_t ts;
    if (!detail::parse_i64(fields[2], ts)) fail("non-integer timestamp '" + fields[2] + "'");
    std::int64_t lab;
    if (!detail::parse_i64(fields[3], lab) || (lab != 0 && lab != 1))
      fail("label must be 0 or 1, got '" + fields[3] + "'");
    std::int64_t ignored;
    if (!detail::parse_i64(fields[0], ignored) || !detail::parse_i64(fields[1], ignored))
      all_numeric = false;
    rows.push_back({std::move(fields[0]), std::move(fields[1]), ts, static_cast<int>(lab)});
  }

  EdgeCsv out;
  out.events.reserve(rows.size());
  if (all_numeric) {
    // Integer ids pass through verbatim so write -> load round-trips.
    for (const auto& r : rows) {
      std::int64_t s = 0, d = 0;
      detail::parse_i64(r.src, s);
      detail::parse_i64(r.dst, d);
      out.events.push_back({s, d, r.timestamp, r.label});
    }
    return out;
  }
  std::unordered_map<std::string, NodeId> intern;
  auto id_of = [&](const std::string& name) {
    auto [it, fresh] = intern.emplace(name, static_cast<NodeId>(out.id_names.size()));
    if (fresh) out.id_names.push_back(name);
    return it->second;
  };
  for (const auto& r : rows)
    out.events.push_back({id_of(r.src), id_of(r.dst), r.timestamp, r.label});
  return out;
}

inline void write_edge_csv(const std::string& path, const std::vector<LogEvent>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "src,dst,timestamp,label\n";
  for (const auto& e : events)
    out << e.src << ',' << e.dst << ',' << e.timestamp << ',' << e.label << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline void write_id_map_csv(const std::string& path, const std::vector<std::string>& names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "id,name\n";
  for (std::size_t i = 0; i < names.size(); ++i) out << i << ',' << names[i] << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

// Two-column node attribute files: partitions (node,client), ground-truth
// blocks (node,block), roles (node,role).
inline std::map<NodeId, int> load_node_map_csv(const std::string& path,
                                               const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || detail::strip_cr(line) != header)
    throw std::runtime_error(path + ":1: expected header " + header);
  std::map<NodeId, int> out;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    auto fields = detail::split_fields(line);
    std::int64_t node, value;
    if (fields.size() != 2 || !detail::parse_i64(fields[0], node) ||
        !detail::parse_i64(fields[1], value))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed row");
    out[node] = static_cast<int>(value);
  }
  return out;
}

inline void write_node_map_csv(const std::string& path, const std::string& header,
                               const std::map<NodeId, int>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << header << '\n';
  for (const auto& [node, value] : values) out << node << ',' << value << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline PartitionMap load_partition_csv(const std::string& path) {
  PartitionMap pm;
  for (const auto& [node, client] : load_node_map_csv(path, "node,client")) {
    if (client < 1) throw std::runtime_error(path + ": client index must be >= 1");
    pm.assignment[node] = client;
    pm.clients = std::max(pm.clients, client);
  }
  return pm;
}

inline void write_partition_csv(const std::string& path, const PartitionMap& pm) {
  std::map<NodeId, int> sorted(pm.assignment.begin(), pm.assignment.end());
  write_node_map_csv(path, "node,client", sorted);
}

struct SynthSpec {
  int nodes = 200;
  int blocks = 4;
  int snapshots = 20;  // T
  std::int64_t window_seconds = 100;
  double intra_prob = 0.05;
  double inter_prob = 0.005;
  int anomaly_count = 40;
  int anomaly_start = 18;  // snapshot index range, inclusive
  int anomaly_end = 20;
  std::uint64_t seed = 1;
};

struct SynthResult {
  std::vector<LogEvent> events;
  std::map<NodeId, int> block_of;
};

inline void validate_synth(const SynthSpec& s) {
  if (s.nodes < 2) throw std::invalid_argument("need at least 2 nodes");
  if (s.blocks < 1 || s.blocks > s.nodes)
    throw std::invalid_argument("blocks must be in [1, nodes]");
  if (s.snapshots < 1) throw std::invalid_argument("need at least 1 snapshot");
  if (s.window_seconds <= 0) throw std::invalid_argument("window must be positive");
  if (s.intra_prob < 0 || s.intra_prob > 1 || s.inter_prob < 0 || s.inter_prob > 1)
    throw std::invalid_argument("edge probabilities must be in [0,1]");
  if (s.anomaly_count < 0) throw std::invalid_argument("anomaly_count must be >= 0");
  if (s.anomaly_count > 0) {
    if (s.blocks < 2)
      throw std::invalid_argument("cross-block anomalies need at least 2 blocks");
    if (s.anomaly_start < 1 || s.anomaly_end < s.anomaly_start ||
        s.anomaly_end > s.snapshots)
      throw std::invalid_argument("anomaly window must lie within [1, snapshots]");
  }
}

// Stochastic block model unrolled over T windows, with label-1 edges planted
// between cross-block pairs that never exchange benign traffic.
inline SynthResult synth_dataset(const SynthSpec& spec) {
  validate_synth(spec);
  SynthResult out;
  for (int v = 0; v < spec.nodes; ++v)
    out.block_of[v] = static_cast<int>(static_cast<std::int64_t>(v) * spec.blocks /
                                       spec.nodes);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> in_window(0, spec.window_seconds - 1);
  std::bernoulli_distribution flip(0.5);

  std::set<std::pair<NodeId, NodeId>> talked;
  for (int t = 1; t <= spec.snapshots; ++t) {
    std::int64_t base = static_cast<std::int64_t>(t - 1) * spec.window_seconds;
    for (int u = 0; u < spec.nodes; ++u) {
      for (int v = u + 1; v < spec.nodes; ++v) {
        double p = out.block_of[u] == out.block_of[v] ? spec.intra_prob : spec.inter_prob;
        if (!(uni(rng) < p)) continue;
        std::int64_t ts = base + in_window(rng);
        if (flip(rng))
          out.events.push_back({u, v, ts, 0});
        else
          out.events.push_back({v, u, ts, 0});
        talked.insert({u, v});
      }
    }
  }

  if (spec.anomaly_count > 0) {
    std::vector<std::pair<NodeId, NodeId>> candidates;
    for (int u = 0; u < spec.nodes; ++u)
      for (int v = u + 1; v < spec.nodes; ++v)
        if (out.block_of[u] != out.block_of[v] && !talked.count({u, v}))
          candidates.emplace_back(u, v);
    if (candidates.size() < static_cast<std::size_t>(spec.anomaly_count))
      throw std::runtime_error("graph too dense to plant anomalies");
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::int64_t span_start =
        static_cast<std::int64_t>(spec.anomaly_start - 1) * spec.window_seconds;
    std::int64_t span_end =
        static_cast<std::int64_t>(spec.anomaly_end) * spec.window_seconds;
    std::uniform_int_distribution<std::int64_t> in_span(span_start, span_end - 1);
    for (int i = 0; i < spec.anomaly_count; ++i) {
      auto [u, v] = candidates[static_cast<std::size_t>(i)];
      std::int64_t ts = in_span(rng);
      if (flip(rng))
        out.events.push_back({u, v, ts, 1});
      else
        out.events.push_back({v, u, ts, 1});
    }
  }
  return out;
}

}  // namespace entente
