#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "entente/adversary.hpp"
#include "entente/config.hpp"
#include "entente/dataset.hpp"
#include "entente/federation.hpp"
#include "entente/metrics.hpp"
#include "entente/nn.hpp"
#include "entente/pipeline.hpp"
#include "entente/serialize.hpp"

namespace entente {

struct SplitIndices {
  int train_end = 0;  // snapshots [1, train_end] train the model
  int val_end = 0;    // (train_end, val_end] pick the threshold
  int total = 0;      // (val_end, total] are scored as the test period
};

inline SplitIndices compute_split(const ExperimentConfig& cfg, std::int64_t anchor,
                                  int total) {
  SplitIndices s;
  s.total = total;
  if (cfg.split_by_time) {
    for (int t = 1; t <= total; ++t) {
      std::int64_t window_end = anchor + static_cast<std::int64_t>(t) * cfg.window_seconds;
      if (window_end <= cfg.train_end_ts) s.train_end = t;
      if (window_end <= cfg.val_end_ts) s.val_end = t;
    }
  } else {
    s.train_end = static_cast<int>(std::floor(total * cfg.train_frac));
    s.val_end = static_cast<int>(std::floor(total * (cfg.train_frac + cfg.val_frac)));
  }
  if (s.train_end < 1 || s.val_end < s.train_end || s.val_end >= total)
    throw std::invalid_argument("split leaves an empty phase: train_end=" +
                                std::to_string(s.train_end) + " val_end=" +
                                std::to_string(s.val_end) + " total=" +
                                std::to_string(total));
  return s;
}

struct LoadedDataset {
  std::vector<LogEvent> events;
  std::unordered_map<NodeId, int> roles;
};

inline LoadedDataset load_dataset(const ExperimentConfig& cfg) {
  LoadedDataset d;
  if (cfg.use_synth) {
    auto synth = synth_dataset(cfg.synth);
    d.events = std::move(synth.events);
    for (const auto& [node, block] : synth.block_of) d.roles[node] = block;
  } else {
    d.events = load_edge_csv(cfg.csv_path).events;
    if (!cfg.roles_csv.empty())
      for (const auto& [node, role] : load_node_map_csv(cfg.roles_csv, "node,role"))
        d.roles[node] = role;
  }
  if (cfg.feature_mode == FeatureMode::role && d.roles.empty())
    throw std::invalid_argument("role features need roles_csv or synthetic blocks");
  return d;
}

struct PreparedExperiment {
  TemporalGraph global;  // the whole deployment, anomalies included
  std::int64_t anchor = 0;
  int total_snapshots = 0;
  SplitIndices split;
  PartitionMap partition;
  FederationData fed;
  std::optional<TrainBatch> val_batch;
  std::optional<double> epm;  // mean over poisoned clients
  ModelDims dims;
};

// Builds everything run_federation needs from raw events: global snapshot
// grid and split, node partition, per-silo training tensors over the
// training windows only (optionally poisoned), plus a fixed validation batch.
inline PreparedExperiment prepare_experiment(const ExperimentConfig& cfg,
                                             bool enable_attack) {
  if (enable_attack && !cfg.attack)
    throw std::invalid_argument("attack run needs an [attack] section");
  PreparedExperiment px;
  auto data = load_dataset(cfg);
  px.global = build_graph(data.events, cfg.feature_mode, data.roles);
  px.anchor = cfg.anchor >= 0 ? cfg.anchor : px.global.events.front().timestamp;
  px.total_snapshots =
      static_cast<int>(snapshot_split(px.global, cfg.window_seconds, px.anchor).size());
  px.split = compute_split(cfg, px.anchor, px.total_snapshots);
  px.dims = ModelDims{px.global.feature_dim, cfg.d_h, cfg.d_z};

  px.partition = cfg.partition_csv.empty()
                     ? partition_nodes(px.global, cfg.fed.clients, cfg.partition,
                                       cfg.seed_partition)
                     : load_partition_csv(cfg.partition_csv);
  if (px.partition.clients != cfg.fed.clients)
    throw std::invalid_argument("partition covers " + std::to_string(px.partition.clients) +
                                " clients but the federation expects " +
                                std::to_string(cfg.fed.clients));

  const std::int64_t train_cut =
      px.anchor + cfg.window_seconds * static_cast<std::int64_t>(px.split.train_end);
  const std::int64_t val_cut =
      px.anchor + cfg.window_seconds * static_cast<std::int64_t>(px.split.val_end);
  std::vector<LogEvent> train_events;
  for (const auto& e : px.global.events) {
    if (e.timestamp >= train_cut) break;  // events are time-sorted
    if (cfg.clean_training && e.label == 1) continue;
    train_events.push_back(e);
  }
  if (train_events.empty())
    throw std::invalid_argument("training windows contain no usable events");
  auto train_graph =
      build_graph(train_events, cfg.feature_mode, data.roles, px.global.role_count);

  px.fed.total_nodes = static_cast<int>(px.global.nodes.size());
  double epm_sum = 0;
  int poisoned_clients = 0;
  for (int k = 1; k <= cfg.fed.clients; ++k) {
    auto cg = extract_client_graph(train_graph, px.partition, k);
    if (cg.events.empty())
      throw std::invalid_argument("client " + std::to_string(k) +
                                  " has no training events");
    cg = augment_one_hop(cg, px.partition, k);
    auto snaps = snapshot_split(cg, cfg.window_seconds, px.anchor, px.split.train_end);
    if (enable_attack && cfg.attack->malicious_clients.count(k)) {
      std::set<std::pair<NodeId, NodeId>> em_set;
      for (const auto& e : px.global.events) {
        if (e.label != 1 || e.timestamp < val_cut) continue;
        auto sit = px.partition.assignment.find(e.src);
        auto dit = px.partition.assignment.find(e.dst);
        bool visible = (sit != px.partition.assignment.end() && sit->second == k) ||
                       (dit != px.partition.assignment.end() && dit->second == k);
        if (visible) em_set.insert({e.src, e.dst});
      }
      if (!em_set.empty()) {
        std::vector<std::pair<NodeId, NodeId>> em(em_set.begin(), em_set.end());
        auto poisoned = poison_client_data(snaps, em, cfg.attack->p,
                                           derive_seed(cfg.attack->seed, "poison",
                                                       static_cast<std::uint64_t>(k)));
        snaps = std::move(poisoned.snapshots);
        epm_sum += poisoned.epm;
      }
      ++poisoned_clients;
    }
    px.fed.clients.push_back(
        make_federation_client(cg, snaps, cfg.neg_ratio, cfg.offset, cfg.wl_iters));
  }
  if (poisoned_clients > 0) px.epm = epm_sum / poisoned_clients;

  if (px.split.val_end > px.split.train_end) {
    std::vector<LogEvent> val_events;
    for (const auto& e : px.global.events) {
      if (e.timestamp < train_cut) continue;
      if (e.timestamp >= val_cut) break;
      if (cfg.clean_training && e.label == 1) continue;
      val_events.push_back(e);
    }
    if (!val_events.empty()) {
      auto vg = build_graph(val_events, cfg.feature_mode, data.roles, px.global.role_count);
      auto vs = snapshot_split(vg, cfg.window_seconds, train_cut,
                               px.split.val_end - px.split.train_end);
      px.val_batch = make_batch_source(vg, vs, cfg.neg_ratio, cfg.offset)
                         .draw(derive_seed(cfg.seed_eval, "val"));
    }
  }
  return px;
}

struct TrainOutput {
  FederationResult run;
  ModelDims dims;
  std::optional<double> epm;
  std::string trajectory_csv;
  std::string history_json;
};

inline TrainOutput train_experiment(const ExperimentConfig& cfg, bool enable_attack) {
  auto px = prepare_experiment(cfg, enable_attack);
  RunOptions opts;
  if (px.val_batch) opts.validation = &*px.val_batch;
  if (enable_attack) opts.attack = &*cfg.attack;
  TrainOutput out;
  out.run = run_federation(cfg.fed, px.fed, px.dims, opts);
  out.dims = px.dims;
  out.epm = px.epm;
  out.trajectory_csv = render_trajectory_csv(out.run.state);
  out.history_json = render_history_json(cfg.fed, out.run.state, px.epm);
  return out;
}

inline void write_train_artifacts(const std::string& dir, const TrainOutput& out) {
  std::filesystem::create_directories(dir);
  save_model(dir, out.run.params);
  write_text_file(dir + "/weights.csv", out.trajectory_csv);
  write_text_file(dir + "/history.json", out.history_json);
}

struct EvalOutput {
  ScoredEdges test;                      // every test-window edge, true labels
  std::vector<double> malicious_scores;  // the label-1 subset
  SelectedThreshold threshold;
  Confusion conf;
  MetricsReport metrics;
  std::vector<PrPoint> curve;
  std::string metrics_json;
  std::string pr_csv;
};

// Scores the full timeline with the trained model, learns tau on the
// validation windows (real edges against sampled non-edges) and evaluates the
// test windows on their ground-truth labels.
inline EvalOutput evaluate_model(const ExperimentConfig& cfg, const ModelParams& params,
                                 std::optional<double> epm = {}) {
  auto data = load_dataset(cfg);
  auto global = build_graph(data.events, cfg.feature_mode, data.roles);
  if (params.dims.d_x != global.feature_dim)
    throw std::invalid_argument("model expects " + std::to_string(params.dims.d_x) +
                                " input features but the data has " +
                                std::to_string(global.feature_dim));
  std::int64_t anchor = cfg.anchor >= 0 ? cfg.anchor : global.events.front().timestamp;
  auto grid = snapshot_split(global, cfg.window_seconds, anchor);
  auto split = compute_split(cfg, anchor, static_cast<int>(grid.size()));

  std::unordered_map<NodeId, int> index;
  index.reserve(global.nodes.size());
  for (std::size_t i = 0; i < global.nodes.size(); ++i)
    index[global.nodes[i]] = static_cast<int>(i);
  std::vector<Mat> zp;
  zp.reserve(grid.size());
  for (const auto& snap : grid) {
    auto a_hat = normalize_adjacency(snap, global.nodes);
    auto x = snapshot_features(global, snap, index);
    zp.push_back(encode(params, x, a_hat));
  }
  auto states = temporal(params, zp);

  // ground-truth edge labels per window: any malicious event marks the edge
  std::vector<std::map<std::pair<NodeId, NodeId>, int>> labels(grid.size());
  for (const auto& e : global.events) {
    auto t = static_cast<std::size_t>((e.timestamp - anchor) / cfg.window_seconds);
    auto& lab = labels[t][{e.src, e.dst}];
    lab = std::max(lab, e.label);
  }

  EvalOutput out;
  ScoredEdges val;
  auto score_snapshot = [&](int t, bool with_negatives, ScoredEdges& dst,
                            std::vector<double>* malicious) {
    int zi = t - 1 - cfg.offset;
    if (zi < 0) return;
    const Mat& z = states[static_cast<std::size_t>(zi)];
    const Snapshot& snap = grid[static_cast<std::size_t>(t - 1)];
    for (const auto& [edge, w] : snap.edges) {
      double p = sigmoid(z.row(index.at(edge.first)).dot(z.row(index.at(edge.second))));
      int lab = labels[static_cast<std::size_t>(t - 1)].at(edge);
      dst.scores.push_back(1.0 - p);
      dst.labels.push_back(lab);
      if (malicious && lab == 1) malicious->push_back(1.0 - p);
    }
    if (!with_negatives || snap.edges.empty() || snap.nodes.size() < 2) return;
    std::set<std::pair<NodeId, NodeId>> undirected;
    for (const auto& [edge, w] : snap.edges) {
      if (edge.first == edge.second) continue;
      undirected.insert(
          {std::min(edge.first, edge.second), std::max(edge.first, edge.second)});
    }
    std::size_t n = snap.nodes.size();
    std::size_t possible = n * (n - 1) / 2 - undirected.size();
    auto want = static_cast<std::size_t>(
        std::llround(cfg.neg_ratio * static_cast<double>(snap.edges.size())));
    auto negs = negative_sample_count(snap, std::min(want, possible),
                                      derive_seed(cfg.seed_eval, "valneg",
                                                  static_cast<std::uint64_t>(t)));
    for (auto [u, v] : negs) {
      double p = sigmoid(z.row(index.at(u)).dot(z.row(index.at(v))));
      dst.scores.push_back(1.0 - p);
      dst.labels.push_back(1);  // a non-edge stands in for malicious traffic
    }
  };
  for (int t = split.train_end + 1; t <= split.val_end; ++t)
    score_snapshot(t, true, val, nullptr);
  for (int t = split.val_end + 1; t <= split.total; ++t)
    score_snapshot(t, false, out.test, &out.malicious_scores);
  if (out.test.scores.empty()) throw std::runtime_error("test windows have no edges to score");
  if (val.scores.empty()) throw std::runtime_error("validation windows have no edges to score");

  out.threshold = select_threshold(val, ThresholdObjective::f1());
  out.conf = confusion(out.test, out.threshold.tau);
  auto positives = static_cast<std::size_t>(
      std::count(out.test.labels.begin(), out.test.labels.end(), 1));
  out.metrics.tau = out.threshold.tau;
  out.metrics.precision = out.conf.precision;
  out.metrics.recall = out.conf.recall;
  out.metrics.fpr_printed = out.conf.fpr_printed;
  out.metrics.fpr_conventional = out.conf.fpr_conventional;
  if (positives > 0) {
    out.metrics.ap = average_precision(out.test);
    out.curve = pr_curve(out.test);
  }
  if (positives > 0 && positives < out.test.labels.size())
    out.metrics.auc = roc_auc(out.test);
  if (!out.malicious_scores.empty())
    out.metrics.sr = attack_success_rate(out.malicious_scores, out.threshold.tau);
  out.metrics.epm = epm;
  out.metrics_json = render_metrics_json(out.metrics);
  out.pr_csv = render_pr_csv(out.curve);
  return out;
}

inline void write_eval_artifacts(const std::string& dir, const EvalOutput& out) {
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/metrics.json", out.metrics_json);
  write_text_file(dir + "/pr_curve.csv", out.pr_csv);
}

}  // namespace entente
