#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "entente/adversary.hpp"
#include "entente/graph.hpp"
#include "entente/hash.hpp"
#include "entente/model.hpp"
#include "entente/nn.hpp"
#include "entente/wl.hpp"

namespace entente {

enum class Scheme { fedavg, fedavg_n, fedprox, entente_ub, entente, entente_dp };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::fedavg: return "fedavg";
    case Scheme::fedavg_n: return "fedavg_n";
    case Scheme::fedprox: return "fedprox";
    case Scheme::entente_ub: return "entente_ub";
    case Scheme::entente: return "entente";
    case Scheme::entente_dp: return "entente_dp";
  }
  throw std::invalid_argument("unknown scheme");
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "fedavg") return Scheme::fedavg;
  if (s == "fedavg_n") return Scheme::fedavg_n;
  if (s == "fedprox") return Scheme::fedprox;
  if (s == "entente_ub") return Scheme::entente_ub;
  if (s == "entente") return Scheme::entente;
  if (s == "entente_dp") return Scheme::entente_dp;
  throw std::invalid_argument("unknown scheme: " + s);
}

struct DpParams {
  double m_qs = 5.0;  // quantile-scale bound; defaults to the clip bound M
  double sigma = 1.0;
};

struct FederationConfig {
  int clients = 4;          // K
  int max_iterations = 30;  // R
  int local_epochs = 1;     // E
  double eta = 0.01;
  double c1 = 0.8;
  double c2 = 0.2;
  double omega = 5.0;
  double norm_cap = 5.0;  // M
  int ba_m = 5;
  Scheme scheme = Scheme::entente;
  std::optional<DpParams> dp;
  double stop_tol = 1e-4;
  int stop_patience = 3;
  double prox_mu = 0.05;  // fedprox only
  std::uint64_t seed = 1;
  int workers = 1;
};

inline void validate_config(const FederationConfig& cfg) {
  if (cfg.clients < 1) throw std::invalid_argument("need at least one client");
  if (cfg.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (cfg.local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
  if (cfg.c1 < 0 || cfg.c2 < 0) throw std::invalid_argument("c1, c2 must be >= 0");
  if (cfg.omega <= 0) throw std::invalid_argument("omega must be > 0");
  if (cfg.norm_cap <= 0) throw std::invalid_argument("norm bound must be > 0");
  if (cfg.workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (cfg.scheme == Scheme::entente_dp && !cfg.dp)
    throw std::invalid_argument("entente_dp needs dp parameters");
}

struct ClientWeights {
  double s_jac = 0;  // graph similarity to the reference, fixed per run
  double s = 0;      // |cosine| to the previous global model
  double d = 0;      // omega-capped L2 distance to the previous global model
  double r = 0;      // effective contribution weight
};

struct IterationRecord {
  int iteration = 0;
  double train_loss = 0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double delta_norm = 0;  // ||w_{i+1} - w_i||_2
  double rel_change = 0;  // delta_norm / ||w_i||_2
  std::vector<ClientWeights> weights;
};

struct FederationState {
  ModelParams global;
  int iteration = 0;
  std::vector<double> s_jac;  // per client, from bootstrap
  std::vector<ClientWeights> current;
  std::vector<IterationRecord> history;
  bool aborted = false;
  std::string diagnosis;
  bool stopped_early = false;
  std::mt19937_64 noise_rng;
};

// Server-side setup: build the shared reference graph from public facts only
// (node count), sketch it, and score every client sketch against it.
inline std::vector<double> bootstrap(const FederationConfig& cfg, int total_nodes,
                                     const std::vector<WLHistogram>& client_sketches) {
  if (total_nodes <= cfg.ba_m)
    throw std::invalid_argument("total_nodes must exceed the BA attachment count");
  if (client_sketches.empty()) throw std::invalid_argument("no client sketches");
  auto ref = ba_generate(total_nodes, cfg.ba_m, derive_seed(cfg.seed, "refgraph"));
  auto ref_sketch = wl_histogram(ref, client_sketches.front().max_iters);
  std::vector<double> out;
  out.reserve(client_sketches.size());
  for (const auto& sk : client_sketches) out.push_back(jaccard_similarity(sk, ref_sketch));
  return out;
}

// Adaptive contribution scaling inputs: absolute cosine similarity (0 when
// either vector vanishes) and the omega-capped L2 distance.
inline std::pair<double, double> acs(const ModelParams& w_prev, const ModelParams& w_k,
                                     double omega) {
  if (w_prev.flat.size() != w_k.flat.size() || !(w_prev.dims == w_k.dims))
    throw std::invalid_argument("parameter layout mismatch");
  double dot = 0, na = 0, nb = 0, dist = 0;
  for (std::size_t i = 0; i < w_prev.flat.size(); ++i) {
    dot += w_k.flat[i] * w_prev.flat[i];
    na += w_k.flat[i] * w_k.flat[i];
    nb += w_prev.flat[i] * w_prev.flat[i];
    double diff = w_k.flat[i] - w_prev.flat[i];
    dist += diff * diff;
  }
  double s = 0;
  if (na > 0 && nb > 0) s = std::clamp(std::abs(dot) / std::sqrt(na * nb), 0.0, 1.0);
  double d = std::min(std::sqrt(dist), omega);
  return {s, d};
}

inline std::vector<double> norm_bound(const std::vector<double>& delta, double m) {
  if (m <= 0) throw std::invalid_argument("norm bound must be > 0");
  double scale = std::max(1.0, l2_norm(delta) / m);
  std::vector<double> out(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) out[i] = delta[i] / scale;
  return out;
}

struct ClientMeta {
  double s_jac = 0;
  int node_count = 0;
};

// Folds the K submissions into the next global model under the configured
// scheme, recording per-client contribution weights in the state. Submissions
// are processed in client-index order; any non-finite input aborts the round
// with a NaN diagnosis instead of silently propagating.
inline ModelParams aggregate(const FederationConfig& cfg, FederationState& state,
                             const std::vector<ModelParams>& client_params,
                             const std::vector<ClientMeta>& client_meta) {
  const auto k_count = client_params.size();
  if (k_count == 0 || client_meta.size() != k_count)
    throw std::invalid_argument("client submissions and metadata must align");
  for (const auto& p : client_params) {
    if (p.flat.size() != state.global.flat.size())
      throw std::invalid_argument("client parameter layout mismatch");
    if (!all_finite(p.flat)) {
      state.aborted = true;
      state.diagnosis = "NaN";
      return state.global;
    }
  }

  state.current.assign(k_count, ClientWeights{});
  const double r_cap = cfg.c1 + cfg.c2 * cfg.omega;
  std::vector<double> next(state.global.flat.size(), 0.0);
  double total_nodes = 0;
  for (const auto& meta : client_meta) total_nodes += meta.node_count;

  for (std::size_t k = 0; k < k_count; ++k) {
    auto [s, d] = acs(state.global, client_params[k], cfg.omega);
    auto& cw = state.current[k];
    cw.s_jac = client_meta[k].s_jac;
    cw.s = s;
    cw.d = d;
    switch (cfg.scheme) {
      case Scheme::fedavg:
      case Scheme::fedprox:
        cw.r = 1.0 / static_cast<double>(k_count);
        for (std::size_t i = 0; i < next.size(); ++i)
          next[i] += cw.r * client_params[k].flat[i];
        break;
      case Scheme::fedavg_n: {
        cw.r = total_nodes > 0 ? client_meta[k].node_count / total_nodes
                               : 1.0 / static_cast<double>(k_count);
        for (std::size_t i = 0; i < next.size(); ++i)
          next[i] += cw.r * client_params[k].flat[i];
        break;
      }
      case Scheme::entente_ub: {
        cw.r = cfg.c1 * cw.s_jac + cfg.c2 * s * d;
        double w = cw.r / static_cast<double>(k_count);
        for (std::size_t i = 0; i < next.size(); ++i)
          next[i] += w * client_params[k].flat[i];
        break;
      }
      case Scheme::entente:
      case Scheme::entente_dp: {
        cw.r = cfg.c1 * cw.s_jac + cfg.c2 * s * d;
        std::vector<double> delta(next.size());
        for (std::size_t i = 0; i < next.size(); ++i)
          delta[i] = client_params[k].flat[i] - state.global.flat[i];
        auto bounded = norm_bound(delta, cfg.norm_cap);
        double w = cw.r / static_cast<double>(k_count);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += w * bounded[i];
        break;
      }
    }
    if (cw.r > r_cap + 1e-9 * r_cap) throw std::logic_error("contribution weight exceeds bound");
  }

  ModelParams result;
  result.dims = state.global.dims;
  if (cfg.scheme == Scheme::entente || cfg.scheme == Scheme::entente_dp) {
    result.flat.resize(next.size());
    for (std::size_t i = 0; i < next.size(); ++i)
      result.flat[i] = state.global.flat[i] + next[i];
    double shift = 0;
    for (std::size_t i = 0; i < next.size(); ++i) shift += next[i] * next[i];
    if (std::sqrt(shift) > r_cap * cfg.norm_cap * (1.0 + 1e-9))
      throw std::logic_error("aggregation shift exceeds clip bound");
    if (cfg.scheme == Scheme::entente_dp) {
      std::normal_distribution<double> noise(0.0, cfg.dp->m_qs * cfg.dp->sigma);
      for (auto& x : result.flat) x += noise(state.noise_rng);
    }
  } else {
    result.flat = std::move(next);
    if (cfg.scheme == Scheme::entente_ub) {
      double lhs = l1_norm(result.flat);
      double rhs = 0;
      for (const auto& p : client_params) rhs += l1_norm(p.flat);
      rhs *= r_cap / static_cast<double>(k_count);
      if (lhs > rhs * (1.0 + 1e-9)) throw std::logic_error("aggregate L1 bound violated");
    }
  }
  if (!all_finite(result.flat)) {
    state.aborted = true;
    state.diagnosis = "NaN";
    return state.global;
  }
  return result;
}

// True when the global model has settled (relative change below tol for the
// last `patience` rows) or validation loss stopped improving for `patience`
// rows. The training loop consults this before starting an iteration.
inline bool early_stop(const std::vector<IterationRecord>& history, double tol,
                       int patience) {
  if (patience < 1 || static_cast<int>(history.size()) < patience) return false;
  bool settled = true;
  for (std::size_t i = history.size() - static_cast<std::size_t>(patience);
       i < history.size(); ++i) {
    if (!(history[i].rel_change < tol)) {
      settled = false;
      break;
    }
  }
  if (settled) return true;

  // validation stagnation: best row must be at least `patience` rows back
  std::size_t best = 0;
  bool any_val = false;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (std::isnan(history[i].val_loss)) continue;
    any_val = true;
    if (history[i].val_loss < best_val) {
      best_val = history[i].val_loss;
      best = i;
    }
  }
  return any_val && history.size() - 1 - best >= static_cast<std::size_t>(patience);
}

// One silo as the server sees it: training tensors, structure sketch,
// and the node count used by size-weighted averaging.
struct FederationClient {
  BatchSource data;
  WLHistogram sketch;
  int node_count = 0;
};

struct FederationData {
  std::vector<FederationClient> clients;
  int total_nodes = 0;
};

struct RunOptions {
  const TrainBatch* validation = nullptr;  // fixed pre-drawn batch
  const AttackConfig* attack = nullptr;    // model scaling only; data poisoning
                                           // happens when client views are built
};

struct FederationResult {
  ModelParams params;
  FederationState state;
};

// Main loop: bootstrap similarity weights once, then up to R rounds of
// broadcast, parallel local training, scheme-specific aggregation and an
// early-stop check. Client jobs get precomputed seeds and land in
// index-order slots, so the outcome is identical for any worker count.
inline FederationResult run_federation(const FederationConfig& cfg,
                                       const FederationData& data,
                                       const ModelDims& dims,
                                       const RunOptions& opts = {}) {
  validate_config(cfg);
  if (data.clients.size() != static_cast<std::size_t>(cfg.clients))
    throw std::invalid_argument("client count does not match config");
  const int k_count = cfg.clients;

  FederationState state;
  state.global = init_params(dims, derive_seed(cfg.seed, "init"));
  state.noise_rng.seed(derive_seed(cfg.seed, "dp"));
  {
    std::vector<WLHistogram> sketches;
    sketches.reserve(data.clients.size());
    for (const auto& c : data.clients) sketches.push_back(c.sketch);
    state.s_jac = bootstrap(cfg, data.total_nodes, sketches);
  }
  state.current.assign(static_cast<std::size_t>(k_count), ClientWeights{});
  for (int k = 0; k < k_count; ++k) {
    state.current[static_cast<std::size_t>(k)].s_jac = state.s_jac[static_cast<std::size_t>(k)];
    state.current[static_cast<std::size_t>(k)].r = state.s_jac[static_cast<std::size_t>(k)];
  }

  std::vector<ClientMeta> meta(static_cast<std::size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    meta[static_cast<std::size_t>(k)].s_jac = state.s_jac[static_cast<std::size_t>(k)];
    meta[static_cast<std::size_t>(k)].node_count =
        data.clients[static_cast<std::size_t>(k)].node_count;
  }

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    state.iteration = iter;
    if (early_stop(state.history, cfg.stop_tol, cfg.stop_patience)) {
      state.stopped_early = true;
      break;
    }

    std::vector<LocalTrainResult> results(static_cast<std::size_t>(k_count));
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(k_count));
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k)
      seeds[static_cast<std::size_t>(k)] = derive_seed(
          cfg.seed, "local",
          static_cast<std::uint64_t>(iter) * 1000003ULL + static_cast<std::uint64_t>(k));

    Prox prox{cfg.prox_mu, &state.global};
    const Prox* prox_ptr = cfg.scheme == Scheme::fedprox ? &prox : nullptr;
    auto train_span = [&](int worker) {
      for (int k = worker; k < k_count; k += std::max(1, cfg.workers)) {
        try {
          results[static_cast<std::size_t>(k)] = local_train(
              state.global, data.clients[static_cast<std::size_t>(k)].data,
              cfg.local_epochs, cfg.eta, prox_ptr, seeds[static_cast<std::size_t>(k)]);
        } catch (...) {
          failures[static_cast<std::size_t>(k)] = std::current_exception();
        }
      }
    };
    if (cfg.workers <= 1) {
      train_span(0);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(cfg.workers));
      for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(train_span, w);
      for (auto& t : pool) t.join();
    }
    for (const auto& f : failures) {
      if (f) {
        // a silo diverged hard enough to overflow its local loss
        state.aborted = true;
        state.diagnosis = "NaN";
        break;
      }
    }
    if (state.aborted) break;

    double train_loss = 0;
    std::vector<ModelParams> submitted;
    submitted.reserve(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k) {
      auto& res = results[static_cast<std::size_t>(k)];
      train_loss += res.loss;
      if (opts.attack && opts.attack->malicious_clients.count(k + 1))
        res.params = scale_update(res.params, opts.attack->gamma);
      submitted.push_back(std::move(res.params));
    }
    train_loss /= static_cast<double>(k_count);

    ModelParams prev = state.global;
    ModelParams next = aggregate(cfg, state, submitted, meta);
    if (state.aborted) break;
    state.global = std::move(next);

    IterationRecord rec;
    rec.iteration = iter;
    rec.train_loss = train_loss;
    double delta_sq = 0, prev_sq = 0;
    for (std::size_t i = 0; i < prev.flat.size(); ++i) {
      double diff = state.global.flat[i] - prev.flat[i];
      delta_sq += diff * diff;
      prev_sq += prev.flat[i] * prev.flat[i];
    }
    rec.delta_norm = std::sqrt(delta_sq);
    rec.rel_change = rec.delta_norm / std::max(std::sqrt(prev_sq), 1e-12);
    if (opts.validation) {
      try {
        rec.val_loss = loss_value(state.global, *opts.validation);
      } catch (const std::exception&) {
        state.aborted = true;
        state.diagnosis = "NaN";
        state.history.push_back(rec);
        break;
      }
    }
    rec.weights = state.current;
    state.history.push_back(rec);
  }

  return {state.global, std::move(state)};
}

}  // namespace entente
