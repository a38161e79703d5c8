#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "entente/graph.hpp"
#include "entente/hash.hpp"
#include "entente/model.hpp"

namespace entente {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Symmetric renormalized adjacency over a fixed node order. Nodes absent
// from the snapshot only carry their self-loop, so their row is e_i and the
// encoder maps their zero features to a zero embedding.
inline Mat normalize_adjacency(const Snapshot& snap,
                               const std::vector<NodeId>& node_order) {
  const auto n = static_cast<Eigen::Index>(node_order.size());
  std::unordered_map<NodeId, Eigen::Index> index;
  index.reserve(node_order.size());
  for (Eigen::Index i = 0; i < n; ++i) index[node_order[static_cast<std::size_t>(i)]] = i;
  Mat b = Mat::Identity(n, n);
  for (const auto& [edge, w] : snap.edges) {
    auto su = index.find(edge.first);
    auto sv = index.find(edge.second);
    if (su == index.end() || sv == index.end())
      throw std::invalid_argument("node order does not cover snapshot nodes");
    if (su->second == sv->second) {
      b(su->second, sv->second) += w;
    } else {
      b(su->second, sv->second) += w;
      b(sv->second, su->second) += w;
    }
  }
  Eigen::VectorXd d = b.rowwise().sum();
  Mat a_hat(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      a_hat(i, j) = b(i, j) / std::sqrt(d(i) * d(j));
  return a_hat;
}

inline Mat encode(const ModelParams& params, const Mat& x, const Mat& a_hat) {
  auto v = view(params);
  if (x.cols() != params.dims.d_x || a_hat.rows() != a_hat.cols() ||
      a_hat.rows() != x.rows())
    throw std::invalid_argument("encode shape mismatch");
  Mat h = (a_hat * x * v.w1).cwiseMax(0.0);
  return a_hat * h * v.w2;
}

struct GruCache {
  std::vector<Mat> x, z, r, g, h;
};

// Per-node GRU over the snapshot sequence, zero initial state.
// h_t = (1 - z_t) * cand_t + z_t * h_{t-1}, candidate uses the reset gate on
// the previous state before the recurrent weight.
inline std::vector<Mat> temporal(const ModelParams& params,
                                 const std::vector<Mat>& inputs,
                                 GruCache* cache = nullptr) {
  auto v = view(params);
  const int d_z = params.dims.d_z;
  std::vector<Mat> out;
  out.reserve(inputs.size());
  if (inputs.empty()) return out;
  const auto n = inputs.front().rows();
  Mat h = Mat::Zero(n, d_z);
  for (const auto& x : inputs) {
    if (x.rows() != n || x.cols() != d_z)
      throw std::invalid_argument("temporal shape mismatch");
    Mat z = ((x * v.update.w + h * v.update.u).rowwise() + v.update.b)
                .unaryExpr([](double a) { return sigmoid(a); });
    Mat r = ((x * v.reset.w + h * v.reset.u).rowwise() + v.reset.b)
                .unaryExpr([](double a) { return sigmoid(a); });
    Mat g = ((x * v.cand.w + (r.cwiseProduct(h)) * v.cand.u).rowwise() + v.cand.b)
                .array()
                .tanh()
                .matrix();
    Mat h_next = (Mat::Ones(n, d_z) - z).cwiseProduct(g) + z.cwiseProduct(h);
    if (cache) {
      cache->x.push_back(x);
      cache->z.push_back(z);
      cache->r.push_back(r);
      cache->g.push_back(g);
      cache->h.push_back(h_next);
    }
    out.push_back(h_next);
    h = std::move(h_next);
  }
  return out;
}

inline std::vector<double> decode(const Mat& z,
                                  const std::vector<std::pair<int, int>>& edges) {
  std::vector<double> scores;
  scores.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= z.rows() || v >= z.rows())
      throw std::invalid_argument("edge index out of range");
    scores.push_back(sigmoid(z.row(u).dot(z.row(v))));
  }
  return scores;
}

// Uniform non-edges of a snapshot. Pairs are undirected and never self-loops;
// a pair counts as an edge if either orientation appears in the snapshot, so
// the symmetric decoder never sees the same pair as both target classes.
inline std::vector<std::pair<NodeId, NodeId>> negative_sample_count(
    const Snapshot& snap, std::size_t count, std::uint64_t seed) {
  if (count == 0) return {};
  if (snap.nodes.size() < 2)
    throw std::invalid_argument("snapshot needs at least 2 nodes to sample negatives");
  std::set<std::pair<NodeId, NodeId>> present;
  for (const auto& [edge, w] : snap.edges) {
    if (edge.first == edge.second) continue;
    present.insert({std::min(edge.first, edge.second), std::max(edge.first, edge.second)});
  }
  const std::size_t n = snap.nodes.size();
  const std::size_t possible = n * (n - 1) / 2 - present.size();
  if (count > possible)
    throw std::runtime_error("graph too dense to sample negatives");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::set<std::pair<NodeId, NodeId>> chosen;
  std::size_t cap = 100 * count;
  for (std::size_t attempt = 0; chosen.size() < count; ++attempt) {
    if (attempt >= cap) throw std::runtime_error("graph too dense to sample negatives");
    NodeId u = snap.nodes[pick(rng)];
    NodeId v = snap.nodes[pick(rng)];
    if (u == v) continue;
    std::pair<NodeId, NodeId> e{std::min(u, v), std::max(u, v)};
    if (present.count(e) || chosen.count(e)) continue;
    chosen.insert(e);
  }
  return {chosen.begin(), chosen.end()};
}

inline std::vector<std::pair<NodeId, NodeId>> negative_sample(const Snapshot& snap,
                                                              double ratio,
                                                              std::uint64_t seed) {
  if (ratio < 0) throw std::invalid_argument("ratio must be >= 0");
  auto count = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(snap.edges.size())));
  return negative_sample_count(snap, count, seed);
}

// One snapshot prepared for the model: features and normalized adjacency over
// the client node order, positives as row indices.
struct SnapshotData {
  Mat x;
  Mat a_hat;
  std::vector<std::pair<int, int>> positives;
};

struct TrainBatch {
  std::vector<SnapshotData> snapshots;
  std::vector<std::vector<std::pair<int, int>>> negatives;  // per snapshot
  int offset = 0;  // score snapshot t+offset edges from Z_t
};

struct Prox {
  double mu = 0.0;
  const ModelParams* anchor = nullptr;
};

namespace detail {

inline void validate_batch(const ModelParams& params, const TrainBatch& batch) {
  if (batch.offset != 0 && batch.offset != 1)
    throw std::invalid_argument("prediction offset must be 0 or 1");
  if (batch.negatives.size() != batch.snapshots.size())
    throw std::invalid_argument("negatives must align with snapshots");
  for (const auto& s : batch.snapshots) {
    if (s.x.cols() != params.dims.d_x || s.a_hat.rows() != s.x.rows() ||
        s.a_hat.cols() != s.x.rows())
      throw std::invalid_argument("batch shape mismatch");
  }
}

}  // namespace detail

// Mean binary cross-entropy over all positive and negative terms of all
// scored snapshots, with full analytic backpropagation through the decoder,
// the GRU, and both GCN layers. Scores are clamped to [1e-7, 1-1e-7] before
// the log; gradients use the raw sigmoid output.
inline std::pair<double, std::vector<double>> loss_and_grad(
    const ModelParams& params, const TrainBatch& batch, const Prox* prox = nullptr) {
  detail::validate_batch(params, batch);
  const auto& dims = params.dims;
  auto v = view(params);
  const auto t_total = batch.snapshots.size();
  const std::size_t scored =
      t_total > static_cast<std::size_t>(batch.offset) ? t_total - batch.offset : 0;

  std::vector<double> grad(params.flat.size(), 0.0);
  ParamsView g(grad.data(), dims);

  // forward: GCN per snapshot, caching pre-activation inputs
  std::vector<Mat> m_cache(t_total), p_cache(t_total), q_cache(t_total), zp(t_total);
  for (std::size_t t = 0; t < t_total; ++t) {
    const auto& s = batch.snapshots[t];
    m_cache[t] = s.a_hat * s.x;
    p_cache[t] = m_cache[t] * v.w1;
    Mat h = p_cache[t].cwiseMax(0.0);
    q_cache[t] = s.a_hat * h;
    zp[t] = q_cache[t] * v.w2;
  }
  GruCache gru;
  auto states = temporal(params, zp, &gru);

  // count decoder terms first so every term carries the same 1/N coefficient
  std::size_t n_terms = 0;
  for (std::size_t t = 0; t < scored; ++t) {
    n_terms += batch.snapshots[t + static_cast<std::size_t>(batch.offset)].positives.size();
    n_terms += batch.negatives[t + static_cast<std::size_t>(batch.offset)].size();
  }

  double loss = 0.0;
  std::vector<Mat> dh(t_total);
  for (std::size_t t = 0; t < t_total; ++t)
    dh[t] = Mat::Zero(states.empty() ? 0 : states[t].rows(), dims.d_z);

  const double clamp_lo = 1e-7, clamp_hi = 1.0 - 1e-7;
  for (std::size_t t = 0; t < scored; ++t) {
    const std::size_t src = t + static_cast<std::size_t>(batch.offset);
    const Mat& z = states[t];
    auto scan = [&](const std::vector<std::pair<int, int>>& edges, double target) {
      for (auto [a, b] : edges) {
        if (a < 0 || b < 0 || a >= z.rows() || b >= z.rows())
          throw std::invalid_argument("edge index out of range");
        double s = sigmoid(z.row(a).dot(z.row(b)));
        double sc = std::clamp(s, clamp_lo, clamp_hi);
        loss += target > 0.5 ? -std::log(sc) : -std::log(1.0 - sc);
        double coeff = (s - target) / static_cast<double>(n_terms);
        dh[t].row(a) += coeff * z.row(b);
        dh[t].row(b) += coeff * z.row(a);
      }
    };
    scan(batch.snapshots[src].positives, 1.0);
    scan(batch.negatives[src], 0.0);
  }
  if (n_terms > 0) loss /= static_cast<double>(n_terms);

  // backward through time
  std::vector<Mat> dx(t_total);
  if (!states.empty()) {
    const auto n = states.front().rows();
    Mat carry = Mat::Zero(n, dims.d_z);
    for (std::size_t ti = t_total; ti-- > 0;) {
      Mat dht = dh[ti] + carry;
      const Mat& x = gru.x[ti];
      const Mat& zt = gru.z[ti];
      const Mat& rt = gru.r[ti];
      const Mat& gt = gru.g[ti];
      Mat h_prev = ti == 0 ? Mat::Zero(n, dims.d_z) : gru.h[ti - 1];

      Mat dzt = dht.cwiseProduct(h_prev - gt);
      Mat dgt = dht.cwiseProduct(Mat::Ones(n, dims.d_z) - zt);
      Mat dh_prev = dht.cwiseProduct(zt);

      Mat da_g = dgt.cwiseProduct(Mat::Ones(n, dims.d_z) - gt.cwiseProduct(gt));
      Mat rh = rt.cwiseProduct(h_prev);
      g.cand.w += x.transpose() * da_g;
      g.cand.u += rh.transpose() * da_g;
      g.cand.b += da_g.colwise().sum();
      Mat dxt = da_g * v.cand.w.transpose();
      Mat drh = da_g * v.cand.u.transpose();
      Mat drt = drh.cwiseProduct(h_prev);
      dh_prev += drh.cwiseProduct(rt);

      Mat da_r = drt.cwiseProduct(rt).cwiseProduct(Mat::Ones(n, dims.d_z) - rt);
      g.reset.w += x.transpose() * da_r;
      g.reset.u += h_prev.transpose() * da_r;
      g.reset.b += da_r.colwise().sum();
      dxt += da_r * v.reset.w.transpose();
      dh_prev += da_r * v.reset.u.transpose();

      Mat da_z = dzt.cwiseProduct(zt).cwiseProduct(Mat::Ones(n, dims.d_z) - zt);
      g.update.w += x.transpose() * da_z;
      g.update.u += h_prev.transpose() * da_z;
      g.update.b += da_z.colwise().sum();
      dxt += da_z * v.update.w.transpose();
      dh_prev += da_z * v.update.u.transpose();

      dx[ti] = std::move(dxt);
      carry = std::move(dh_prev);
    }
  }

  // backward through the GCN per snapshot
  for (std::size_t t = 0; t < t_total; ++t) {
    const auto& s = batch.snapshots[t];
    g.w2 += q_cache[t].transpose() * dx[t];
    Mat dq = dx[t] * v.w2.transpose();
    Mat dhid = s.a_hat.transpose() * dq;
    Mat dp = (p_cache[t].array() > 0.0).cast<double>().matrix().cwiseProduct(dhid);
    g.w1 += m_cache[t].transpose() * dp;
  }

  if (prox && prox->mu != 0.0) {
    if (!prox->anchor || prox->anchor->flat.size() != params.flat.size())
      throw std::invalid_argument("prox anchor missing or mismatched");
    double sq = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      double diff = params.flat[i] - prox->anchor->flat[i];
      sq += diff * diff;
      grad[i] += prox->mu * diff;
    }
    loss += 0.5 * prox->mu * sq;
  }
  if (!std::isfinite(loss)) throw std::runtime_error("numeric overflow");
  return {loss, std::move(grad)};
}

inline double loss_value(const ModelParams& params, const TrainBatch& batch,
                         const Prox* prox = nullptr) {
  detail::validate_batch(params, batch);
  auto v = view(params);
  const auto t_total = batch.snapshots.size();
  std::vector<Mat> zp(t_total);
  for (std::size_t t = 0; t < t_total; ++t) {
    const auto& s = batch.snapshots[t];
    zp[t] = s.a_hat * (s.a_hat * s.x * v.w1).cwiseMax(0.0) * v.w2;
  }
  auto states = temporal(params, zp);
  const std::size_t scored =
      t_total > static_cast<std::size_t>(batch.offset) ? t_total - batch.offset : 0;
  double loss = 0.0;
  std::size_t n_terms = 0;
  const double clamp_lo = 1e-7, clamp_hi = 1.0 - 1e-7;
  for (std::size_t t = 0; t < scored; ++t) {
    const std::size_t src = t + static_cast<std::size_t>(batch.offset);
    const Mat& z = states[t];
    auto scan = [&](const std::vector<std::pair<int, int>>& edges, double target) {
      for (auto [a, b] : edges) {
        double s = std::clamp(sigmoid(z.row(a).dot(z.row(b))), clamp_lo, clamp_hi);
        loss += target > 0.5 ? -std::log(s) : -std::log(1.0 - s);
        ++n_terms;
      }
    };
    scan(batch.snapshots[src].positives, 1.0);
    scan(batch.negatives[src], 0.0);
  }
  if (n_terms > 0) loss /= static_cast<double>(n_terms);
  if (prox && prox->mu != 0.0 && prox->anchor) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.flat.size(); ++i) {
      double diff = params.flat[i] - prox->anchor->flat[i];
      sq += diff * diff;
    }
    loss += 0.5 * prox->mu * sq;
  }
  if (!std::isfinite(loss)) throw std::runtime_error("numeric overflow");
  return loss;
}

// Everything a client needs to materialize a training batch each epoch:
// prepared tensors plus the raw snapshots negatives are redrawn from.
struct BatchSource {
  std::vector<SnapshotData> snapshots;
  std::vector<Snapshot> raw;  // aligned with snapshots
  std::unordered_map<NodeId, int> index;  // node id -> row in the tensors
  double neg_ratio = 1.0;
  int offset = 0;

  TrainBatch draw(std::uint64_t seed) const {
    if (raw.size() != snapshots.size())
      throw std::invalid_argument("raw snapshots must align with tensors");
    TrainBatch b;
    b.snapshots = snapshots;
    b.offset = offset;
    b.negatives.resize(snapshots.size());
    for (std::size_t t = 0; t < raw.size(); ++t) {
      if (raw[t].edges.empty() || raw[t].nodes.size() < 2) continue;
      // Tiny dense snapshots may not have ratio * |positives| non-edges at
      // all; train on what exists instead of aborting the round.
      std::set<std::pair<NodeId, NodeId>> undirected;
      for (const auto& [edge, w] : raw[t].edges) {
        if (edge.first == edge.second) continue;
        undirected.insert(
            {std::min(edge.first, edge.second), std::max(edge.first, edge.second)});
      }
      const std::size_t n = raw[t].nodes.size();
      const std::size_t possible = n * (n - 1) / 2 - undirected.size();
      auto want = static_cast<std::size_t>(
          std::llround(neg_ratio * static_cast<double>(raw[t].edges.size())));
      auto pairs = negative_sample_count(raw[t], std::min(want, possible),
                                         derive_seed(seed, "neg", t));
      auto& out = b.negatives[t];
      out.reserve(pairs.size());
      for (auto [u, w] : pairs) out.emplace_back(index.at(u), index.at(w));
    }
    return b;
  }
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::vector<double>& w, const std::vector<double>& grad,
                      AdamState& st, double eta) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < w.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    double mh = st.m[i] / bc1;
    double vh = st.v[i] / bc2;
    w[i] -= eta * mh / (std::sqrt(vh) + st.eps);
  }
}

struct LocalTrainResult {
  ModelParams params;
  double loss = 0.0;  // loss at the last evaluated batch, before its step
};

// Client-side update: E full-batch optimizer passes starting from the shared
// model, fresh optimizer state every call.
inline LocalTrainResult local_train(const ModelParams& start, const BatchSource& data,
                                    int epochs, double eta, const Prox* prox,
                                    std::uint64_t seed) {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (eta < 0) throw std::invalid_argument("eta must be >= 0");
  ModelParams w = start;
  AdamState st(w.flat.size());
  double last = 0.0;
  for (int e = 0; e < epochs; ++e) {
    TrainBatch batch = data.draw(derive_seed(seed, "epoch", static_cast<std::uint64_t>(e)));
    auto [loss, grad] = loss_and_grad(w, batch, prox);
    adam_step(w.flat, grad, st, eta);
    last = loss;
  }
  return {std::move(w), last};
}

}  // namespace entente
