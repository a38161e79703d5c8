#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "entente/model.hpp"
#include "entente/nn.hpp"

using namespace entente;

namespace {

double finite_diff(const ModelParams& params, const TrainBatch& batch,
                   const Prox* prox, std::size_t i, double step = 1e-5) {
  ModelParams p = params;
  p.flat[i] += step;
  double up = loss_value(p, batch, prox);
  p.flat[i] = params.flat[i] - step;
  double down = loss_value(p, batch, prox);
  return (up - down) / (2.0 * step);
}

double rel_err(const std::vector<double>& got, const std::vector<double>& want,
               std::size_t offset, std::size_t length) {
  double num = 0, den = 0;
  for (std::size_t i = offset; i < offset + length; ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

Snapshot make_snapshot(int index, std::vector<std::pair<NodeId, NodeId>> edges,
                       std::vector<NodeId> nodes = {}) {
  Snapshot s;
  s.index = index;
  for (auto [u, v] : edges) s.edges[{u, v}] += 1.0;
  std::set<NodeId> ns(nodes.begin(), nodes.end());
  for (auto [u, v] : edges) {
    ns.insert(u);
    ns.insert(v);
  }
  s.nodes.assign(ns.begin(), ns.end());
  return s;
}

// Small instance exercising absent nodes, merged weights and both edge kinds.
TrainBatch make_test_batch(const ModelDims& dims, int offset, std::uint64_t seed) {
  const int n = 6;
  std::vector<NodeId> order{0, 1, 2, 3, 4, 5};
  std::vector<Snapshot> snaps;
  snaps.push_back(make_snapshot(1, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}}));
  snaps.push_back(make_snapshot(2, {{0, 2}, {1, 3}, {2, 4}, {0, 1}, {0, 1}}));
  snaps.push_back(make_snapshot(3, {{5, 0}, {1, 4}}));  // nodes 2,3 absent
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TrainBatch batch;
  batch.offset = offset;
  for (const auto& s : snaps) {
    SnapshotData sd;
    sd.a_hat = normalize_adjacency(s, order);
    sd.x = Mat::Zero(n, dims.d_x);
    for (NodeId v : s.nodes)
      for (int c = 0; c < dims.d_x; ++c) sd.x(v, c) = gauss(rng);
    for (const auto& [e, w] : s.edges)
      sd.positives.emplace_back(static_cast<int>(e.first), static_cast<int>(e.second));
    batch.snapshots.push_back(std::move(sd));
    auto negs = negative_sample(s, 1.0, seed + static_cast<std::uint64_t>(s.index));
    std::vector<std::pair<int, int>> ni;
    for (auto [u, v] : negs) ni.emplace_back(static_cast<int>(u), static_cast<int>(v));
    batch.negatives.push_back(std::move(ni));
  }
  return batch;
}

}  // namespace

TEST(InitParams, DeterministicAndSeedSensitive) {
  ModelDims dims{3, 4, 4};
  auto a = init_params(dims, 7);
  auto b = init_params(dims, 7);
  auto c = init_params(dims, 8);
  EXPECT_EQ(a.flat, b.flat);
  EXPECT_NE(a.flat, c.flat);
}

TEST(InitParams, FlatLengthFollowsSegmentLayout) {
  ModelDims dims{4, 8, 8};
  // ENC 4*8 + 8*8 = 96, GRU 3*(8*8 + 8*8 + 8) = 408, DEC 0
  EXPECT_EQ(param_size(dims), 504u);
  auto segs = param_segments(dims);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(segs[0].name, "ENC");
  EXPECT_EQ(segs[0].length, 96u);
  EXPECT_EQ(segs[1].name, "TEMP");
  EXPECT_EQ(segs[1].offset, 96u);
  EXPECT_EQ(segs[1].length, 408u);
  EXPECT_EQ(segs[2].length, 0u);
  EXPECT_EQ(init_params(dims, 1).flat.size(), 504u);
}

TEST(InitParams, EntriesRespectGlorotBounds) {
  ModelDims dims{5, 7, 3};
  auto p = init_params(dims, 21);
  auto v = view(p);
  double b1 = std::sqrt(6.0 / (5 + 7));
  double b2 = std::sqrt(6.0 / (7 + 3));
  double bg = std::sqrt(6.0 / (3 + 3));
  EXPECT_LE(v.w1.cwiseAbs().maxCoeff(), b1);
  EXPECT_LE(v.w2.cwiseAbs().maxCoeff(), b2);
  for (auto* gate : {&v.update, &v.reset, &v.cand}) {
    EXPECT_LE(gate->w.cwiseAbs().maxCoeff(), bg);
    EXPECT_LE(gate->u.cwiseAbs().maxCoeff(), bg);
    EXPECT_DOUBLE_EQ(gate->b.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(NormalizeAdjacency, SingleNodeNoEdges) {
  auto snap = make_snapshot(1, {}, {42});
  auto a = normalize_adjacency(snap, {42});
  ASSERT_EQ(a.rows(), 1);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
}

TEST(NormalizeAdjacency, TwoNodesUnitEdgeClosedForm) {
  auto snap = make_snapshot(1, {{0, 1}});
  auto a = normalize_adjacency(snap, {0, 1});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(a(i, j), 0.5, 1e-12);
}

TEST(NormalizeAdjacency, SymmetrizesDirectedWeights) {
  Snapshot snap;
  snap.index = 1;
  snap.nodes = {0, 1};
  snap.edges[{0, 1}] = 2.0;
  auto a = normalize_adjacency(snap, {0, 1});
  EXPECT_NEAR(a(0, 1), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(a(1, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(a(0, 0), 1.0 / 3.0, 1e-12);
}

TEST(NormalizeAdjacency, AbsentNodesGetUnitSelfLoopRows) {
  auto snap = make_snapshot(1, {{0, 1}});
  auto a = normalize_adjacency(snap, {0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(a(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(a(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(a(3, 3), 1.0);
}

TEST(NormalizeAdjacency, RowSumsAreOneOnRegularGraphs) {
  for (int n : {4, 8, 16}) {
    std::vector<std::pair<NodeId, NodeId>> ring;
    for (int i = 0; i < n; ++i) ring.emplace_back(i, (i + 1) % n);
    auto snap = make_snapshot(1, ring);
    std::vector<NodeId> order(snap.nodes.begin(), snap.nodes.end());
    auto a = normalize_adjacency(snap, order);
    Eigen::VectorXd sums = a.rowwise().sum();
    for (int i = 0; i < n; ++i) EXPECT_NEAR(sums(i), 1.0, 1e-9);
  }
}

TEST(NormalizeAdjacency, SpectralRadiusAtMostOne) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::uniform_int_distribution<NodeId> node(0, 11);
    for (int i = 0; i < 20; ++i) {
      NodeId u = node(rng), v = node(rng);
      if (u != v) edges.emplace_back(u, v);
    }
    if (edges.empty()) continue;
    auto snap = make_snapshot(1, edges);
    std::vector<NodeId> order(snap.nodes.begin(), snap.nodes.end());
    auto a = normalize_adjacency(snap, order);
    Eigen::MatrixXd dense = a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    EXPECT_LE(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0 + 1e-9);
  }
}

TEST(Encode, ZeroFeaturesGiveZeroEmbedding) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 5);
  auto snap = make_snapshot(1, {{0, 1}, {1, 2}});
  auto a = normalize_adjacency(snap, {0, 1, 2});
  Mat x = Mat::Zero(3, 3);
  EXPECT_DOUBLE_EQ(encode(p, x, a).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encode, IdentityWeightsActAsRelu) {
  ModelDims dims{3, 3, 3};
  ModelParams p;
  p.dims = dims;
  p.flat.assign(param_size(dims), 0.0);
  auto v = view(p);
  v.w1.setIdentity();
  v.w2.setIdentity();
  Mat x(2, 3);
  x << -1.0, 2.0, -0.5, 0.25, -3.0, 4.0;
  Mat a = Mat::Identity(2, 2);
  Mat z = encode(p, x, a);
  EXPECT_DOUBLE_EQ(z(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(z(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(z(1, 2), 4.0);
}

TEST(Encode, ShapeMismatchThrows) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 5);
  Mat x = Mat::Zero(2, 2);  // wrong feature dim
  Mat a = Mat::Identity(2, 2);
  EXPECT_THROW(encode(p, x, a), std::invalid_argument);
}

TEST(Temporal, ZeroInputFollowsBiasPath) {
  ModelDims dims{2, 2, 3};
  ModelParams p;
  p.dims = dims;
  p.flat.assign(param_size(dims), 0.0);
  auto v = view(p);
  v.update.b << 0.3, -0.2, 0.5;
  v.cand.b << 0.7, -1.1, 0.2;
  std::vector<Mat> in{Mat::Zero(2, 3)};
  auto out = temporal(p, in);
  ASSERT_EQ(out.size(), 1u);
  for (int c = 0; c < 3; ++c) {
    double z = sigmoid(v.update.b(c));
    double g = std::tanh(v.cand.b(c));
    EXPECT_NEAR(out[0](0, c), (1.0 - z) * g, 1e-12);
  }
}

TEST(Temporal, SaturatedGatesPassCandidateThrough) {
  ModelDims dims{2, 2, 2};
  ModelParams p;
  p.dims = dims;
  p.flat.assign(param_size(dims), 0.0);
  auto v = view(p);
  v.update.b << -40.0, -40.0;  // z ~ 0
  v.reset.b << 40.0, 40.0;     // r ~ 1
  v.cand.w.setIdentity();
  v.cand.u.setIdentity();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss(0, 1);
  std::vector<Mat> in(3, Mat::Zero(4, 2));
  for (auto& m : in)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) m(i, j) = gauss(rng);
  auto out = temporal(p, in);
  Mat h = Mat::Zero(4, 2);
  for (std::size_t t = 0; t < in.size(); ++t) {
    Mat expect = (in[t] + h).array().tanh().matrix();
    EXPECT_LT((out[t] - expect).cwiseAbs().maxCoeff(), 1e-9);
    h = out[t];
  }
}

TEST(Decode, ZeroEmbeddingsScoreHalf) {
  Mat z = Mat::Zero(2, 4);
  auto s = decode(z, {{0, 1}});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
}

TEST(Decode, LargeInnerProductSaturates) {
  Mat z(2, 2);
  z << 5.0, 5.0, 2.0, 2.0;  // inner product 20
  auto s = decode(z, {{0, 1}});
  EXPECT_GT(s[0], 0.999999);
  EXPECT_LT(s[0], 1.0);
}

TEST(Decode, SymmetricUnderEdgeReversal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0, 1);
  Mat z(5, 3);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) z(i, j) = gauss(rng);
  for (int u = 0; u < 5; ++u)
    for (int v = 0; v < 5; ++v)
      EXPECT_DOUBLE_EQ(decode(z, {{u, v}})[0], decode(z, {{v, u}})[0]);
}

TEST(NegativeSample, CompleteGraphErrors) {
  auto snap = make_snapshot(1, {{0, 1}, {0, 2}, {1, 2}});
  EXPECT_THROW(negative_sample(snap, 1.0, 0), std::runtime_error);
}

TEST(NegativeSample, TwoIsolatedNodesYieldTheOnlyPair) {
  auto snap = make_snapshot(1, {}, {7, 9});
  auto negs = negative_sample_count(snap, 1, 3);
  ASSERT_EQ(negs.size(), 1u);
  EXPECT_EQ(negs[0], (std::pair<NodeId, NodeId>{7, 9}));
}

TEST(NegativeSample, NeverCollidesWithPositivesOrSelfLoops) {
  auto snap = make_snapshot(1, {{0, 1}, {1, 2}, {3, 4}, {5, 0}, {2, 2}},
                            {0, 1, 2, 3, 4, 5, 6, 7});
  std::set<std::pair<NodeId, NodeId>> present;
  for (const auto& [e, w] : snap.edges)
    present.insert({std::min(e.first, e.second), std::max(e.first, e.second)});
  std::size_t drawn = 0;
  for (std::uint64_t seed = 0; drawn < 10000; ++seed) {
    auto negs = negative_sample(snap, 2.0, seed);
    EXPECT_EQ(negs.size(), 10u);  // round(2.0 * 5 positives)
    for (auto [u, v] : negs) {
      EXPECT_NE(u, v);
      EXPECT_FALSE(present.count({std::min(u, v), std::max(u, v)}));
      ++drawn;
    }
  }
}

TEST(NegativeSample, DeterministicPerSeed) {
  auto snap = make_snapshot(1, {{0, 1}, {2, 3}}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(negative_sample(snap, 1.0, 11), negative_sample(snap, 1.0, 11));
  EXPECT_NE(negative_sample(snap, 1.0, 11), negative_sample(snap, 1.0, 12));
}

TEST(LossAndGrad, AllZeroParamsScoreHalfAndLossIsLn2) {
  ModelDims dims{3, 4, 4};
  ModelParams p;
  p.dims = dims;
  p.flat.assign(param_size(dims), 0.0);
  auto batch = make_test_batch(dims, 0, 17);
  auto [loss, grad] = loss_and_grad(p, batch);
  EXPECT_DOUBLE_EQ(loss, std::log(2.0));
}

TEST(LossAndGrad, SaturatedPositivesDriveLossToZero) {
  ModelDims dims{1, 1, 40};
  ModelParams p;
  p.dims = dims;
  p.flat.assign(param_size(dims), 0.0);
  auto v = view(p);
  v.w1(0, 0) = 10.0;
  v.w2.setConstant(10.0);
  v.update.b.setConstant(-40.0);  // z ~ 0: state = candidate
  v.reset.b.setConstant(40.0);
  v.cand.w.setIdentity();
  auto snap = make_snapshot(1, {{0, 1}, {1, 2}});
  TrainBatch batch;
  batch.offset = 0;
  SnapshotData sd;
  sd.a_hat = normalize_adjacency(snap, {0, 1, 2});
  sd.x = Mat::Ones(3, 1);
  sd.positives = {{0, 1}, {1, 2}};
  batch.snapshots.push_back(sd);
  batch.negatives.push_back({});
  auto [loss, grad] = loss_and_grad(p, batch);
  EXPECT_LT(loss, 1e-5);
}

TEST(LossAndGrad, MatchesFiniteDifferencesEverySegment) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 42);
  for (int offset : {0, 1}) {
    auto batch = make_test_batch(dims, offset, 99);
    auto [loss, grad] = loss_and_grad(p, batch);
    std::vector<double> fd(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) fd[i] = finite_diff(p, batch, nullptr, i);
    for (const auto& seg : param_segments(dims)) {
      if (seg.length == 0) continue;
      EXPECT_LT(rel_err(grad, fd, seg.offset, seg.length), 1e-4)
          << "segment " << seg.name << " offset " << offset;
    }
    EXPECT_LT(rel_err(grad, fd, 0, grad.size()), 1e-4);
  }
}

TEST(LossAndGrad, ProxGradientMatchesFiniteDifferences) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 1);
  auto anchor = init_params(dims, 2);
  Prox prox{0.05, &anchor};
  auto batch = make_test_batch(dims, 0, 5);
  auto [loss, grad] = loss_and_grad(p, batch, &prox);
  std::vector<double> fd(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) fd[i] = finite_diff(p, batch, &prox, i);
  EXPECT_LT(rel_err(grad, fd, 0, grad.size()), 1e-4);
}

TEST(LossAndGrad, ProxVanishesAtAnchor) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 1);
  Prox prox{0.05, &p};
  auto batch = make_test_batch(dims, 0, 5);
  auto [l0, g0] = loss_and_grad(p, batch);
  auto [l1, g1] = loss_and_grad(p, batch, &prox);
  EXPECT_DOUBLE_EQ(l0, l1);
  EXPECT_EQ(g0, g1);
}

TEST(LossAndGrad, OffsetOneIgnoresFirstSnapshotEdgesAndLastState) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 3);
  auto batch = make_test_batch(dims, 1, 7);
  auto tweaked = batch;
  tweaked.snapshots[0].positives.clear();  // unused when offset = 1
  tweaked.negatives[0].clear();
  auto [l0, g0] = loss_and_grad(p, batch);
  auto [l1, g1] = loss_and_grad(p, tweaked);
  EXPECT_DOUBLE_EQ(l0, l1);
  EXPECT_EQ(g0, g1);

  TrainBatch single;
  single.offset = 1;
  single.snapshots = {batch.snapshots[0]};
  single.negatives = {batch.negatives[0]};
  auto [l2, g2] = loss_and_grad(p, single);
  EXPECT_DOUBLE_EQ(l2, 0.0);  // no snapshot to score one step ahead
}

TEST(LossAndGrad, InvariantToConsistentNodeRelabeling) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 12);
  auto batch = make_test_batch(dims, 0, 31);
  std::vector<int> perm{3, 5, 0, 2, 4, 1};
  TrainBatch relabeled = batch;
  for (std::size_t t = 0; t < batch.snapshots.size(); ++t) {
    const auto& src = batch.snapshots[t];
    auto& dst = relabeled.snapshots[t];
    dst.x = Mat::Zero(src.x.rows(), src.x.cols());
    dst.a_hat = Mat::Zero(src.a_hat.rows(), src.a_hat.cols());
    for (int i = 0; i < src.x.rows(); ++i) {
      dst.x.row(perm[static_cast<std::size_t>(i)]) = src.x.row(i);
      for (int j = 0; j < src.a_hat.cols(); ++j)
        dst.a_hat(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) =
            src.a_hat(i, j);
    }
    for (auto& [u, v] : dst.positives) {
      u = perm[static_cast<std::size_t>(u)];
      v = perm[static_cast<std::size_t>(v)];
    }
    for (auto& [u, v] : relabeled.negatives[t]) {
      u = perm[static_cast<std::size_t>(u)];
      v = perm[static_cast<std::size_t>(v)];
    }
  }
  auto [l0, g0] = loss_and_grad(p, batch);
  auto [l1, g1] = loss_and_grad(p, relabeled);
  EXPECT_NEAR(l0, l1, 1e-12);
  for (std::size_t i = 0; i < g0.size(); ++i) EXPECT_NEAR(g0[i], g1[i], 1e-12);
}

TEST(LossAndGrad, NonFiniteParamsRaiseNumericOverflow) {
  ModelDims dims{3, 4, 4};
  auto p = init_params(dims, 3);
  p.flat[0] = std::numeric_limits<double>::quiet_NaN();
  auto batch = make_test_batch(dims, 0, 7);
  EXPECT_THROW(loss_and_grad(p, batch), std::runtime_error);
}

namespace {

BatchSource make_source(const ModelDims& dims, std::uint64_t seed) {
  BatchSource src;
  src.neg_ratio = 1.0;
  src.offset = 0;
  std::vector<Snapshot> snaps;
  snaps.push_back(make_snapshot(1, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}, {0, 1, 2, 3, 4}));
  snaps.push_back(make_snapshot(2, {{0, 2}, {1, 4}, {3, 4}}, {0, 1, 2, 3, 4}));
  std::vector<NodeId> order{0, 1, 2, 3, 4};
  for (std::size_t i = 0; i < order.size(); ++i) src.index[order[i]] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0, 1);
  for (const auto& s : snaps) {
    SnapshotData sd;
    sd.a_hat = normalize_adjacency(s, order);
    sd.x = Mat::Zero(5, dims.d_x);
    for (NodeId v : s.nodes)
      for (int c = 0; c < dims.d_x; ++c) sd.x(v, c) = gauss(rng);
    for (const auto& [e, w] : s.edges)
      sd.positives.emplace_back(static_cast<int>(e.first), static_cast<int>(e.second));
    src.snapshots.push_back(std::move(sd));
    src.raw.push_back(s);
  }
  return src;
}

}  // namespace

TEST(BatchSource, DrawsAlignedNegativesAndRespectsDensityCap) {
  ModelDims dims{2, 3, 3};
  auto src = make_source(dims, 9);
  auto batch = src.draw(4);
  ASSERT_EQ(batch.negatives.size(), 2u);
  EXPECT_EQ(batch.negatives[0].size(), 4u);
  EXPECT_EQ(batch.negatives[1].size(), 3u);

  // two nodes, the only pair already an edge: no negatives, no throw
  BatchSource tiny;
  tiny.neg_ratio = 1.0;
  auto s = make_snapshot(1, {{0, 1}});
  tiny.raw = {s};
  SnapshotData sd;
  sd.a_hat = normalize_adjacency(s, {0, 1});
  sd.x = Mat::Ones(2, 2);
  sd.positives = {{0, 1}};
  tiny.snapshots = {sd};
  tiny.index = {{0, 0}, {1, 1}};
  auto tb = tiny.draw(1);
  EXPECT_TRUE(tb.negatives[0].empty());
}

TEST(LocalTrain, ZeroLearningRateLeavesParamsUntouched) {
  ModelDims dims{2, 3, 3};
  auto p = init_params(dims, 6);
  auto src = make_source(dims, 2);
  auto result = local_train(p, src, 1, 0.0, nullptr, 5);
  EXPECT_EQ(result.params.flat, p.flat);
}

TEST(LocalTrain, DeterministicGivenSeed) {
  ModelDims dims{2, 3, 3};
  auto p = init_params(dims, 6);
  auto src = make_source(dims, 2);
  auto a = local_train(p, src, 2, 1e-2, nullptr, 5);
  auto b = local_train(p, src, 2, 1e-2, nullptr, 5);
  EXPECT_EQ(a.params.flat, b.params.flat);
  EXPECT_DOUBLE_EQ(a.loss, b.loss);
}

TEST(LocalTrain, DescendsOnFixedBatchNearlyAlways) {
  ModelDims dims{2, 3, 3};
  auto src = make_source(dims, 2);
  int descents = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto p = init_params(dims, seed + 100);
    auto batch = src.draw(derive_seed(seed, "epoch", 0));
    double before = loss_value(p, batch);
    auto result = local_train(p, src, 1, 1e-3, nullptr, seed);
    double after = loss_value(result.params, batch);
    if (after <= before) ++descents;
  }
  EXPECT_GE(descents, 48);  // 95% of 50
}

TEST(LocalTrain, ProxAnchoredAtStartMatchesUnregularizedFirstStep) {
  ModelDims dims{2, 3, 3};
  auto p = init_params(dims, 6);
  auto src = make_source(dims, 2);
  Prox prox{0.05, &p};
  auto with = local_train(p, src, 1, 1e-2, &prox, 9);
  auto without = local_train(p, src, 1, 1e-2, nullptr, 9);
  EXPECT_EQ(with.params.flat, without.params.flat);
}

TEST(LocalTrain, RejectsBadArguments) {
  ModelDims dims{2, 3, 3};
  auto p = init_params(dims, 6);
  auto src = make_source(dims, 2);
  EXPECT_THROW(local_train(p, src, 0, 1e-2, nullptr, 1), std::invalid_argument);
  EXPECT_THROW(local_train(p, src, 1, -1.0, nullptr, 1), std::invalid_argument);
}
