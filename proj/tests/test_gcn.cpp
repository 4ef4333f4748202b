#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "semiprune/data.hpp"
#include "semiprune/gcn.hpp"
#include "semiprune/gradcheck.hpp"
#include "semiprune/rng.hpp"

using namespace semiprune;

namespace {

SkeletonSequence make_sequence(int joints, int frames, const std::function<double(int, int, int)>& f) {
  SkeletonSequence s;
  s.joint_count = joints;
  s.frame_count = frames;
  s.coords.resize(static_cast<size_t>(joints) * frames * 3);
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < joints; ++j)
      for (int d = 0; d < 3; ++d) s.at(t, j, d) = f(t, j, d);
  return s;
}

TrajectoryGraph random_graph(Rng& rng, int s, int n) {
  TrajectoryGraph g;
  g.nodes = n;
  g.signal = Matrix(s, n);
  for (double& v : g.signal.data) v = rng.uniform(-1.0, 1.0);
  g.adjacency = Matrix::identity(n);
  return g;
}

GcnModel random_model(Rng& rng, int K, int n, int s, int C, int classes, bool prunable,
                      double latent_scale = 0.8) {
  ModelInit init;
  init.prune_attention = init.prune_conv = init.prune_dense = prunable;
  init.latent_scale = latent_scale;
  init.sigma0 = 5.0;
  return make_model(K, n, s, C, classes, Matrix::identity(n), init, rng);
}

// independent oracle: the convolution block written out naively, index by index
Matrix naive_logits(const GcnModel& m, const EffectiveWeights& eff, const TrajectoryGraph& g) {
  const int n = m.nodes, s = m.sig_dim, C = m.filters;
  Matrix hidden(n, C);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int k = 0; k < m.heads; ++k)
        for (int j = 0; j < n; ++j) {
          double t = 0.0;
          for (int r = 0; r < s; ++r) t += g.signal(r, j) * eff.conv(r, k * C + c);
          acc += eff.attention(i, k * n + j) * t;
        }
      hidden(i, c) = acc > 0.0 ? acc : 0.0;
    }
  Matrix logits(1, m.classes);
  for (int cls = 0; cls < m.classes; ++cls) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < C; ++c) acc += hidden(i, c) * eff.dense(i * C + c, cls);
    logits(0, cls) = acc;
  }
  return logits;
}

}  // namespace

TEST_CASE("temporal chunking of a constant trajectory") {
  SkeletonSequence s = make_sequence(2, 8, [](int, int j, int d) { return j * 10.0 + d; });
  TrajectoryGraph g = temporal_chunking(s, 4);
  REQUIRE(g.signal.rows == 12);
  REQUIRE(g.signal.cols == 2);
  for (int ch = 0; ch < 4; ++ch)
    for (int j = 0; j < 2; ++j)
      for (int d = 0; d < 3; ++d) REQUIRE(g.signal(3 * ch + d, j) == j * 10.0 + d);
}

TEST_CASE("temporal chunking splits 8 frames into pairs") {
  SkeletonSequence s = make_sequence(1, 8, [](int t, int, int d) { return d == 0 ? t : 0.0; });
  TrajectoryGraph g = temporal_chunking(s, 4);
  for (int ch = 0; ch < 4; ++ch) REQUIRE(g.signal(3 * ch, 0) == (2.0 * ch + (2.0 * ch + 1)) / 2.0);
}

TEST_CASE("temporal chunking gives earlier chunks the extra frames") {
  SkeletonSequence s = make_sequence(1, 6, [](int t, int, int d) { return d == 0 ? t : 0.0; });
  TrajectoryGraph g = temporal_chunking(s, 4);
  // sizes (2,2,1,1): chunks {0,1},{2,3},{4},{5}
  REQUIRE(g.signal(0, 0) == 0.5);
  REQUIRE(g.signal(3, 0) == 2.5);
  REQUIRE(g.signal(6, 0) == 4.0);
  REQUIRE(g.signal(9, 0) == 5.0);
}

TEST_CASE("temporal chunking carries the last mean into empty chunks") {
  SkeletonSequence s = make_sequence(1, 2, [](int t, int, int) { return t + 1.0; });
  TrajectoryGraph g = temporal_chunking(s, 4);
  REQUIRE(g.signal(0, 0) == 1.0);
  REQUIRE(g.signal(3, 0) == 2.0);
  REQUIRE(g.signal(6, 0) == 2.0);
  REQUIRE(g.signal(9, 0) == 2.0);
}

TEST_CASE("temporal chunking rejects empty input") {
  SkeletonSequence s;
  REQUIRE_THROWS_AS(temporal_chunking(s, 4), DataError);
}

TEST_CASE("chunking is frame rate agnostic under frame duplication") {
  Rng rng(30);
  SkeletonSequence s = make_sequence(3, 8, [&](int, int, int) { return rng.uniform(-1.0, 1.0); });
  SkeletonSequence doubled = make_sequence(3, 16, [&](int t, int j, int d) { return s.at(t / 2, j, d); });
  Matrix a = temporal_chunking(s, 4).signal;
  Matrix b = temporal_chunking(doubled, 4).signal;
  REQUIRE(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("skeleton adjacency") {
  Matrix none = skeleton_adjacency(3, {});
  REQUIRE(max_abs_diff(none, Matrix::identity(3)) == 0.0);

  Matrix chain = skeleton_adjacency(3, {{0, 1}, {1, 2}});
  Matrix expected = Matrix::from_rows({{1, 1, 0}, {1, 1, 1}, {0, 1, 1}});
  REQUIRE(max_abs_diff(chain, expected) == 0.0);

  REQUIRE_THROWS_AS(skeleton_adjacency(3, {{0, 3}}), DataError);
}

TEST_CASE("bundled 15-joint bone list yields a symmetric adjacency with degree+1 row sums") {
  const auto bones = sbu15_bones();
  Matrix a = skeleton_adjacency(15, bones);
  std::vector<int> degree(15, 0);
  for (const auto& [u, v] : bones) {
    ++degree[u];
    ++degree[v];
  }
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 15; ++j) REQUIRE(a(i, j) == a(j, i));
    REQUIRE(reduce(a, Axis::rows)(i, 0) == degree[i] + 1.0);
  }
}

TEST_CASE("gcn forward of a zero model is zero") {
  Rng rng(31);
  GcnModel m = random_model(rng, 2, 4, 6, 3, 2, false);
  for (ModelTensor* t : m.tensors())
    for (double& v : t->layer.latent.data) v = 0.0;
  TrajectoryGraph g = random_graph(rng, 6, 4);
  REQUIRE(gcn_forward(m, g).logits.sum() == 0.0);
}

TEST_CASE("gcn forward reduces to a linear map on a single node") {
  GcnModel m;
  m.heads = 1;
  m.nodes = 1;
  m.sig_dim = 2;
  m.filters = 2;
  m.classes = 2;
  m.attention.layer.latent = Matrix::ones(1, 1);
  m.attention.layer.scheme = GroupScheme::trivial(1, 1);
  m.conv.layer.latent = Matrix::from_rows({{0.5, 1.0}, {0.25, 2.0}});
  m.conv.layer.scheme = GroupScheme::trivial(2, 2);
  m.dense.layer.latent = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  m.dense.layer.scheme = GroupScheme::trivial(2, 2);

  TrajectoryGraph g;
  g.nodes = 1;
  g.signal = Matrix::from_rows({{2.0}, {4.0}});  // positive throughout: ReLU is the identity
  g.adjacency = Matrix::identity(1);

  Matrix logits = gcn_forward(m, g).logits;
  // U^T W = [2 4] [[0.5 1],[0.25 2]] = [2, 10]
  REQUIRE(logits(0, 0) == 2.0);
  REQUIRE(logits(0, 1) == 10.0);
}

TEST_CASE("gcn forward matches the naive re-implementation") {
  Rng rng(32);
  for (int it = 0; it < 5; ++it) {
    GcnModel m = random_model(rng, 2, 4, 6, 3, 2, it % 2 == 0);
    TrajectoryGraph g = random_graph(rng, 6, 4);
    EffectiveWeights eff = materialize(m);
    REQUIRE(max_abs_diff(gcn_forward(m, eff, g).logits, naive_logits(m, eff, g)) < 1e-10);
  }
}

TEST_CASE("gcn forward is deterministic and validates shapes") {
  Rng rng(33);
  GcnModel m = random_model(rng, 2, 4, 6, 3, 2, true);
  TrajectoryGraph g = random_graph(rng, 6, 4);
  Matrix a = gcn_forward(m, g).logits;
  Matrix b = gcn_forward(m, g).logits;
  REQUIRE(max_abs_diff(a, b) == 0.0);

  TrajectoryGraph bad = random_graph(rng, 5, 4);
  REQUIRE_THROWS_AS(gcn_forward(m, bad), ShapeError);
}

TEST_CASE("gcn backward of a zero upstream gradient is zero") {
  Rng rng(34);
  GcnModel m = random_model(rng, 2, 4, 6, 3, 2, true);
  TrajectoryGraph g = random_graph(rng, 6, 4);
  EffectiveWeights eff = materialize(m);
  ForwardResult fr = gcn_forward(m, eff, g);
  LatentGrads lg = gcn_backward(m, eff, fr.cache, Matrix::zeros(1, 2));
  REQUIRE(lg.attention.sum() == 0.0);
  REQUIRE(lg.conv.sum() == 0.0);
  REQUIRE(lg.dense.sum() == 0.0);
}

TEST_CASE("gcn backward matches finite differences on wrapped and plain models") {
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(40 + seed);
    GcnModel m = random_model(rng, 2, 5, 6, 4, 3, seed % 2 == 0);
    TrajectoryGraph g = random_graph(rng, 6, 5);
    EffectiveWeights eff = materialize(m);
    ForwardResult fr = gcn_forward(m, eff, g);
    GcnGrads acc = make_zero_grads(m);
    gcn_backward_accumulate(m, eff, fr.cache, Matrix::ones(1, 3), acc);
    LatentGrads lg = route_through_masks(m, eff, acc);

    const Matrix* analytic[3] = {&lg.attention, &lg.conv, &lg.dense};
    for (int w = 0; w < 3; ++w) {
      Matrix numeric = finite_diff_grad(
          [&](const Matrix& v) {
            GcnModel probe = m;
            probe.tensors()[w]->layer.latent = v;
            return gcn_forward(probe, g).logits.sum();
          },
          m.tensors()[w]->layer.latent);
      REQUIRE(grad_rel_error(*analytic[w], numeric) < 1e-4);
    }
  }
}

TEST_CASE("saturated wrapped model behaves like its unwrapped twin") {
  Rng rng(50);
  GcnModel wrapped = random_model(rng, 2, 4, 6, 3, 2, true);
  for (ModelTensor* t : wrapped.tensors()) {
    t->layer.sigma = 25.0;
    for (double& v : t->layer.latent.data)
      v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(10.0, 12.0);
  }
  GcnModel plain = wrapped;
  for (ModelTensor* t : plain.tensors()) t->prunable = false;

  TrajectoryGraph g = random_graph(rng, 6, 4);
  // masks are exactly 1 at this saturation: the wrapped model equals its twin
  REQUIRE(max_abs_diff(gcn_forward(wrapped, g).logits, gcn_forward(plain, g).logits) < 1e-9);

  EffectiveWeights we = materialize(wrapped);
  EffectiveWeights pe = materialize(plain);
  ForwardResult wf = gcn_forward(wrapped, we, g);
  ForwardResult pf = gcn_forward(plain, pe, g);
  GcnGrads wacc = make_zero_grads(wrapped), pacc = make_zero_grads(plain);
  gcn_backward_accumulate(wrapped, we, wf.cache, Matrix::ones(1, 2), wacc);
  gcn_backward_accumulate(plain, pe, pf.cache, Matrix::ones(1, 2), pacc);
  LatentGrads wl = route_through_masks(wrapped, we, wacc);
  LatentGrads pl = route_through_masks(plain, pe, pacc);
  REQUIRE(grad_rel_error(wl.attention, pl.attention) < 1e-5);
  REQUIRE(grad_rel_error(wl.conv, pl.conv) < 1e-5);
  REQUIRE(grad_rel_error(wl.dense, pl.dense) < 1e-5);
}
