#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "semiprune/mask.hpp"
#include "semiprune/matrix.hpp"
#include "semiprune/rng.hpp"

namespace semiprune {

/// A labelled sequence of per-frame 3-D joint coordinates.
struct SkeletonSequence {
  int joint_count = 0;
  int frame_count = 0;
  int label = -1;
  std::vector<double> coords;  // [frame][joint][x,y,z]

  double at(int t, int j, int d) const {
    return coords[(static_cast<size_t>(t) * joint_count + j) * 3 + d];
  }
  double& at(int t, int j, int d) {
    return coords[(static_cast<size_t>(t) * joint_count + j) * 3 + d];
  }
};

/// One input graph: node descriptors U (s x n with s = 3M) and the handcrafted
/// spatial adjacency.
struct TrajectoryGraph {
  Matrix signal;
  Matrix adjacency;
  int nodes = 0;
};

/// Symmetric binary adjacency with unit diagonal from a bone edge list.
inline Matrix skeleton_adjacency(int n, const std::vector<std::pair<int, int>>& bones) {
  Matrix a = Matrix::identity(n);
  for (const auto& [u, v] : bones) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw DataError("skeleton_adjacency: bone (" + std::to_string(u) + "," + std::to_string(v) +
                      ") references a node outside [0," + std::to_string(n) + ")");
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

/// Temporal chunking: frames are split into M contiguous chunks whose sizes
/// differ by at most one (earlier chunks take the extra frames); each node
/// descriptor concatenates the per-chunk mean 3-D coordinates. When a
/// sequence is shorter than M the trailing empty chunks repeat the last
/// non-empty chunk mean.
inline TrajectoryGraph temporal_chunking(const SkeletonSequence& seq, int chunks,
                                         const Matrix* adjacency = nullptr) {
  if (seq.frame_count < 1 || seq.joint_count < 1) throw DataError("temporal_chunking: empty sequence");
  if (chunks < 1) throw ParamError("temporal_chunking: M must be >= 1");
  const int n = seq.joint_count;
  const int T = seq.frame_count;
  TrajectoryGraph g;
  g.nodes = n;
  g.signal = Matrix(3 * chunks, n);
  const int q = T / chunks;
  const int rem = T % chunks;
  for (int j = 0; j < n; ++j) {
    int t0 = 0;
    double last[3] = {0, 0, 0};
    for (int ch = 0; ch < chunks; ++ch) {
      const int len = q + (ch < rem ? 1 : 0);
      double mean[3] = {0, 0, 0};
      if (len > 0) {
        for (int t = t0; t < t0 + len; ++t)
          for (int d = 0; d < 3; ++d) mean[d] += seq.at(t, j, d);
        for (int d = 0; d < 3; ++d) mean[d] /= len;
        t0 += len;
      } else {
        for (int d = 0; d < 3; ++d) mean[d] = last[d];
      }
      for (int d = 0; d < 3; ++d) {
        g.signal(3 * ch + d, j) = mean[d];
        last[d] = mean[d];
      }
    }
  }
  g.adjacency = adjacency ? *adjacency : Matrix::identity(n);
  return g;
}

/// One learnable tensor; when prunable its values are the latent weights of a
/// mask cascade, otherwise they are used as-is.
struct ModelTensor {
  LatentLayer layer;
  bool prunable = false;
};

/// Attention -> convolution -> dense -> softmax, per-head tensors stacked
/// horizontally: attention n x (nK), conv s x (CK), dense (nC) x classes.
struct GcnModel {
  int heads = 1;    // K
  int nodes = 0;    // n
  int sig_dim = 0;  // s = 3M
  int filters = 1;  // C
  int classes = 2;
  ModelTensor attention;
  ModelTensor conv;
  ModelTensor dense;

  std::vector<ModelTensor*> tensors() { return {&attention, &conv, &dense}; }
  std::vector<const ModelTensor*> tensors() const { return {&attention, &conv, &dense}; }

  long prunable_entries() const {
    long n = 0;
    for (const ModelTensor* t : tensors())
      if (t->prunable) n += static_cast<long>(t->layer.latent.size());
    return n;
  }
};

/// Effective (mask-composed) weights for one forward pass, with per-head
/// column slices of the stacked tensors hoisted out.
struct EffectiveWeights {
  Matrix attention, conv, dense;
  std::optional<MaskStack> attention_stack, conv_stack, dense_stack;
  std::vector<Matrix> att_head;   // K slices, n x n
  std::vector<Matrix> conv_head;  // K slices, s x C
};

namespace detail {
inline Matrix col_slice(const Matrix& m, int c0, int c1) {
  Matrix out(m.rows, c1 - c0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = c0; j < c1; ++j) out(i, j - c0) = m(i, j);
  return out;
}
}  // namespace detail

inline EffectiveWeights materialize(const GcnModel& m) {
  EffectiveWeights eff;
  auto effective = [](const ModelTensor& t, std::optional<MaskStack>& stack) {
    if (!t.prunable) return t.layer.latent;
    ComposeResult r = compose(t.layer);
    stack = std::move(r.stack);
    return std::move(r.weights);
  };
  eff.attention = effective(m.attention, eff.attention_stack);
  eff.conv = effective(m.conv, eff.conv_stack);
  eff.dense = effective(m.dense, eff.dense_stack);
  eff.att_head.reserve(m.heads);
  eff.conv_head.reserve(m.heads);
  for (int k = 0; k < m.heads; ++k) {
    eff.att_head.push_back(detail::col_slice(eff.attention, k * m.nodes, (k + 1) * m.nodes));
    eff.conv_head.push_back(detail::col_slice(eff.conv, k * m.filters, (k + 1) * m.filters));
  }
  return eff;
}

struct GcnCache {
  Matrix b;               // n x s, transposed signal
  std::vector<Matrix> t;  // per head, n x C
  Matrix s;               // n x C pre-activation
  Matrix h;               // 1 x nC flattened post-activation
};

struct ForwardResult {
  Matrix logits;  // 1 x classes
  GcnCache cache;
};

/// f(sum_k A^k U^T W^k) followed by the flattened dense classifier; f = ReLU.
inline ForwardResult gcn_forward(const GcnModel& m, const EffectiveWeights& eff,
                                 const TrajectoryGraph& g) {
  if (g.signal.rows != m.sig_dim || g.signal.cols != m.nodes)
    throw ShapeError("gcn_forward: graph signal " + g.signal.shape_str() + ", model expects " +
                     Matrix::shape_str(m.sig_dim, m.nodes));
  ForwardResult out;
  GcnCache& cache = out.cache;
  cache.b = transpose(g.signal);
  cache.s = Matrix(m.nodes, m.filters);
  cache.t.reserve(m.heads);
  for (int k = 0; k < m.heads; ++k) {
    cache.t.push_back(matmul(cache.b, eff.conv_head[k]));
    add_in_place(cache.s, matmul(eff.att_head[k], cache.t.back()));
  }
  cache.h = Matrix(1, m.nodes * m.filters);
  for (size_t i = 0; i < cache.s.data.size(); ++i)
    cache.h.data[i] = cache.s.data[i] > 0.0 ? cache.s.data[i] : 0.0;
  out.logits = matmul(cache.h, eff.dense);
  return out;
}

inline ForwardResult gcn_forward(const GcnModel& m, const TrajectoryGraph& g) {
  return gcn_forward(m, materialize(m), g);
}

/// Gradients with respect to the effective (masked) tensors.
struct GcnGrads {
  Matrix attention, conv, dense;
};

inline GcnGrads make_zero_grads(const GcnModel& m) {
  return {Matrix(m.nodes, m.nodes * m.heads), Matrix(m.sig_dim, m.filters * m.heads),
          Matrix(m.nodes * m.filters, m.classes)};
}

/// Reverse pass for one sample; accumulates into `acc` so a batch can share
/// one gradient buffer.
inline void gcn_backward_accumulate(const GcnModel& m, const EffectiveWeights& eff,
                                    const GcnCache& cache, const Matrix& grad_logits,
                                    GcnGrads& acc) {
  if (grad_logits.rows != 1 || grad_logits.cols != m.classes)
    throw ShapeError("gcn_backward: grad_logits " + grad_logits.shape_str());
  if (static_cast<int>(cache.t.size()) != m.heads)
    throw StructureError("gcn_backward: cache does not match model head count");

  // dense: dD += h^T grad_logits
  for (int i = 0; i < m.nodes * m.filters; ++i) {
    const double hi = cache.h.data[i];
    if (hi == 0.0) continue;
    for (int j = 0; j < m.classes; ++j) acc.dense(i, j) += hi * grad_logits(0, j);
  }

  // dH = grad_logits D^T, gated by ReLU
  Matrix ds(m.nodes, m.filters);
  for (int i = 0; i < m.nodes * m.filters; ++i) {
    if (cache.s.data[i] <= 0.0) continue;
    double v = 0.0;
    for (int j = 0; j < m.classes; ++j) v += grad_logits(0, j) * eff.dense(i, j);
    ds.data[i] = v;
  }

  const Matrix bt = transpose(cache.b);
  for (int k = 0; k < m.heads; ++k) {
    const Matrix da = matmul(ds, transpose(cache.t[k]));            // n x n
    const Matrix dt = matmul(transpose(eff.att_head[k]), ds);       // n x C
    const Matrix dw = matmul(bt, dt);                               // s x C
    for (int i = 0; i < m.nodes; ++i)
      for (int j = 0; j < m.nodes; ++j) acc.attention(i, k * m.nodes + j) += da(i, j);
    for (int i = 0; i < m.sig_dim; ++i)
      for (int j = 0; j < m.filters; ++j) acc.conv(i, k * m.filters + j) += dw(i, j);
  }
}

/// Per-tensor latent gradients (equal to the effective gradients for
/// unwrapped tensors).
struct LatentGrads {
  Matrix attention, conv, dense;
};

/// Route effective-weight gradients through each wrapped tensor's mask
/// cascade, folding in any extra loss gradients taken directly on psi3.
inline LatentGrads route_through_masks(const GcnModel& m, const EffectiveWeights& eff,
                                       const GcnGrads& g, const Matrix* att_mask_grad = nullptr,
                                       const Matrix* conv_mask_grad = nullptr,
                                       const Matrix* dense_mask_grad = nullptr) {
  LatentGrads out;
  auto route = [](const ModelTensor& t, const std::optional<MaskStack>& stack, const Matrix& grad,
                  const Matrix* mask_grad) {
    if (!t.prunable) return grad;
    return mask_backward(t.layer, *stack, grad, mask_grad);
  };
  out.attention = route(m.attention, eff.attention_stack, g.attention, att_mask_grad);
  out.conv = route(m.conv, eff.conv_stack, g.conv, conv_mask_grad);
  out.dense = route(m.dense, eff.dense_stack, g.dense, dense_mask_grad);
  return out;
}

/// Single-sample backward as one call: latent gradients for every tensor.
inline LatentGrads gcn_backward(const GcnModel& m, const EffectiveWeights& eff,
                                const GcnCache& cache, const Matrix& grad_logits) {
  GcnGrads acc = make_zero_grads(m);
  gcn_backward_accumulate(m, eff, cache, grad_logits, acc);
  return route_through_masks(m, eff, acc);
}

/// Options controlling which tensors are wrapped and how groups are carved.
struct ModelInit {
  bool prune_attention = true;
  bool prune_conv = true;
  bool prune_dense = true;
  HeadSet heads_enabled;
  double latent_scale = 0.5;  // stddev of latent init for wrapped tensors
  double sigma0 = 1.0;
};

/// Build a model with per-head blocks on attention/conv and per-class column
/// groups on the dense tensor. The handcrafted adjacency seeds every
/// attention head (plus small noise); attention entries stay free learnable
/// parameters afterwards.
inline GcnModel make_model(int heads, int nodes, int sig_dim, int filters, int classes,
                           const Matrix& adjacency, const ModelInit& init, Rng& rng) {
  GcnModel m;
  m.heads = heads;
  m.nodes = nodes;
  m.sig_dim = sig_dim;
  m.filters = filters;
  m.classes = classes;

  m.attention.layer.name = "attention";
  m.attention.prunable = init.prune_attention;
  m.attention.layer.latent = Matrix(nodes, nodes * heads);
  for (int k = 0; k < heads; ++k)
    for (int i = 0; i < nodes; ++i)
      for (int j = 0; j < nodes; ++j)
        m.attention.layer.latent(i, k * nodes + j) =
            adjacency(i, j) * init.latent_scale + rng.normal(0.0, 0.2 * init.latent_scale);
  m.attention.layer.scheme = GroupScheme::contiguous(nodes, nodes * heads, 1, heads);

  m.conv.layer.name = "conv";
  m.conv.prunable = init.prune_conv;
  m.conv.layer.latent = Matrix(sig_dim, filters * heads);
  const double conv_scale = init.prune_conv ? init.latent_scale : 1.0 / std::sqrt(sig_dim);
  for (double& v : m.conv.layer.latent.data) v = rng.normal(0.0, conv_scale);
  m.conv.layer.scheme = GroupScheme::contiguous(sig_dim, filters * heads, 1, heads);

  m.dense.layer.name = "dense";
  m.dense.prunable = init.prune_dense;
  m.dense.layer.latent = Matrix(nodes * filters, classes);
  const double dense_scale = init.prune_dense ? init.latent_scale : 1.0 / std::sqrt(nodes * filters);
  for (double& v : m.dense.layer.latent.data) v = rng.normal(0.0, dense_scale);
  m.dense.layer.scheme = GroupScheme::contiguous(nodes * filters, classes, 1, classes);

  for (ModelTensor* t : m.tensors()) {
    t->layer.sigma = init.sigma0;
    t->layer.heads = init.heads_enabled;
  }
  return m;
}

}  // namespace semiprune
