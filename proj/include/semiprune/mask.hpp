#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "semiprune/matrix.hpp"

namespace semiprune {

/// Partition of a tensor's rows and columns into groups. Blocks are the grid
/// product of row groups x column groups; by default entire rows/columns form
/// the row/column tying groups and blocks carve the channel structure.
struct GroupScheme {
  std::vector<int> row_group;  // row index -> group id
  std::vector<int> col_group;  // col index -> group id
  int row_group_count = 0;
  int col_group_count = 0;
  /// When set, row/column tying aggregates within the block's column/row
  /// span instead of across the full row/column.
  bool tie_within_block = false;

  static GroupScheme trivial(int rows, int cols) {
    GroupScheme s;
    s.row_group.assign(rows, 0);
    s.col_group.assign(cols, 0);
    s.row_group_count = 1;
    s.col_group_count = 1;
    return s;
  }

  /// Contiguous balanced ranges: index i of n goes to group i*groups/n.
  static GroupScheme contiguous(int rows, int cols, int row_groups, int col_groups) {
    if (row_groups < 1 || col_groups < 1) throw ParamError("GroupScheme: group counts must be >= 1");
    if (row_groups > rows || col_groups > cols)
      throw ParamError("GroupScheme: more groups than indices");
    GroupScheme s;
    s.row_group.resize(rows);
    s.col_group.resize(cols);
    for (int i = 0; i < rows; ++i) s.row_group[i] = static_cast<int>(static_cast<long>(i) * row_groups / rows);
    for (int j = 0; j < cols; ++j) s.col_group[j] = static_cast<int>(static_cast<long>(j) * col_groups / cols);
    s.row_group_count = row_groups;
    s.col_group_count = col_groups;
    return s;
  }

  int block_of(int i, int j) const { return row_group[i] * col_group_count + col_group[j]; }
  int block_count() const { return row_group_count * col_group_count; }

  void validate(int rows, int cols) const {
    if (static_cast<int>(row_group.size()) != rows || static_cast<int>(col_group.size()) != cols)
      throw ShapeError("GroupScheme: partition sizes " + Matrix::shape_str(static_cast<int>(row_group.size()), static_cast<int>(col_group.size())) +
                       " do not match tensor " + Matrix::shape_str(rows, cols));
    for (int g : row_group)
      if (g < 0 || g >= row_group_count) throw ShapeError("GroupScheme: row group id out of range");
    for (int g : col_group)
      if (g < 0 || g >= col_group_count) throw ShapeError("GroupScheme: col group id out of range");
  }
};

/// Which tying heads participate in the gate. All four is the default
/// (semi-structured); block-only realizes structured pruning, entry-only
/// unstructured.
struct HeadSet {
  bool u = true, r = true, c = true, b = true;

  static HeadSet all() { return {}; }
  static HeadSet entry_only() { return {true, false, false, false}; }
  static HeadSet block_only() { return {false, false, false, true}; }

  std::string str() const {
    std::string s;
    if (u) s += 'u';
    if (r) s += 'r';
    if (c) s += 'c';
    if (b) s += 'b';
    return s;
  }
  static HeadSet parse(const std::string& s) {
    HeadSet h{false, false, false, false};
    for (char ch : s) {
      if (ch == 'u') h.u = true;
      else if (ch == 'r') h.r = true;
      else if (ch == 'c') h.c = true;
      else if (ch == 'b') h.b = true;
      else throw ParamError("HeadSet: unknown head '" + std::string(1, ch) + "'");
    }
    if (!h.u && !h.r && !h.c && !h.b) throw ParamError("HeadSet: at least one head required");
    return h;
  }
};

/// A latent tensor together with its tying scheme and band-stop crispness.
struct LatentLayer {
  Matrix latent;
  GroupScheme scheme;
  double sigma = 1.0;
  HeadSet heads;
  std::string name;
};

struct MaskHeads {
  Matrix u, r, c, b;
};

/// Cached forward values of one cascade evaluation, consumed by backward.
struct MaskStack {
  Matrix psi1;
  Matrix psi2_u, psi2_r, psi2_c, psi2_b;
  Matrix psi3;
};

/// psi1(w) = 2 (1 + exp(-sigma w^2))^-1 - 1, computed as tanh(sigma w^2 / 2).
/// Smooth band-stop: 0 at w = 0, saturating to 1 as |w| grows.
inline Matrix band_stop(const Matrix& latent, double sigma) {
  if (sigma <= 0.0) throw ParamError("band_stop: sigma must be positive, got " + std::to_string(sigma));
  Matrix out = latent;
  for (double& v : out.data) v = std::tanh(0.5 * sigma * v * v);
  return out;
}

/// Entry-wise derivative psi1'(w) = sigma w (1 - psi1(w)^2); the diagonal of J1.
inline Matrix band_stop_diag_jacobian(const Matrix& latent, double sigma) {
  if (sigma <= 0.0) throw ParamError("band_stop: sigma must be positive, got " + std::to_string(sigma));
  Matrix out = latent;
  for (double& v : out.data) {
    const double p = std::tanh(0.5 * sigma * v * v);
    v = sigma * v * (1.0 - p * p);
  }
  return out;
}

namespace detail {

/// Replace every entry by the mean over its row tying group. Averaging over a
/// partition is a self-adjoint projection, so this doubles as the backward
/// adjoint of the row head.
inline Matrix row_tie_mean(const Matrix& m, const GroupScheme& s) {
  Matrix out(m.rows, m.cols);
  if (!s.tie_within_block) {
    for (int i = 0; i < m.rows; ++i) {
      double sum = 0.0;
      for (int j = 0; j < m.cols; ++j) sum += m(i, j);
      const double mean = sum / m.cols;
      for (int j = 0; j < m.cols; ++j) out(i, j) = mean;
    }
    return out;
  }
  std::vector<double> sum(s.col_group_count);
  std::vector<int> cnt(s.col_group_count);
  for (int i = 0; i < m.rows; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0);
    for (int j = 0; j < m.cols; ++j) {
      sum[s.col_group[j]] += m(i, j);
      cnt[s.col_group[j]] += 1;
    }
    for (int j = 0; j < m.cols; ++j) out(i, j) = sum[s.col_group[j]] / cnt[s.col_group[j]];
  }
  return out;
}

inline Matrix col_tie_mean(const Matrix& m, const GroupScheme& s) {
  Matrix out(m.rows, m.cols);
  if (!s.tie_within_block) {
    for (int j = 0; j < m.cols; ++j) {
      double sum = 0.0;
      for (int i = 0; i < m.rows; ++i) sum += m(i, j);
      const double mean = sum / m.rows;
      for (int i = 0; i < m.rows; ++i) out(i, j) = mean;
    }
    return out;
  }
  std::vector<double> sum(s.row_group_count);
  std::vector<int> cnt(s.row_group_count);
  for (int j = 0; j < m.cols; ++j) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0);
    for (int i = 0; i < m.rows; ++i) {
      sum[s.row_group[i]] += m(i, j);
      cnt[s.row_group[i]] += 1;
    }
    for (int i = 0; i < m.rows; ++i) out(i, j) = sum[s.row_group[i]] / cnt[s.row_group[i]];
  }
  return out;
}

inline Matrix block_mean(const Matrix& m, const GroupScheme& s) {
  std::vector<double> sum(s.block_count(), 0.0);
  std::vector<int> cnt(s.block_count(), 0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) {
      const int blk = s.block_of(i, j);
      sum[blk] += m(i, j);
      cnt[blk] += 1;
    }
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) {
      const int blk = s.block_of(i, j);
      out(i, j) = sum[blk] / cnt[blk];
    }
  return out;
}

}  // namespace detail

/// Weight-sharing heads: entry-wise identity plus row / column / block group
/// means of psi1. Group means keep every head inside [0,1] and differentiable.
inline MaskHeads share(const Matrix& psi1, const GroupScheme& scheme) {
  scheme.validate(psi1.rows, psi1.cols);
  MaskHeads h;
  h.u = psi1;
  h.r = detail::row_tie_mean(psi1, scheme);
  h.c = detail::col_tie_mean(psi1, scheme);
  h.b = detail::block_mean(psi1, scheme);
  return h;
}

/// Gating: psi3 = b + (1-b) c + (1-b)(1-c) r + (1-b)(1-c)(1-r) u.
/// At crisp head values exactly one term fires; block ties take priority over
/// column, then row, then entry.
inline Matrix gate(const MaskHeads& heads) {
  require_same_shape(heads.u, heads.r, "gate");
  require_same_shape(heads.u, heads.c, "gate");
  require_same_shape(heads.u, heads.b, "gate");
  Matrix out(heads.u.rows, heads.u.cols);
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double u = heads.u.data[i], r = heads.r.data[i], c = heads.c.data[i], b = heads.b.data[i];
    for (double v : {u, r, c, b})
      if (!(v >= 0.0 && v <= 1.0))
        throw DomainError("gate: head entry " + std::to_string(v) + " outside [0,1]");
    out.data[i] = b + (1.0 - b) * c + (1.0 - b) * (1.0 - c) * r + (1.0 - b) * (1.0 - c) * (1.0 - r) * u;
  }
  return out;
}

struct ComposeResult {
  Matrix weights;
  MaskStack stack;
};

/// Full cascade: weights = latent (.) gate(share(band_stop(latent))).
/// Disabled heads enter the gate as zeros, which removes their term and turns
/// their complement into the identity.
inline ComposeResult compose(const LatentLayer& layer) {
  layer.scheme.validate(layer.latent.rows, layer.latent.cols);
  MaskStack st;
  st.psi1 = band_stop(layer.latent, layer.sigma);
  MaskHeads h = share(st.psi1, layer.scheme);
  const Matrix zero(layer.latent.rows, layer.latent.cols);
  st.psi2_u = layer.heads.u ? h.u : zero;
  st.psi2_r = layer.heads.r ? h.r : zero;
  st.psi2_c = layer.heads.c ? h.c : zero;
  st.psi2_b = layer.heads.b ? h.b : zero;
  st.psi3 = gate({st.psi2_u, st.psi2_r, st.psi2_c, st.psi2_b});
  return {hadamard(layer.latent, st.psi3), std::move(st)};
}

/// Exact reverse pass of compose for the loss term
///   dL/dW_hat = grad_weights (.) psi3            (product-rule direct term)
///             + psi1' (.) sum_x J2x^T (J3x (.) g)  with g = grad_weights (.) W_hat + grad_mask.
/// J3x diagonals are the complement products of the gate; each J2x adjoint is
/// the same group mean as the forward head (the averaging operator is
/// self-adjoint). grad_mask carries loss terms taken directly on psi3
/// (budget, rank); pass a zero matrix when there are none.
inline Matrix mask_backward(const LatentLayer& layer, const MaskStack& stack,
                            const Matrix& grad_weights, const Matrix* grad_mask = nullptr) {
  require_same_shape(grad_weights, layer.latent, "mask_backward");
  Matrix g3 = hadamard(grad_weights, layer.latent);
  if (grad_mask) add_in_place(g3, *grad_mask);

  const Matrix& u = stack.psi2_u;
  const Matrix& r = stack.psi2_r;
  const Matrix& c = stack.psi2_c;
  const Matrix& b = stack.psi2_b;

  Matrix g1(g3.rows, g3.cols);
  const size_t n = g3.data.size();
  if (layer.heads.u) {
    for (size_t i = 0; i < n; ++i)
      g1.data[i] += (1.0 - b.data[i]) * (1.0 - c.data[i]) * (1.0 - r.data[i]) * g3.data[i];
  }
  if (layer.heads.r) {
    Matrix t(g3.rows, g3.cols);
    for (size_t i = 0; i < n; ++i)
      t.data[i] = (1.0 - b.data[i]) * (1.0 - c.data[i]) * (1.0 - u.data[i]) * g3.data[i];
    add_in_place(g1, detail::row_tie_mean(t, layer.scheme));
  }
  if (layer.heads.c) {
    Matrix t(g3.rows, g3.cols);
    for (size_t i = 0; i < n; ++i)
      t.data[i] = (1.0 - b.data[i]) * (1.0 - r.data[i]) * (1.0 - u.data[i]) * g3.data[i];
    add_in_place(g1, detail::col_tie_mean(t, layer.scheme));
  }
  if (layer.heads.b) {
    Matrix t(g3.rows, g3.cols);
    for (size_t i = 0; i < n; ++i)
      t.data[i] = (1.0 - c.data[i]) * (1.0 - r.data[i]) * (1.0 - u.data[i]) * g3.data[i];
    add_in_place(g1, detail::block_mean(t, layer.scheme));
  }

  Matrix out = hadamard(grad_weights, stack.psi3);
  const Matrix dpsi1 = band_stop_diag_jacobian(layer.latent, layer.sigma);
  for (size_t i = 0; i < n; ++i) out.data[i] += dpsi1.data[i] * g1.data[i];
  return out;
}

}  // namespace semiprune
