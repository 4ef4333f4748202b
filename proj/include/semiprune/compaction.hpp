#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "semiprune/gcn.hpp"
#include "semiprune/mask.hpp"
#include "semiprune/matrix.hpp"

namespace semiprune {

/// Structural breakdown of a binary mask.
struct MaskStats {
  int zero_rows = 0;
  int zero_cols = 0;
  int zero_blocks = 0;
  int total_blocks = 0;
  long survivors = 0;
  /// Survivors lying outside fully-surviving rows and columns: the
  /// unstructured part of a semi-structured mask.
  long loose_survivors = 0;
};

inline MaskStats analyze(const Matrix& mask, const GroupScheme* scheme = nullptr) {
  for (double v : mask.data)
    if (v != 0.0 && v != 1.0)
      throw DomainError("analyze: mask entry " + std::to_string(v) + " is not binary");
  MaskStats st;
  std::vector<int> row_cnt(mask.rows, 0), col_cnt(mask.cols, 0);
  for (int i = 0; i < mask.rows; ++i)
    for (int j = 0; j < mask.cols; ++j)
      if (mask(i, j) != 0.0) {
        ++row_cnt[i];
        ++col_cnt[j];
        ++st.survivors;
      }
  for (int i = 0; i < mask.rows; ++i)
    if (row_cnt[i] == 0) ++st.zero_rows;
  for (int j = 0; j < mask.cols; ++j)
    if (col_cnt[j] == 0) ++st.zero_cols;
  for (int i = 0; i < mask.rows; ++i)
    for (int j = 0; j < mask.cols; ++j)
      if (mask(i, j) != 0.0 && row_cnt[i] < mask.cols && col_cnt[j] < mask.rows)
        ++st.loose_survivors;
  if (scheme) {
    scheme->validate(mask.rows, mask.cols);
    st.total_blocks = scheme->block_count();
    std::vector<long> blk(st.total_blocks, 0);
    for (int i = 0; i < mask.rows; ++i)
      for (int j = 0; j < mask.cols; ++j)
        if (mask(i, j) != 0.0) ++blk[scheme->block_of(i, j)];
    for (long b : blk)
      if (b == 0) ++st.zero_blocks;
  }
  return st;
}

struct RemainderEntry {
  int row = 0, col = 0;
  double value = 0.0;
};

/// Packing plan for one tensor: permutations move live rows/columns to the
/// front, a dense core covers the well-filled part, and stragglers become
/// coordinate-list remainder entries.
struct TensorPlan {
  int rows = 0, cols = 0;
  std::vector<int> row_perm, col_perm;  // packed position -> original index
  std::vector<int> row_pos, col_pos;    // original index -> packed position (-1 when dead)
  int core_rows = 0, core_cols = 0;
  int live_rows = 0, live_cols = 0;
  Matrix core;  // extracted masked weights, core_rows x core_cols (1x1 zero when empty)
  std::vector<RemainderEntry> remainder;
};

/// Iteratively peel rows/columns whose in-core survivor density falls below
/// `density` until the remaining rectangle is stable; peeled survivors go to
/// the remainder. density = 1 keeps only all-dense rectangles; 0 keeps the
/// whole live rectangle.
inline TensorPlan plan_tensor(const Matrix& mask, const Matrix& weights, double density = 0.5) {
  require_same_shape(mask, weights, "plan_tensor");
  for (double v : mask.data)
    if (v != 0.0 && v != 1.0) throw DomainError("plan_tensor: mask is not binary");
  if (density < 0.0 || density > 1.0) throw ParamError("plan_tensor: density must lie in [0,1]");

  TensorPlan p;
  p.rows = mask.rows;
  p.cols = mask.cols;
  std::vector<char> row_live(mask.rows, 0), col_live(mask.cols, 0);
  for (int i = 0; i < mask.rows; ++i)
    for (int j = 0; j < mask.cols; ++j)
      if (mask(i, j) != 0.0) row_live[i] = col_live[j] = 1;

  std::vector<char> row_core(row_live.begin(), row_live.end());
  std::vector<char> col_core(col_live.begin(), col_live.end());
  for (bool changed = true; changed;) {
    changed = false;
    long ccols = std::count(col_core.begin(), col_core.end(), 1);
    for (int i = 0; i < mask.rows; ++i) {
      if (!row_core[i]) continue;
      long cnt = 0;
      for (int j = 0; j < mask.cols; ++j)
        if (col_core[j] && mask(i, j) != 0.0) ++cnt;
      if (static_cast<double>(cnt) < density * static_cast<double>(ccols)) {
        row_core[i] = 0;
        changed = true;
      }
    }
    long crows = std::count(row_core.begin(), row_core.end(), 1);
    for (int j = 0; j < mask.cols; ++j) {
      if (!col_core[j]) continue;
      long cnt = 0;
      for (int i = 0; i < mask.rows; ++i)
        if (row_core[i] && mask(i, j) != 0.0) ++cnt;
      if (static_cast<double>(cnt) < density * static_cast<double>(crows)) {
        col_core[j] = 0;
        changed = true;
      }
    }
  }

  // pack: core first, then live stragglers, then dead, each in original order
  auto pack = [](const std::vector<char>& core, const std::vector<char>& live, std::vector<int>& perm,
                 std::vector<int>& pos, int& n_core, int& n_live) {
    const int n = static_cast<int>(core.size());
    perm.clear();
    for (int i = 0; i < n; ++i)
      if (core[i]) perm.push_back(i);
    n_core = static_cast<int>(perm.size());
    for (int i = 0; i < n; ++i)
      if (live[i] && !core[i]) perm.push_back(i);
    n_live = static_cast<int>(perm.size());
    for (int i = 0; i < n; ++i)
      if (!live[i]) perm.push_back(i);
    pos.assign(n, -1);
    for (int k = 0; k < n_live; ++k) pos[perm[k]] = k;
  };
  pack(row_core, row_live, p.row_perm, p.row_pos, p.core_rows, p.live_rows);
  pack(col_core, col_live, p.col_perm, p.col_pos, p.core_cols, p.live_cols);

  if (p.core_rows > 0 && p.core_cols > 0) {
    p.core = Matrix(p.core_rows, p.core_cols);
    for (int r = 0; r < p.core_rows; ++r)
      for (int c = 0; c < p.core_cols; ++c) {
        const int i = p.row_perm[r], j = p.col_perm[c];
        p.core(r, c) = mask(i, j) != 0.0 ? weights(i, j) : 0.0;
      }
  } else {
    p.core_rows = p.core_cols = 0;
  }
  for (int i = 0; i < mask.rows; ++i)
    for (int j = 0; j < mask.cols; ++j)
      if (mask(i, j) != 0.0 && !(row_core[i] && col_core[j]))
        p.remainder.push_back({i, j, weights(i, j)});
  return p;
}

/// Whole-model plan. S rows/columns are packed over the union of live
/// attention rows / live convolution filter columns across heads; the dense
/// tensor's row packing is induced by that (node, filter) packing, which ties
/// the upstream column permutations to the classifier's row permutation.
struct CompactPlan {
  int heads = 0, nodes = 0, sig_dim = 0, filters = 0, classes = 0;
  std::vector<TensorPlan> att;   // per head, n x n
  std::vector<TensorPlan> conv;  // per head, s x C
  TensorPlan dense;              // (nC) x classes, restricted to reachable rows
  std::vector<int> node_list, filter_list;  // packed order -> original index
  std::vector<int> node_pos, filter_pos;    // original index -> packed position (-1 when dead)
  double density = 0.5;
};

inline CompactPlan plan_compaction(const GcnModel& model, const std::vector<Matrix>& masks,
                                   double density = 0.5) {
  if (masks.size() != 3) throw StructureError("plan_compaction: expected 3 masks (attention, conv, dense)");
  const auto ts = model.tensors();
  for (size_t i = 0; i < 3; ++i)
    if (!masks[i].same_shape(ts[i]->layer.latent))
      throw StructureError("plan_compaction: mask " + masks[i].shape_str() + " does not match tensor " +
                           ts[i]->layer.latent.shape_str());
  if (model.attention.prunable || model.conv.prunable || model.dense.prunable)
    throw StructureError("plan_compaction: expected a finalized (non-latent) model");

  CompactPlan plan;
  plan.heads = model.heads;
  plan.nodes = model.nodes;
  plan.sig_dim = model.sig_dim;
  plan.filters = model.filters;
  plan.classes = model.classes;
  plan.density = density;

  const int n = model.nodes, s = model.sig_dim, C = model.filters;
  auto slice = [](const Matrix& m, int c0, int c1) { return detail::col_slice(m, c0, c1); };

  std::vector<char> node_live(n, 0), filter_live(C, 0);
  for (int k = 0; k < model.heads; ++k) {
    Matrix am = slice(masks[0], k * n, (k + 1) * n);
    Matrix aw = slice(model.attention.layer.latent, k * n, (k + 1) * n);
    plan.att.push_back(plan_tensor(am, aw, density));
    Matrix wm = slice(masks[1], k * C, (k + 1) * C);
    Matrix ww = slice(model.conv.layer.latent, k * C, (k + 1) * C);
    plan.conv.push_back(plan_tensor(wm, ww, density));
    for (int i = 0; i < n; ++i)
      if (plan.att[k].row_pos[i] >= 0) node_live[i] = 1;
    for (int c = 0; c < C; ++c)
      if (plan.conv[k].col_pos[c] >= 0) filter_live[c] = 1;
  }
  plan.node_pos.assign(n, -1);
  plan.filter_pos.assign(C, -1);
  for (int i = 0; i < n; ++i)
    if (node_live[i]) {
      plan.node_pos[i] = static_cast<int>(plan.node_list.size());
      plan.node_list.push_back(i);
    }
  for (int c = 0; c < C; ++c)
    if (filter_live[c]) {
      plan.filter_pos[c] = static_cast<int>(plan.filter_list.size());
      plan.filter_list.push_back(c);
    }

  // dense rows outside the reachable (live node, live filter) support carry
  // an exactly-zero activation; drop them from the mask before planning
  Matrix dm = masks[2];
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c)
      if (!node_live[i] || !filter_live[c])
        for (int j = 0; j < model.classes; ++j) dm(i * C + c, j) = 0.0;
  plan.dense = plan_tensor(dm, model.dense.layer.latent, density);
  return plan;
}

/// Analytic multiply-add counts (2 flops per MAC) of the full dense forward.
inline long flops_dense(const GcnModel& m) {
  const long n = m.nodes, s = m.sig_dim, C = m.filters;
  return m.heads * (2 * n * s * C + 2 * n * n * C) + 2 * n * C * m.classes;
}

/// Same count for the compacted path: core products at their packed shapes
/// plus per-entry remainder scatter work.
inline long flops_compact(const CompactPlan& p) {
  long f = 0;
  for (int k = 0; k < p.heads; ++k) {
    const TensorPlan& a = p.att[k];
    const TensorPlan& w = p.conv[k];
    f += 2L * a.live_cols * w.core_rows * w.core_cols;
    f += 2L * a.live_cols * static_cast<long>(w.remainder.size());
    f += 2L * a.core_rows * a.core_cols * w.live_cols;
    f += 2L * static_cast<long>(a.remainder.size()) * w.live_cols;
  }
  f += 2L * p.dense.core_rows * p.dense.core_cols;
  f += 2L * static_cast<long>(p.dense.remainder.size());
  return f;
}

/// Execute the compacted network. Arithmetic is an exact reordering of the
/// masked dense forward, so logits agree up to floating-point reassociation.
inline Matrix compact_forward(const CompactPlan& p, const GcnModel& model,
                              const TrajectoryGraph& g) {
  if (p.nodes != model.nodes || p.sig_dim != model.sig_dim || p.filters != model.filters ||
      p.heads != model.heads || p.classes != model.classes)
    throw StructureError("compact_forward: plan does not match model dimensions");
  if (g.signal.rows != p.sig_dim || g.signal.cols != p.nodes)
    throw ShapeError("compact_forward: graph signal " + g.signal.shape_str());

  const Matrix b = transpose(g.signal);  // n x s
  const int sn = static_cast<int>(p.node_list.size());
  const int sf = static_cast<int>(p.filter_list.size());
  Matrix st(std::max(sn, 1), std::max(sf, 1));

  std::vector<double> tbuf;
  std::vector<int> scat;
  for (int k = 0; k < p.heads; ++k) {
    const TensorPlan& ap = p.att[k];
    const TensorPlan& wp = p.conv[k];
    if (ap.live_cols == 0 || wp.live_cols == 0) continue;

    // T rows follow this head's packed attention columns
    tbuf.assign(static_cast<size_t>(ap.live_cols) * wp.live_cols, 0.0);
    auto t_at = [&](int i, int c) -> double& { return tbuf[static_cast<size_t>(i) * wp.live_cols + c]; };
    for (int i = 0; i < ap.live_cols; ++i) {
      const int bi = ap.col_perm[i];
      for (int r = 0; r < wp.core_rows; ++r) {
        const double bv = b(bi, wp.row_perm[r]);
        if (bv == 0.0) continue;
        for (int c = 0; c < wp.core_cols; ++c) t_at(i, c) += bv * wp.core(r, c);
      }
    }
    for (const RemainderEntry& e : wp.remainder) {
      const int cpos = wp.col_pos[e.col];
      for (int i = 0; i < ap.live_cols; ++i) t_at(i, cpos) += b(ap.col_perm[i], e.row) * e.value;
    }

    scat.assign(wp.live_cols, 0);
    for (int c = 0; c < wp.live_cols; ++c) scat[c] = p.filter_pos[wp.col_perm[c]];

    for (int r = 0; r < ap.core_rows; ++r) {
      const int srow = p.node_pos[ap.row_perm[r]];
      for (int j = 0; j < ap.core_cols; ++j) {
        const double a = ap.core(r, j);
        if (a == 0.0) continue;
        for (int c = 0; c < wp.live_cols; ++c) st(srow, scat[c]) += a * t_at(j, c);
      }
    }
    for (const RemainderEntry& e : ap.remainder) {
      const int srow = p.node_pos[e.row];
      const int trow = ap.col_pos[e.col];
      for (int c = 0; c < wp.live_cols; ++c) st(srow, scat[c]) += e.value * t_at(trow, c);
    }
  }

  for (double& v : st.data) v = v > 0.0 ? v : 0.0;

  Matrix logits(1, p.classes);
  const TensorPlan& dp = p.dense;
  auto h_of_row = [&](int orig_row) {
    const int node = orig_row / p.filters;
    const int filt = orig_row % p.filters;
    const int i = p.node_pos[node], j = p.filter_pos[filt];
    if (i < 0 || j < 0) throw StructureError("compact_forward: dense row references a dead activation");
    return st(i, j);
  };
  for (int r = 0; r < dp.core_rows; ++r) {
    const double h = h_of_row(dp.row_perm[r]);
    if (h == 0.0) continue;
    for (int c = 0; c < dp.core_cols; ++c) logits(0, dp.col_perm[c]) += h * dp.core(r, c);
  }
  for (const RemainderEntry& e : dp.remainder) logits(0, e.col) += h_of_row(e.row) * e.value;
  return logits;
}

struct BenchResult {
  double dense_time = 0.0;    // seconds per forward, median of repeats
  double compact_time = 0.0;  // seconds per forward, median of repeats
  double speedup = 0.0;
  long flops_dense = 0;
  long flops_compact = 0;
  double noise_band = 0.0;  // relative interquartile spread of the samples
  int inner_iterations = 1;
  bool resolution_warning = false;
};

namespace detail {

inline double clock_granularity() {
  using clock = std::chrono::steady_clock;
  double best = 1.0;
  for (int i = 0; i < 5; ++i) {
    auto a = clock::now();
    auto b = clock::now();
    while (b == a) b = clock::now();
    best = std::min(best, std::chrono::duration<double>(b - a).count());
  }
  return best;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double rel_iqr(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  const double q1 = v[n / 4], q3 = v[(3 * n) / 4], med = median(v);
  return med > 0.0 ? (q3 - q1) / med : 0.0;
}

}  // namespace detail

/// Median-of-R wall time of the masked dense forward vs the compacted
/// forward. Inner iterations grow until one compact pass takes at least 10x
/// the measured clock granularity.
inline BenchResult bench(const CompactPlan& plan, const GcnModel& model, const TrajectoryGraph& g,
                         int repeats = 20) {
  if (repeats < 5) throw ParamError("bench: need at least 5 repeats");
  BenchResult res;
  res.flops_dense = flops_dense(model);
  res.flops_compact = flops_compact(plan);

  const EffectiveWeights eff = materialize(model);
  double sink = 0.0;
  auto run_dense = [&] { sink += gcn_forward(model, eff, g).logits(0, 0); };
  auto run_compact = [&] { sink += compact_forward(plan, model, g)(0, 0); };

  using clock = std::chrono::steady_clock;
  const double gran = detail::clock_granularity();
  long inner = 1;
  for (;;) {
    auto t0 = clock::now();
    for (long i = 0; i < inner; ++i) run_compact();
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    if (dt >= 10.0 * gran || inner >= (1L << 22)) break;
    res.resolution_warning = true;
    inner *= 2;
  }
  res.inner_iterations = static_cast<int>(inner);

  // warmup
  for (long i = 0; i < inner; ++i) {
    run_dense();
    run_compact();
  }

  std::vector<double> dense_s, compact_s;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = clock::now();
    for (long i = 0; i < inner; ++i) run_dense();
    auto t1 = clock::now();
    for (long i = 0; i < inner; ++i) run_compact();
    auto t2 = clock::now();
    dense_s.push_back(std::chrono::duration<double>(t1 - t0).count() / inner);
    compact_s.push_back(std::chrono::duration<double>(t2 - t1).count() / inner);
  }
  if (sink == 0.12345) throw NumericError("bench: unreachable");  // keep the sink alive

  res.dense_time = detail::median(dense_s);
  res.compact_time = detail::median(compact_s);
  res.speedup = res.dense_time / res.compact_time;
  res.noise_band = detail::rel_iqr(dense_s) + detail::rel_iqr(compact_s);
  return res;
}

inline nlohmann::ordered_json bench_to_json(const BenchResult& r) {
  return {{"dense_ms", r.dense_time * 1e3},     {"compact_ms", r.compact_time * 1e3},
          {"speedup", r.speedup},               {"flops_dense", r.flops_dense},
          {"flops_compact", r.flops_compact},   {"noise_band", r.noise_band},
          {"inner_iterations", r.inner_iterations}};
}

/// ASCII PGM (P2) image of a mask: 0 maps to black (pruned), 1 to white.
/// With a scheme, interior block boundaries are overlaid at mid-gray.
inline void export_mask_image(const Matrix& mask, const std::string& path,
                              const GroupScheme* scheme = nullptr) {
  for (double v : mask.data)
    if (!(v >= 0.0 && v <= 1.0))
      throw DomainError("export_mask_image: entry " + std::to_string(v) + " outside [0,1]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path + "'");
  out << "P2\n" << mask.cols << ' ' << mask.rows << "\n255\n";
  for (int i = 0; i < mask.rows; ++i) {
    for (int j = 0; j < mask.cols; ++j) {
      int px = static_cast<int>(std::lround(mask(i, j) * 255.0));
      if (scheme) {
        const bool row_edge = i > 0 && scheme->row_group[i] != scheme->row_group[i - 1];
        const bool col_edge = j > 0 && scheme->col_group[j] != scheme->col_group[j - 1];
        if (row_edge || col_edge) px = 128;
      }
      out << px << (j + 1 < mask.cols ? ' ' : '\n');
    }
  }
  if (!out) throw DataError("failed while writing image '" + path + "'");
}

namespace detail {

inline nlohmann::ordered_json tensor_plan_to_json(const TensorPlan& p) {
  nlohmann::ordered_json j;
  j["rows"] = p.rows;
  j["cols"] = p.cols;
  j["row_perm"] = p.row_perm;
  j["col_perm"] = p.col_perm;
  j["core_rows"] = p.core_rows;
  j["core_cols"] = p.core_cols;
  j["live_rows"] = p.live_rows;
  j["live_cols"] = p.live_cols;
  j["core"] = p.core.data;
  j["remainder"] = nlohmann::json::array();
  for (const auto& e : p.remainder) j["remainder"].push_back({e.row, e.col, e.value});
  return j;
}

inline TensorPlan tensor_plan_from_json(const nlohmann::json& j) {
  TensorPlan p;
  p.rows = j.at("rows").get<int>();
  p.cols = j.at("cols").get<int>();
  p.row_perm = j.at("row_perm").get<std::vector<int>>();
  p.col_perm = j.at("col_perm").get<std::vector<int>>();
  p.core_rows = j.at("core_rows").get<int>();
  p.core_cols = j.at("core_cols").get<int>();
  p.live_rows = j.at("live_rows").get<int>();
  p.live_cols = j.at("live_cols").get<int>();
  if (p.core_rows > 0 && p.core_cols > 0) {
    p.core = Matrix(p.core_rows, p.core_cols);
    p.core.data = j.at("core").get<std::vector<double>>();
    if (p.core.data.size() != static_cast<size_t>(p.core_rows) * p.core_cols)
      throw DataError("plan: core data length mismatch");
  }
  for (const auto& e : j.at("remainder"))
    p.remainder.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
  p.row_pos.assign(p.rows, -1);
  for (int k = 0; k < p.live_rows; ++k) p.row_pos[p.row_perm[k]] = k;
  p.col_pos.assign(p.cols, -1);
  for (int k = 0; k < p.live_cols; ++k) p.col_pos[p.col_perm[k]] = k;
  return p;
}

}  // namespace detail

inline nlohmann::ordered_json plan_to_json(const CompactPlan& p) {
  nlohmann::ordered_json j;
  j["heads"] = p.heads;
  j["nodes"] = p.nodes;
  j["sig_dim"] = p.sig_dim;
  j["filters"] = p.filters;
  j["classes"] = p.classes;
  j["density"] = p.density;
  j["node_list"] = p.node_list;
  j["filter_list"] = p.filter_list;
  j["att"] = nlohmann::json::array();
  for (const auto& t : p.att) j["att"].push_back(detail::tensor_plan_to_json(t));
  j["conv"] = nlohmann::json::array();
  for (const auto& t : p.conv) j["conv"].push_back(detail::tensor_plan_to_json(t));
  j["dense"] = detail::tensor_plan_to_json(p.dense);
  return j;
}

inline CompactPlan plan_from_json(const nlohmann::json& j) {
  CompactPlan p;
  p.heads = j.at("heads").get<int>();
  p.nodes = j.at("nodes").get<int>();
  p.sig_dim = j.at("sig_dim").get<int>();
  p.filters = j.at("filters").get<int>();
  p.classes = j.at("classes").get<int>();
  p.density = j.at("density").get<double>();
  p.node_list = j.at("node_list").get<std::vector<int>>();
  p.filter_list = j.at("filter_list").get<std::vector<int>>();
  p.node_pos.assign(p.nodes, -1);
  for (size_t k = 0; k < p.node_list.size(); ++k) p.node_pos[p.node_list[k]] = static_cast<int>(k);
  p.filter_pos.assign(p.filters, -1);
  for (size_t k = 0; k < p.filter_list.size(); ++k) p.filter_pos[p.filter_list[k]] = static_cast<int>(k);
  for (const auto& t : j.at("att")) p.att.push_back(detail::tensor_plan_from_json(t));
  for (const auto& t : j.at("conv")) p.conv.push_back(detail::tensor_plan_from_json(t));
  p.dense = detail::tensor_plan_from_json(j.at("dense"));
  return p;
}

}  // namespace semiprune
