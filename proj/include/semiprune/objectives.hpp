#pragma once

#include <cmath>
#include <vector>

#include "semiprune/matrix.hpp"

namespace semiprune {

struct LossWeights {
  double lambda = 1000.0;   // budget weight, overestimated so the budget is hit first
  double beta = 0.1;        // surrogate-rank weight
  double target_cost = 0.0; // targeted count of surviving weights, global across layers
};

/// Monotone annealing curve hitting both endpoints exactly.
struct AnnealSchedule {
  enum class Shape { linear, exponential };
  double start = 1.0;
  double end = 1.0;
  long total_steps = 1;
  Shape shape = Shape::exponential;

  double value(long step) const {
    if (start <= 0.0 || end <= 0.0) throw ParamError("AnnealSchedule: endpoints must be positive");
    if (total_steps <= 0) throw ParamError("AnnealSchedule: total_steps must be positive");
    if (step <= 0) return start;
    if (step >= total_steps) return end;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    if (shape == Shape::linear) return start + (end - start) * t;
    return start * std::pow(end / start, t);
  }

  static const char* shape_name(Shape s) { return s == Shape::linear ? "linear" : "exponential"; }
  static Shape parse_shape(const std::string& s) {
    if (s == "linear") return Shape::linear;
    if (s == "exponential") return Shape::exponential;
    throw ParamError("AnnealSchedule: unknown shape '" + s + "'");
  }
};

struct ScalarAndGrad {
  double loss = 0.0;
  Matrix grad;
};

struct ScalarAndGrads {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

/// Mean batch cross entropy of row-wise logits; grad is (softmax - onehot)/batch.
inline ScalarAndGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.rows) + " logit rows");
  const int batch = logits.rows;
  const int classes = logits.cols;
  ScalarAndGrad out;
  out.grad = Matrix(batch, classes);
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes)
      throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                        std::to_string(classes) + ")");
    double mx = logits(i, 0);
    for (int j = 1; j < classes; ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (int j = 0; j < classes; ++j) z += std::exp(logits(i, j) - mx);
    const double logz = std::log(z) + mx;
    loss += logz - logits(i, y);
    for (int j = 0; j < classes; ++j)
      out.grad(i, j) = (std::exp(logits(i, j) - mx) / z - (j == y ? 1.0 : 0.0)) / batch;
  }
  out.loss = loss / batch;
  return out;
}

/// Budget: (sum of all mask entries - c)^2. Every entry shares the gradient 2(sum - c).
inline ScalarAndGrads budget_loss(const std::vector<const Matrix*>& masks, double c) {
  double total = 0.0;
  for (const Matrix* m : masks) total += m->sum();
  const double gap = total - c;
  ScalarAndGrads out;
  out.loss = gap * gap;
  out.grads.reserve(masks.size());
  for (const Matrix* m : masks) out.grads.push_back(Matrix(m->rows, m->cols, 2.0 * gap));
  return out;
}

/// Surrogate rank of a non-negative mask: soft count of non-null columns plus
/// non-null rows, sum_j (1 - exp(-g colsum_j)) + sum_i (1 - exp(-g rowsum_i)).
inline ScalarAndGrad surrogate_rank(const Matrix& mask, double gamma) {
  if (gamma <= 0.0) throw ParamError("surrogate_rank: gamma must be positive");
  const Matrix colsum = reduce(mask, Axis::cols);
  const Matrix rowsum = reduce(mask, Axis::rows);
  ScalarAndGrad out;
  for (int j = 0; j < mask.cols; ++j) out.loss += 1.0 - std::exp(-gamma * colsum(0, j));
  for (int i = 0; i < mask.rows; ++i) out.loss += 1.0 - std::exp(-gamma * rowsum(i, 0));
  out.grad = Matrix(mask.rows, mask.cols);
  for (int i = 0; i < mask.rows; ++i) {
    const double gr = gamma * std::exp(-gamma * rowsum(i, 0));
    for (int j = 0; j < mask.cols; ++j) out.grad(i, j) = gamma * std::exp(-gamma * colsum(0, j)) + gr;
  }
  return out;
}

/// Weighted combination ce + lambda * budget + beta * sum_l rank(mask_l).
/// Returned grads are the lambda/beta terms on each mask; the cross-entropy
/// path reaches the masks separately through the network backward.
inline ScalarAndGrads total_loss(double ce, const std::vector<const Matrix*>& masks,
                                 const LossWeights& w, double gamma) {
  ScalarAndGrads budget = budget_loss(masks, w.target_cost);
  ScalarAndGrads out;
  out.loss = ce + w.lambda * budget.loss;
  out.grads.reserve(masks.size());
  for (size_t l = 0; l < masks.size(); ++l) {
    ScalarAndGrad rank = surrogate_rank(*masks[l], gamma);
    out.loss += w.beta * rank.loss;
    Matrix g = scale(budget.grads[l], w.lambda);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += w.beta * rank.grad.data[i];
    out.grads.push_back(std::move(g));
  }
  return out;
}

}  // namespace semiprune
