#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "semiprune/config.hpp"
#include "semiprune/data.hpp"
#include "semiprune/gcn.hpp"
#include "semiprune/objectives.hpp"

namespace semiprune {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Matrix m, v;
  long t = 0;
};

/// Standard Adam with bias correction.
inline void adam_step(Matrix& params, const Matrix& grad, AdamState& st, double lr,
                      const AdamParams& ap = {}) {
  require_same_shape(params, grad, "adam_step");
  if (st.t == 0) {
    st.m = Matrix(params.rows, params.cols);
    st.v = Matrix(params.rows, params.cols);
  }
  require_same_shape(params, st.m, "adam_step");
  st.t += 1;
  const double c1 = 1.0 - std::pow(ap.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(ap.beta2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.data.size(); ++i) {
    const double g = grad.data[i];
    st.m.data[i] = ap.beta1 * st.m.data[i] + (1.0 - ap.beta1) * g;
    st.v.data[i] = ap.beta2 * st.v.data[i] + (1.0 - ap.beta2) * g * g;
    const double mhat = st.m.data[i] / c1;
    const double vhat = st.v.data[i] / c2;
    params.data[i] -= lr * mhat / (std::sqrt(vhat) + ap.eps);
  }
}

struct LrState {
  double lr = 0.01;
  double prev_loss = 0.0;
  double prev_speed = 0.0;
};

/// Learning rate inversely proportional to the speed of change of the loss:
/// x0.99 when the one-epoch |loss delta| grew, /0.99 otherwise (ties take the
/// divide branch).
inline LrState lr_update(const LrState& s, double new_loss) {
  const double speed = std::abs(new_loss - s.prev_loss);
  LrState out;
  out.lr = speed > s.prev_speed ? s.lr * 0.99 : s.lr / 0.99;
  out.prev_loss = new_loss;
  out.prev_speed = speed;
  return out;
}

struct TrainConfig {
  int epochs = 2700;
  int batch_size = 200;
  double lr_init = 0.01;
  AdamParams adam;
  LossWeights weights;
  AnnealSchedule sigma_schedule;
  AnnealSchedule gamma_schedule;
  long seed = 0;
  double target_rate = 0.9;
  double threshold = 0.5;
  /// Epochs trained with lambda = beta = 0 before the budget engages. A dead
  /// start (every latent crushed toward the psi1'(0) = 0 trap before the
  /// classifier learns anything) is avoided by letting cross entropy shape
  /// the latents first; the band-stop then removes the smallest ones.
  int warmup_epochs = 0;
  /// Anneal the budget target from the mask mass measured when the budget
  /// engages down to target_cost over the sigma/gamma window (cubic taper).
  /// Keeping the budget gap small preserves the per-coordinate balance
  /// between the cross-entropy and budget gradients under Adam's
  /// normalization; a constant target floods every coordinate with the same
  /// downward push and kills the network before it can reorganize.
  bool anneal_budget = true;
  /// The c-descent finishes after this fraction of the remaining anneal
  /// window, before the band-stop fully crisps; pruning while psi1 is still
  /// soft keeps the surviving weights steerable.
  double budget_window = 0.6;

  /// Fraction of the budget descent completed at `step`.
  double budget_progress(long step, long engage_step) const {
    const long total = sigma_schedule.total_steps;
    if (step >= total || engage_step >= total) return 1.0;
    const double span = budget_window * static_cast<double>(total - engage_step);
    if (span <= 0.0) return 1.0;
    const double tau = static_cast<double>(step - engage_step) / span;
    return std::clamp(tau, 0.0, 1.0);
  }

  /// Mass target at `step`. `leak` is the part of the current mask mass that
  /// the hard threshold would discard (sum of sub-threshold entries plus the
  /// shortfall of supra-threshold ones); compensating for it makes the
  /// surviving-entry count, not the raw mass, converge to target_cost. The
  /// target never exceeds the current mass (beyond the final c), which damps
  /// the count-lag feedback: an un-damped upward push can saturate the whole
  /// tensor right as the band-stop freezes it.
  double budget_target(long step, double start_mass, long engage_step, double leak,
                       double current_mass) const {
    const double c = weights.target_cost;
    if (!anneal_budget) return c;
    const double tau = budget_progress(step, engage_step);
    const double u = 1.0 - tau;
    const double base = start_mass > c ? c + (start_mass - c) * u * u * u : c;
    return std::min(base + leak * tau, std::max(current_mass, c));
  }

  /// Derive the runtime config from a file config and the dataset/model
  /// scale: the pruning rate becomes an absolute surviving-weight budget and
  /// the annealing schedules span the first 80% of all optimizer steps.
  static TrainConfig from_config(const Config& c, long prunable_entries, long train_size) {
    TrainConfig t;
    t.epochs = c.train.epochs;
    t.batch_size = c.train.batch_size;
    t.lr_init = c.train.lr_init;
    t.seed = c.train.seed;
    t.target_rate = c.prune.target_rate;
    t.threshold = c.prune.threshold;
    t.warmup_epochs = c.train.warmup;
    t.budget_window = c.prune.budget_window;
    t.weights.lambda = c.prune.enabled ? c.prune.lambda : 0.0;
    t.weights.beta = c.prune.enabled ? c.prune.beta : 0.0;
    t.weights.target_cost = (1.0 - c.prune.target_rate) * static_cast<double>(prunable_entries);
    const long steps_per_epoch = (train_size + c.train.batch_size - 1) / c.train.batch_size;
    const long anneal_steps = std::max<long>(1, static_cast<long>(0.8 * c.train.epochs * steps_per_epoch));
    t.sigma_schedule = {c.prune.sigma.start, c.prune.sigma.end, anneal_steps,
                        AnnealSchedule::parse_shape(c.prune.sigma.shape)};
    t.gamma_schedule = {c.prune.gamma.start, c.prune.gamma.end, anneal_steps,
                        AnnealSchedule::parse_shape(c.prune.gamma.shape)};
    return t;
  }
};

struct EpochRecord {
  int epoch = 0;
  double ce = 0.0;
  double budget = 0.0;
  double rank = 0.0;
  double lr = 0.0;
  double mask_mass = 0.0;
  double accuracy = 0.0;
};

inline double evaluate_accuracy(const GcnModel& m, const EffectiveWeights& eff,
                                const std::vector<TrajectoryGraph>& graphs,
                                const std::vector<int>& labels) {
  if (graphs.empty()) return 0.0;
  int hits = 0;
  for (size_t i = 0; i < graphs.size(); ++i) {
    const Matrix logits = gcn_forward(m, eff, graphs[i]).logits;
    int best = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (logits(0, j) > logits(0, best)) best = j;
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / graphs.size();
}

inline double evaluate_accuracy(const GcnModel& m, const std::vector<TrajectoryGraph>& graphs,
                                const std::vector<int>& labels) {
  return evaluate_accuracy(m, materialize(m), graphs, labels);
}

/// Single-threaded training loop: per step anneal sigma/gamma, compose masks,
/// batch forward, combined backward (cross-entropy through the network plus
/// budget/rank gradients injected at each wrapped tensor's mask), Adam
/// update; per epoch the adaptive learning-rate rule.
class Trainer {
 public:
  Trainer(GcnModel model, const TrainConfig& cfg)
      : model_(std::move(model)), cfg_(cfg), rng_(static_cast<uint64_t>(cfg.seed)) {
    lr_.lr = cfg_.lr_init;
    adam_.resize(3);
  }

  EpochRecord run_epoch(const Dataset& ds) {
    const auto& graphs = ds.train_graphs;
    if (graphs.empty()) throw DataError("train: empty dataset");
    std::vector<int> order(graphs.size());
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);

    double ce_weighted = 0.0;
    double total_sum = 0.0;
    int batches = 0;

    for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const int bn = static_cast<int>(std::min<size_t>(cfg_.batch_size, order.size() - start));
      const double sigma = cfg_.sigma_schedule.value(global_step_);
      const double gamma = cfg_.gamma_schedule.value(global_step_);
      for (ModelTensor* t : model_.tensors())
        if (t->prunable) t->layer.sigma = sigma;

      EffectiveWeights eff = materialize(model_);

      Matrix logits(bn, model_.classes);
      std::vector<int> labels(bn);
      std::vector<GcnCache> caches;
      caches.reserve(bn);
      for (int b = 0; b < bn; ++b) {
        const int idx = order[start + b];
        ForwardResult fr = gcn_forward(model_, eff, graphs[idx]);
        for (int j = 0; j < model_.classes; ++j) logits(b, j) = fr.logits(0, j);
        labels[b] = ds.train_labels[idx];
        caches.push_back(std::move(fr.cache));
      }

      ScalarAndGrad ce = cross_entropy(logits, labels);
      std::vector<const Matrix*> masks = wrapped_masks(eff);
      LossWeights step_weights = cfg_.weights;
      const bool warming = epoch_ < cfg_.warmup_epochs;
      if (warming) step_weights.lambda = step_weights.beta = 0.0;
      double mass = 0.0;
      long count = 0;
      for (const Matrix* m : masks) {
        mass += m->sum();
        for (double v : m->data) count += v >= cfg_.threshold;
      }
      if (!warming && budget_start_mass_ < 0.0) {
        budget_start_mass_ = mass;
        budget_engage_step_ = global_step_;
      }
      step_weights.target_cost = cfg_.budget_target(global_step_, budget_start_mass_,
                                                    budget_engage_step_, mass - count, mass);
      ScalarAndGrads tot = total_loss(ce.loss, masks, step_weights, gamma);
      if (!std::isfinite(tot.loss)) throw TrainingError("train: non-finite loss", global_step_);

      GcnGrads acc = make_zero_grads(model_);
      Matrix grow(1, model_.classes);
      for (int b = 0; b < bn; ++b) {
        for (int j = 0; j < model_.classes; ++j) grow(0, j) = ce.grad(b, j);
        gcn_backward_accumulate(model_, eff, caches[b], grow, acc);
      }

      const Matrix* mg[3] = {nullptr, nullptr, nullptr};
      size_t mi = 0;
      const auto ts = model_.tensors();
      for (size_t i = 0; i < ts.size(); ++i)
        if (ts[i]->prunable) mg[i] = &tot.grads[mi++];
      LatentGrads lg = route_through_masks(model_, eff, acc, mg[0], mg[1], mg[2]);

      adam_step(model_.attention.layer.latent, lg.attention, adam_[0], lr_.lr, cfg_.adam);
      adam_step(model_.conv.layer.latent, lg.conv, adam_[1], lr_.lr, cfg_.adam);
      adam_step(model_.dense.layer.latent, lg.dense, adam_[2], lr_.lr, cfg_.adam);

      ce_weighted += ce.loss * bn;
      total_sum += tot.loss;
      ++batches;
      ++global_step_;
    }

    // end-of-epoch snapshot with the post-update masks
    const double gamma_now = cfg_.gamma_schedule.value(global_step_);
    EffectiveWeights eff = materialize(model_);
    double mass = 0.0;
    double rank = 0.0;
    for (const Matrix* m : wrapped_masks(eff)) {
      mass += m->sum();
      rank += surrogate_rank(*m, gamma_now).loss;
    }
    const double gap = mass - cfg_.weights.target_cost;

    EpochRecord rec;
    rec.epoch = epoch_;
    rec.ce = ce_weighted / static_cast<double>(order.size());
    rec.budget = gap * gap;
    rec.rank = rank;
    rec.mask_mass = mass;
    rec.accuracy = evaluate_accuracy(model_, eff, ds.test_graphs, ds.test_labels);

    const double epoch_loss = total_sum / batches;
    if (epoch_ == 0) {
      lr_.prev_loss = epoch_loss;
      lr_.prev_speed = 0.0;
    } else {
      lr_ = lr_update(lr_, epoch_loss);
    }
    rec.lr = lr_.lr;
    ++epoch_;
    return rec;
  }

  /// Run through cfg.epochs, appending one record per epoch.
  void run(const Dataset& ds, std::vector<EpochRecord>& history) {
    while (epoch_ < cfg_.epochs) history.push_back(run_epoch(ds));
  }

  GcnModel& model() { return model_; }
  const GcnModel& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  int epoch() const { return epoch_; }
  long global_step() const { return global_step_; }
  const LrState& lr_state() const { return lr_; }
  const std::vector<AdamState>& adam_states() const { return adam_; }
  std::string rng_state() const { return rng_.state(); }

  double budget_start_mass() const { return budget_start_mass_; }
  long budget_engage_step() const { return budget_engage_step_; }

  void restore(int epoch, long global_step, const std::string& rng_state, const LrState& lr,
               std::vector<AdamState> adam, double budget_start_mass = -1.0,
               long budget_engage_step = 0) {
    epoch_ = epoch;
    global_step_ = global_step;
    rng_.set_state(rng_state);
    lr_ = lr;
    adam_ = std::move(adam);
    budget_start_mass_ = budget_start_mass;
    budget_engage_step_ = budget_engage_step;
    if (adam_.size() != 3) throw StructureError("restore: expected 3 Adam states");
  }

 private:
  std::vector<const Matrix*> wrapped_masks(const EffectiveWeights& eff) const {
    std::vector<const Matrix*> masks;
    if (model_.attention.prunable) masks.push_back(&eff.attention_stack->psi3);
    if (model_.conv.prunable) masks.push_back(&eff.conv_stack->psi3);
    if (model_.dense.prunable) masks.push_back(&eff.dense_stack->psi3);
    return masks;
  }

  GcnModel model_;
  TrainConfig cfg_;
  Rng rng_;
  LrState lr_;
  std::vector<AdamState> adam_;
  long global_step_ = 0;
  int epoch_ = 0;
  double budget_start_mass_ = -1.0;  // mass when the budget engaged; < 0 until then
  long budget_engage_step_ = 0;
};

/// Hard thresholding of the trained masks: psi3 >= threshold survives. The
/// returned model carries the masked weights as plain tensors; per-tensor
/// binary masks (all-ones for unwrapped tensors) ride along for compaction.
struct FinalizeResult {
  GcnModel model;
  std::vector<Matrix> masks;  // aligned with model.tensors() order
  double soft_mass = 0.0;
  long survivors = 0;
  long prunable_total = 0;
};

inline FinalizeResult finalize_masks(const GcnModel& model, double threshold = 0.5) {
  if (threshold <= 0.0 || threshold >= 1.0) throw ParamError("finalize_masks: threshold must lie in (0,1)");
  FinalizeResult out;
  out.model = model;
  for (ModelTensor* t : out.model.tensors()) {
    Matrix mask(t->layer.latent.rows, t->layer.latent.cols, 1.0);
    if (t->prunable) {
      ComposeResult r = compose(t->layer);
      out.soft_mass += r.stack.psi3.sum();
      out.prunable_total += static_cast<long>(mask.size());
      for (size_t i = 0; i < mask.data.size(); ++i) {
        mask.data[i] = r.stack.psi3.data[i] >= threshold ? 1.0 : 0.0;
        if (mask.data[i] != 0.0) ++out.survivors;
      }
      t->layer.latent = hadamard(t->layer.latent, mask);
      t->prunable = false;
    }
    out.masks.push_back(std::move(mask));
  }
  return out;
}

/// Fraction of prunable entries removed by the hard threshold.
inline double achieved_rate(const FinalizeResult& f) {
  if (f.prunable_total == 0) return 0.0;
  return 1.0 - static_cast<double>(f.survivors) / static_cast<double>(f.prunable_total);
}

}  // namespace semiprune
