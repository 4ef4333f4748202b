#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "semiprune/gcn.hpp"
#include "semiprune/gradcheck.hpp"
#include "semiprune/mask.hpp"
#include "semiprune/objectives.hpp"
#include "semiprune/rng.hpp"

namespace semiprune {

struct GradCheckReport {
  int checks = 0;
  int failures = 0;
  std::vector<std::string> messages;

  void record(bool ok, const std::string& what, double err, double tol) {
    ++checks;
    if (!ok) {
      ++failures;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: rel err %.3e (tol %.1e)", what.c_str(), err, tol);
      messages.push_back(buf);
    }
  }
  bool ok() const { return failures == 0; }
};

namespace detail {

inline Matrix random_matrix(Rng& rng, int rows, int cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

inline LatentLayer random_layer(Rng& rng, int max_dim, double sigma, HeadSet heads) {
  const int rows = 1 + static_cast<int>(rng.below(max_dim));
  const int cols = 1 + static_cast<int>(rng.below(max_dim));
  LatentLayer layer;
  layer.latent = random_matrix(rng, rows, cols, -1.5, 1.5);
  const int rg = 1 + static_cast<int>(rng.below(rows));
  const int cg = 1 + static_cast<int>(rng.below(cols));
  layer.scheme = GroupScheme::contiguous(rows, cols, rg, cg);
  layer.sigma = sigma;
  layer.heads = heads;
  return layer;
}

}  // namespace detail

/// Band-stop derivative, full mask cascade backward (product rule included),
/// objective gradients and the end-to-end network backward, all against
/// central finite differences.
inline GradCheckReport run_gradcheck_suite(uint64_t seed, double tol = 1e-4, int mask_checks = 20) {
  GradCheckReport rep;
  Rng rng(seed);
  const double sigmas[3] = {1.0, 5.0, 25.0};

  // band-stop diagonal Jacobian
  for (int it = 0; it < 5; ++it) {
    const double sigma = sigmas[it % 3];
    Matrix x = detail::random_matrix(rng, 3, 3, -2.0, 2.0);
    Matrix analytic = band_stop_diag_jacobian(x, sigma);
    Matrix numeric = finite_diff_grad([&](const Matrix& m) { return band_stop(m, sigma).sum(); }, x);
    const double err = grad_rel_error(analytic, numeric);
    rep.record(err <= 1e-5, "band_stop jacobian sigma=" + std::to_string(sigma), err, 1e-5);
  }

  // full cascade backward under a linear probe and the squared-weights loss
  for (int it = 0; it < mask_checks; ++it) {
    const double sigma = sigmas[it % 3];
    LatentLayer layer = detail::random_layer(rng, 8, sigma, HeadSet::all());
    ComposeResult cr = compose(layer);
    Matrix probe = detail::random_matrix(rng, layer.latent.rows, layer.latent.cols, -1.0, 1.0);

    Matrix analytic = mask_backward(layer, cr.stack, probe);
    Matrix numeric = finite_diff_grad(
        [&](const Matrix& m) {
          LatentLayer l = layer;
          l.latent = m;
          return hadamard(compose(l).weights, probe).sum();
        },
        layer.latent);
    double err = grad_rel_error(analytic, numeric);
    rep.record(err <= tol, "mask backward (linear probe) sigma=" + std::to_string(sigma), err, tol);

    Matrix grad_w = scale(cr.weights, 2.0);
    analytic = mask_backward(layer, cr.stack, grad_w);
    numeric = finite_diff_grad(
        [&](const Matrix& m) {
          LatentLayer l = layer;
          l.latent = m;
          Matrix w = compose(l).weights;
          return hadamard(w, w).sum();
        },
        layer.latent);
    err = grad_rel_error(analytic, numeric);
    rep.record(err <= tol, "mask backward (squared loss) sigma=" + std::to_string(sigma), err, tol);
  }

  // restricted head modes
  for (HeadSet hs : {HeadSet::entry_only(), HeadSet::block_only(), HeadSet::parse("rc")}) {
    LatentLayer layer = detail::random_layer(rng, 6, 5.0, hs);
    ComposeResult cr = compose(layer);
    Matrix probe = detail::random_matrix(rng, layer.latent.rows, layer.latent.cols, -1.0, 1.0);
    Matrix analytic = mask_backward(layer, cr.stack, probe);
    Matrix numeric = finite_diff_grad(
        [&](const Matrix& m) {
          LatentLayer l = layer;
          l.latent = m;
          return hadamard(compose(l).weights, probe).sum();
        },
        layer.latent);
    const double err = grad_rel_error(analytic, numeric);
    rep.record(err <= tol, "mask backward heads=" + hs.str(), err, tol);
  }

  // cross entropy
  {
    Matrix logits = detail::random_matrix(rng, 3, 5, -2.0, 2.0);
    std::vector<int> labels = {1, 4, 0};
    Matrix analytic = cross_entropy(logits, labels).grad;
    Matrix numeric = finite_diff_grad(
        [&](const Matrix& m) { return cross_entropy(m, labels).loss; }, logits, 1e-6);
    const double err = grad_rel_error(analytic, numeric);
    rep.record(err <= 1e-6, "cross_entropy grad", err, 1e-6);
  }

  // budget loss over two masks
  {
    Matrix m1 = detail::random_matrix(rng, 3, 4, 0.0, 1.0);
    Matrix m2 = detail::random_matrix(rng, 2, 5, 0.0, 1.0);
    const double c = 7.5;
    ScalarAndGrads analytic = budget_loss({&m1, &m2}, c);
    Matrix numeric = finite_diff_grad(
        [&](const Matrix& m) { return budget_loss({&m, &m2}, c).loss; }, m1, 1e-6);
    const double err = grad_rel_error(analytic.grads[0], numeric);
    rep.record(err <= 1e-6, "budget_loss grad", err, 1e-6);
  }

  // surrogate rank
  for (double gamma : {0.5, 2.0}) {
    Matrix m = detail::random_matrix(rng, 4, 3, 0.0, 1.0);
    ScalarAndGrad analytic = surrogate_rank(m, gamma);
    Matrix numeric =
        finite_diff_grad([&](const Matrix& x) { return surrogate_rank(x, gamma).loss; }, m, 1e-6);
    const double err = grad_rel_error(analytic.grad, numeric);
    rep.record(err <= 1e-6, "surrogate_rank grad gamma=" + std::to_string(gamma), err, 1e-6);
  }

  // whole network: d(sum logits)/d(every latent tensor) on a tiny wrapped model
  for (int it = 0; it < 3; ++it) {
    const int n = 4, s = 6, K = 2, C = 3, classes = 2;
    Rng mr(seed + 100 + it);
    ModelInit init;
    init.latent_scale = 0.8;
    init.sigma0 = sigmas[it % 3];
    GcnModel model = make_model(K, n, s, C, classes, Matrix::identity(n), init, mr);
    TrajectoryGraph g;
    g.nodes = n;
    g.signal = detail::random_matrix(mr, s, n, -1.0, 1.0);
    g.adjacency = Matrix::identity(n);

    EffectiveWeights eff = materialize(model);
    GcnGrads acc = make_zero_grads(model);
    ForwardResult fr = gcn_forward(model, eff, g);
    gcn_backward_accumulate(model, eff, fr.cache, Matrix::ones(1, classes), acc);
    LatentGrads lg = route_through_masks(model, eff, acc);

    auto loss_with = [&](const Matrix& v, int which) {
      GcnModel m2 = model;
      m2.tensors()[which]->layer.latent = v;
      return gcn_forward(m2, g).logits.sum();
    };
    const Matrix* analytic[3] = {&lg.attention, &lg.conv, &lg.dense};
    const char* names[3] = {"attention", "conv", "dense"};
    for (int w = 0; w < 3; ++w) {
      Matrix numeric = finite_diff_grad(
          [&](const Matrix& v) { return loss_with(v, w); }, model.tensors()[w]->layer.latent, 1e-5);
      const double err = grad_rel_error(*analytic[w], numeric);
      rep.record(err <= tol, std::string("gcn backward ") + names[w], err, tol);
    }
  }

  return rep;
}

}  // namespace semiprune
