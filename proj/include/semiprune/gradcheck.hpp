#pragma once

#include <cmath>
#include <functional>

#include "semiprune/matrix.hpp"

namespace semiprune {

/// Central-difference gradient of a scalar function of a matrix.
/// O(eps^2) truncation error; the verification oracle for every analytic
/// backward pass in this library.
inline Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               double eps = 1e-5) {
  if (eps <= 0.0) throw ParamError("finite_diff_grad: eps must be positive");
  Matrix grad(x.rows, x.cols);
  Matrix probe = x;
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + eps;
      const double fp = f(probe);
      probe(i, j) = orig - eps;
      const double fm = f(probe);
      probe(i, j) = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("finite_diff_grad: non-finite function value at entry (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
      grad(i, j) = (fp - fm) / (2.0 * eps);
    }
  }
  return grad;
}

/// Relative error between an analytic gradient and its finite-difference
/// estimate: max |a - n| / max(1, |a|, |n|) over entries.
inline double grad_rel_error(const Matrix& analytic, const Matrix& numeric) {
  require_same_shape(analytic, numeric, "grad_rel_error");
  double worst = 0.0;
  for (size_t i = 0; i < analytic.data.size(); ++i) {
    const double a = analytic.data[i];
    const double n = numeric.data[i];
    const double denom = std::max({1.0, std::abs(a), std::abs(n)});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace semiprune
