#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "semiprune/errors.hpp"

namespace semiprune {

/// Dense row-major matrix of doubles. The single value carrier of the library.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
    if (r <= 0 || c <= 0) throw ShapeError("Matrix dimensions must be positive, got " + shape_str(r, c));
  }

  static Matrix zeros(int r, int c) { return Matrix(r, c, 0.0); }
  static Matrix ones(int r, int c) { return Matrix(r, c, 1.0); }
  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> vals) {
    int r = static_cast<int>(vals.size());
    int c = static_cast<int>(vals.begin()->size());
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : vals) {
      if (static_cast<int>(row.size()) != c) throw ShapeError("ragged initializer");
      int j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  size_t size() const { return data.size(); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const { return shape_str(rows, cols); }
  static std::string shape_str(int r, int c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }

  double sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
  }
  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shapes " + a.shape_str() + " and " + b.shape_str() + " differ");
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str());
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
    double* orow = &out.data[static_cast<size_t>(i) * b.cols];
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline void add_in_place(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data) v *= s;
  return out;
}

enum class Axis { rows, cols };

/// axis == cols: 1 x cols column sums; axis == rows: rows x 1 row sums.
inline Matrix reduce(const Matrix& a, Axis axis) {
  if (axis == Axis::cols) {
    Matrix out(1, a.cols);
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < a.cols; ++j) out(0, j) += a(i, j);
    return out;
  }
  Matrix out(a.rows, 1);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(i, 0) += a(i, j);
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace semiprune
