#include <catch2/catch_amalgamated.hpp>

#include "semiprune/gradcheck.hpp"
#include "semiprune/matrix.hpp"
#include "semiprune/rng.hpp"

using namespace semiprune;

namespace {
Matrix random_matrix(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

// independent oracle: plain ijk triple loop, no skipping
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}
}  // namespace

TEST_CASE("matmul identity") {
  Rng rng(1);
  Matrix x = random_matrix(rng, 3, 5);
  Matrix y = matmul(Matrix::identity(3), x);
  REQUIRE(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("matmul hand example") {
  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix b = Matrix::from_rows({{1}, {1}});
  Matrix c = matmul(a, b);
  REQUIRE(c.rows == 2);
  REQUIRE(c.cols == 1);
  REQUIRE(c(0, 0) == 3.0);
  REQUIRE(c(1, 0) == 7.0);
}

TEST_CASE("matmul matches the naive triple loop") {
  Rng rng(2);
  Matrix a = random_matrix(rng, 5, 4);
  Matrix b = random_matrix(rng, 4, 3);
  REQUIRE(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  Matrix a(2, 3), b(2, 3);
  REQUIRE_THROWS_MATCHES(matmul(a, b), ShapeError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("(2x3)")));
}

TEST_CASE("matmul associativity") {
  Rng rng(3);
  for (int it = 0; it < 10; ++it) {
    Matrix a = random_matrix(rng, 4, 4), b = random_matrix(rng, 4, 4), c = random_matrix(rng, 4, 4);
    REQUIRE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-10);
  }
}

TEST_CASE("reduce examples") {
  Matrix cols = reduce(Matrix::ones(2, 3), Axis::cols);
  REQUIRE(cols.rows == 1);
  REQUIRE(cols.cols == 3);
  for (double v : cols.data) REQUIRE(v == 2.0);

  Matrix rows = reduce(Matrix::zeros(4, 4), Axis::rows);
  REQUIRE(rows.rows == 4);
  REQUIRE(rows.cols == 1);
  for (double v : rows.data) REQUIRE(v == 0.0);

  Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix r = reduce(m, Axis::rows);
  REQUIRE(r(0, 0) == 3.0);
  REQUIRE(r(1, 0) == 7.0);
}

TEST_CASE("reduce transpose duality") {
  Rng rng(4);
  Matrix a = random_matrix(rng, 3, 6);
  Matrix lhs = reduce(transpose(a), Axis::rows);
  Matrix rhs = transpose(reduce(a, Axis::cols));
  REQUIRE(max_abs_diff(lhs, rhs) == 0.0);
}

TEST_CASE("finite_diff_grad of the entry sum is all ones") {
  Rng rng(5);
  Matrix x = random_matrix(rng, 3, 4);
  Matrix g = finite_diff_grad([](const Matrix& m) { return m.sum(); }, x);
  REQUIRE(max_abs_diff(g, Matrix::ones(3, 4)) < 1e-9);
}

TEST_CASE("finite_diff_grad of the squared sum") {
  Matrix x = Matrix::from_rows({{1, 2}});
  Matrix g = finite_diff_grad([](const Matrix& m) { return hadamard(m, m).sum(); }, x);
  REQUIRE(std::abs(g(0, 0) - 2.0) < 1e-6);
  REQUIRE(std::abs(g(0, 1) - 4.0) < 1e-6);
}

TEST_CASE("finite_diff_grad recovers linear coefficients within eps^2") {
  Rng rng(6);
  const double eps = 1e-4;
  Matrix coeff = random_matrix(rng, 4, 3);
  Matrix x = random_matrix(rng, 4, 3);
  Matrix g = finite_diff_grad([&](const Matrix& m) { return hadamard(coeff, m).sum(); }, x, eps);
  REQUIRE(max_abs_diff(g, coeff) < eps * eps);
}

TEST_CASE("finite_diff_grad rejects bad eps and non-finite values") {
  Matrix x(2, 2);
  REQUIRE_THROWS_AS(finite_diff_grad([](const Matrix& m) { return m.sum(); }, x, 0.0), ParamError);
  REQUIRE_THROWS_AS(
      finite_diff_grad([](const Matrix&) { return std::numeric_limits<double>::quiet_NaN(); }, x),
      NumericError);
}
