#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lak/matrix.hpp"
#include "lak/rng.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace lak;
using namespace lak::testing;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lim = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-lim, lim);
  return m;
}

}  // namespace

TEST_CASE("matrix products agree with the naive triple loop", "[matrix]") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = 1 + rng.below(5), k = 1 + rng.below(5), c = 1 + rng.below(5);
    const Matrix a = random_matrix(rng, r, k);
    const Matrix b = random_matrix(rng, k, c);
    const Matrix prod = matmul(a, b);
    const Matrix ref = naive_matmul(a, b);
    REQUIRE(prod.rows() == r);
    REQUIRE(prod.cols() == c);
    for (std::size_t i = 0; i < prod.size(); ++i)
      REQUIRE(prod.values()[i] == Catch::Approx(ref.values()[i]).margin(1e-12));

    // The transpose-fused variants must match explicit transposition.
    const Matrix bt = transpose(b);
    const Matrix nt = matmul_nt(a, bt);
    for (std::size_t i = 0; i < nt.size(); ++i)
      REQUIRE(nt.values()[i] == Catch::Approx(ref.values()[i]).margin(1e-12));
    const Matrix at = transpose(a);
    const Matrix tn = matmul_tn(at, b);
    for (std::size_t i = 0; i < tn.size(); ++i)
      REQUIRE(tn.values()[i] == Catch::Approx(ref.values()[i]).margin(1e-12));
  }
}

TEST_CASE("shape violations are rejected", "[matrix]") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(matmul_nt(Matrix(2, 3), Matrix(4, 2)), std::invalid_argument);
  CHECK_THROWS_AS(matmul_tn(Matrix(3, 2), Matrix(2, 4)), std::invalid_argument);
  CHECK_THROWS_AS(matvec(Matrix(2, 3), Vec{1.0}), std::invalid_argument);
  Matrix a(2, 2);
  CHECK_THROWS_AS(a += Matrix(3, 2), std::invalid_argument);
}

TEST_CASE("matrix-vector products and dot products", "[matrix]") {
  const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  const Vec x = {1, 0, -1};
  const Vec y = matvec(a, x);
  CHECK(y[0] == -2.0);
  CHECK(y[1] == -2.0);
  const Vec z = matvec_t(a, {1, 1});
  CHECK(z[0] == 5.0);
  CHECK(z[1] == 7.0);
  CHECK(z[2] == 9.0);
  CHECK(dot({1, 2}, {3, 4}) == 11.0);
  CHECK(euclidean_distance({0, 0}, {3, 4}) == Catch::Approx(5.0));
}

TEST_CASE("row softmax produces distributions and is shift invariant", "[matrix]") {
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = random_matrix(rng, 1 + rng.below(4), 2 + rng.below(5), 30.0);
    Matrix shifted = m;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const double c = rng.uniform(-100, 100);
      for (std::size_t j = 0; j < m.cols(); ++j) shifted(r, j) += c;
    }
    row_softmax(m);
    row_softmax(shifted);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        REQUIRE(m(r, j) > 0.0);
        sum += m(r, j);
        REQUIRE(m(r, j) == Catch::Approx(shifted(r, j)).margin(1e-9));
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    }
  }
}

TEST_CASE("softmax backward matches finite differences", "[matrix]") {
  Rng rng(107);
  Matrix x = random_matrix(rng, 2, 4, 2.0);
  const Matrix w = random_matrix(rng, 2, 4);  // fixed downstream weights
  const auto loss = [&]() {
    Matrix s = x;
    row_softmax(s);
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) total += s.values()[i] * w.values()[i];
    return total;
  };
  Matrix s = x;
  row_softmax(s);
  const Matrix dx = row_softmax_backward(s, w);
  const auto result = finite_difference_check({&x}, {&dx}, loss);
  CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("column masking replaces only invalid columns", "[matrix]") {
  Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  mask_columns(m, {1, 0, 1}, -9.0);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 1) == -9.0);
  CHECK(m(1, 1) == -9.0);
  CHECK(m(1, 2) == 6.0);
  CHECK_THROWS_AS(mask_columns(m, {1, 0}, 0.0), std::invalid_argument);
}

TEST_CASE("sigmoid is stable at extremes", "[matrix]") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1.0) == Catch::Approx(0.7310585786).margin(1e-9));
  CHECK(sigmoid(-1.0) == Catch::Approx(1.0 - 0.7310585786).margin(1e-9));
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == Catch::Approx(0.0).margin(1e-300));
  CHECK(std::isfinite(sigmoid(-800.0)));
}

TEST_CASE("transpose and identity behave", "[matrix]") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const Matrix t = transpose(a);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(0, 2) == 5.0);
  CHECK(transpose(t) == a);
  const Matrix i3 = Matrix::identity(3);
  CHECK(matmul(i3, a) == a);
}

TEST_CASE("finiteness check catches bad entries", "[matrix]") {
  Matrix m(2, 2, 1.0);
  CHECK(m.all_finite());
  m(1, 1) = std::numeric_limits<double>::infinity();
  CHECK(!m.all_finite());
}
