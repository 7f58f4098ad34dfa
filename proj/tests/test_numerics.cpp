#include "test_support.hpp"

#include <doctest.h>

#include <limits>

using namespace toc3d;
using toc3d::test::random_matrix;
using toc3d::test::random_vector;

TEST_CASE("matmul: identity leaves the operand unchanged") {
  Matrix b(2, 2);
  b << 3, 4, 5, 6;
  CHECK(matmul<double>(Matrix::Identity(2, 2), b) == b);
}

TEST_CASE("matmul: row times column") {
  Matrix a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  const Matrix c = matmul(a, b);
  REQUIRE(c.rows() == 1);
  REQUIRE(c.cols() == 1);
  CHECK(c(0, 0) == 11.0);
}

TEST_CASE("matmul: mismatched shapes name both operands") {
  const Matrix a = Matrix::Zero(2, 3), b = Matrix::Zero(2, 3);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("by 2x3") != std::string::npos);
  }
}

TEST_CASE("matmul: triple-loop oracle") {
  Rng rng(11);
  const Matrix a = random_matrix(rng, 5, 7), b = random_matrix(rng, 7, 3);
  const Matrix c = matmul(a, b);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 7; ++k) acc += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
}

TEST_CASE("matmul: associativity on random chains") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = rng.uniform_int(1, 9), n = rng.uniform_int(1, 9), p = rng.uniform_int(1, 9),
              q = rng.uniform_int(1, 9);
    const Matrix a = random_matrix(rng, m, n), b = random_matrix(rng, n, p), c = random_matrix(rng, p, q);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    CHECK((left - right).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("layer_norm: constant input maps to zeros") {
  Vector x = Vector::Constant(3, 4.25);
  CHECK(layer_norm(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("layer_norm: [1, -1] with vanishing eps") {
  Vector x(2);
  x << 1, -1;
  const Vector y = layer_norm(x, 0.0);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("layer_norm: empty input is rejected") {
  CHECK_THROWS_AS(layer_norm(Vector()), std::invalid_argument);
}

TEST_CASE("layer_norm: output statistics for high-variance inputs") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(2, 300);
    const Vector x = random_vector(rng, n, 50.0) + Vector::Constant(n, rng.normal(0.0, 10.0));
    const Vector y = layer_norm(x);
    const double mean = y.mean();
    const double var = (y.array() - mean).square().mean();
    CHECK(std::abs(mean) <= 1e-10);
    CHECK(std::abs(var - 1.0) <= 1e-6);
  }
}

TEST_CASE("layer_norm_rows: matches the vector form and applies affine") {
  Rng rng(14);
  Matrix x = random_matrix(rng, 4, 6, 3.0);
  const Matrix orig = x;
  const Vector gamma = random_vector(rng, 6), beta = random_vector(rng, 6);
  layer_norm_rows(x, gamma, beta);
  for (int r = 0; r < 4; ++r) {
    const Vector expect = layer_norm(orig.row(r).transpose()).cwiseProduct(gamma) + beta;
    CHECK((x.row(r).transpose() - expect).cwiseAbs().maxCoeff() <= 1e-14);
  }
  Matrix bad = orig;
  CHECK_THROWS_AS(layer_norm_rows(bad, Vector(Vector::Ones(5)), Vector(Vector::Zero(5))), ShapeError);
}

TEST_CASE("sigmoid: symmetry point, saturation, complement identity") {
  CHECK(sigmoid(0.0) == 0.5);
  const double big = sigmoid(50.0);
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sigmoid(-1000.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-1000.0)));
  Rng rng(15);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal(0.0, 10.0);
    CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-12);
  }
}

TEST_CASE("sigmoid: vector form is strictly inside (0, 1) and monotone") {
  Vector x = Vector::LinSpaced(201, -30.0, 30.0);
  const Vector s = sigmoid(x);
  for (int i = 0; i < s.size(); ++i) {
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
    if (i) CHECK(s[i] >= s[i - 1]);
  }
}

TEST_CASE("gelu: exact form and derivative") {
  CHECK(gelu(0.0) == 0.0);
  // 0.5 * x * (1 + erf(x / sqrt 2)) at x = 1, from the erf table value.
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double h = 1e-6;
    CHECK(gelu_grad(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-8));
  }
  Matrix m(1, 3);
  m << -1.0, 0.0, 1.0;
  gelu_inplace(m);
  CHECK(m(0, 2) == doctest::Approx(gelu(1.0)).epsilon(1e-15));
  CHECK(m(0, 0) == doctest::Approx(gelu(-1.0)).epsilon(1e-15));
}

TEST_CASE("rng: identical seeds give identical streams") {
  Rng a(RngState{42}), b(RngState{42}), c(RngState{43});
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal(), y = b.normal(), z = c.normal();
    CHECK(x == y);
    differs |= x != z;
  }
  CHECK(differs);
  CHECK(std::string(RngState::algorithm) == "mt19937_64");
}

TEST_CASE("rng: truncated normal respects two sigma; beta stays in (0, 1)") {
  Rng rng(16);
  double sum = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const double t = rng.truncated_normal(0.02);
    CHECK(std::abs(t) <= 0.04);
    const double b = rng.beta(8.0, 2.0);
    CHECK(b > 0.0);
    CHECK(b < 1.0);
    sum += b;
  }
  CHECK(sum / 5000.0 == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("linear: forward, shape checks, zero bias at init") {
  Rng rng(17);
  LinearLayer l = init_linear(3, 4, rng);
  CHECK(l.bias.isZero());
  CHECK(l.weight.cwiseAbs().maxCoeff() <= 0.04);
  const Matrix x = random_matrix(rng, 2, 4);
  const Matrix y = l.forward(x);
  for (int r = 0; r < 2; ++r) {
    for (int o = 0; o < 3; ++o) CHECK(y(r, o) == doctest::Approx(l.weight.row(o).dot(x.row(r))).epsilon(1e-14));
  }
  CHECK_THROWS_AS(l.forward(random_matrix(rng, 2, 5)), ShapeError);
  l.bias = Vector::Zero(2);
  CHECK_THROWS_AS(l.validate(), ShapeError);
}

TEST_CASE("linear: identical seeds give bit-identical weights") {
  Rng a(5), b(5);
  CHECK(init_linear(8, 8, a).weight == init_linear(8, 8, b).weight);
}

TEST_CASE("all_finite flags NaN and infinity") {
  Matrix m = Matrix::Zero(2, 2);
  CHECK(all_finite(m));
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(m));
  m(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(m));
}
