#include <doctest.h>

#include <cmath>

#include "fairinv/error.hpp"
#include "fairinv/tensor.hpp"
#include "test_util.hpp"

using namespace fairinv;

TEST_CASE("matmul basics") {
  const DenseMat m = DenseMat::from_rows({{1, 2}, {3, 4}});
  CHECK(matmul(DenseMat::identity(2), m) == m);
  CHECK(matmul(m, DenseMat::from_rows({{0}, {1}})) == DenseMat::from_rows({{2}, {4}}));
  CHECK(matmul(DenseMat(3, 2), m) == DenseMat(3, 2));
  CHECK_THROWS_AS(matmul(m, DenseMat(3, 1)), ShapeError);
}

TEST_CASE("transposed products agree with explicit ones") {
  Rng rng(3);
  const DenseMat a = testutil::random_mat(rng, 4, 3);
  const DenseMat b = testutil::random_mat(rng, 4, 5);
  const DenseMat c = testutil::random_mat(rng, 2, 3);
  const DenseMat tn = matmul_tn(a, b);
  const DenseMat nt = matmul_nt(a, c);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += a(k, i) * b(k, j);
      CHECK(tn(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * c(j, k);
      CHECK(nt(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("matmul_grad") {
  Rng rng(7);
  const DenseMat a = testutil::random_mat(rng, 3, 4);
  const DenseMat b = testutil::random_mat(rng, 4, 2);

  auto zero = matmul_grad(a, b, DenseMat(3, 2));
  CHECK(zero.a == DenseMat(3, 4));
  CHECK(zero.b == DenseMat(4, 2));

  const DenseMat g = testutil::random_mat(rng, 3, 3);
  CHECK(matmul_grad(DenseMat::identity(3), testutil::random_mat(rng, 3, 3), g).b == g);

  // f = Σ G ⊙ (A·B)
  const DenseMat G = testutil::random_mat(rng, 3, 2);
  auto f_a = [&](const DenseMat& x) {
    const DenseMat p = matmul(x, b);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p.data()[i] * G.data()[i];
    return s;
  };
  auto f_b = [&](const DenseMat& x) {
    const DenseMat p = matmul(a, x);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p.data()[i] * G.data()[i];
    return s;
  };
  const auto grads = matmul_grad(a, b, G);
  CHECK(fd_check(f_a, a, grads.a) < 1e-4);
  CHECK(fd_check(f_b, b, grads.b) < 1e-4);
}

TEST_CASE("sigmoid values and gradient") {
  CHECK(sigmoid(0.0) == 0.5);
  const double big = sigmoid(700.0);
  CHECK(std::isfinite(big));
  CHECK(big <= 1.0);
  CHECK(sigmoid(-700.0) >= 0.0);
  CHECK(sigmoid(2.0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));

  Rng rng(11);
  const DenseMat x = testutil::random_mat(rng, 3, 3, 2.0);
  auto f = [](const DenseMat& m) {
    const DenseMat y = sigmoid(m);
    double s = 0;
    for (double v : y.data()) s += v;
    return s;
  };
  const DenseMat g = sigmoid_grad(sigmoid(x), DenseMat(3, 3, 1.0));
  CHECK(fd_check(f, x, g) < 1e-4);
}

TEST_CASE("softmax rows") {
  const DenseMat a = softmax_rows(DenseMat::from_rows({{0, 0}, {1, 0}}));
  CHECK(a(0, 0) == 0.5);
  CHECK(a(0, 1) == 0.5);
  CHECK(a(1, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(a(1, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  for (double c : {-1000.0, 0.0, 3.5, 1000.0}) {
    const DenseMat u = softmax_rows(DenseMat::from_rows({{c, c, c}}));
    for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  Rng rng(5);
  const DenseMat x = testutil::random_mat(rng, 4, 3);
  const DenseMat w = testutil::random_mat(rng, 4, 3);
  auto f = [&](const DenseMat& m) {
    const DenseMat p = softmax_rows(m);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p.data()[i] * w.data()[i];
    return s;
  };
  CHECK(fd_check(f, x, softmax_rows_grad(softmax_rows(x), w)) < 1e-4);
}

TEST_CASE("bce") {
  CHECK(bce(0.0, 1) == doctest::Approx(0.6931471805599453).epsilon(1e-14));
  CHECK(bce(50.0, 1) < 1e-20);
  CHECK(bce(1.0, 0) == doctest::Approx(1.3132616875182228).epsilon(1e-12));
  CHECK(std::isfinite(bce(-800.0, 1)));
  CHECK(bce(-800.0, 1) == doctest::Approx(800.0));
  for (double z : {-3.0, -0.2, 0.0, 0.7, 4.0}) {
    for (int y : {0, 1}) {
      const double h = 1e-6;
      const double fd = (bce(z + h, y) - bce(z - h, y)) / (2 * h);
      CHECK(bce_grad(z, y) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("concat_pairs and its gradient") {
  const std::vector<std::pair<std::size_t, std::size_t>> one{{0, 1}};
  CHECK(concat_pairs(DenseMat::from_rows({{3}, {7}}), one) == DenseMat::from_rows({{3, 7}}));
  CHECK(concat_pairs(DenseMat(3, 2), one) == DenseMat(1, 4));

  const DenseMat h = DenseMat::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::pair<std::size_t, std::size_t>> two{{0, 2}, {1, 2}};
  CHECK(concat_pairs(h, two) == DenseMat::from_rows({{1, 2, 5, 6}, {3, 4, 5, 6}}));

  Rng rng(2);
  const DenseMat w = testutil::random_mat(rng, 2, 4);
  auto f = [&](const DenseMat& m) {
    const DenseMat p = concat_pairs(m, two);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p.data()[i] * w.data()[i];
    return s;
  };
  CHECK(fd_check(f, h, concat_pairs_grad(3, 2, two, w)) < 1e-8);
}

TEST_CASE("fd_check detects wrong gradients") {
  Rng rng(13);
  const DenseMat x = testutil::random_mat(rng, 3, 2);
  const DenseMat c = testutil::random_mat(rng, 3, 2);
  auto linear = [&](const DenseMat& m) {
    double s = 0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * c.data()[i];
    return s;
  };
  CHECK(fd_check(linear, x, c) < 1e-9);

  auto sum_sig = [](const DenseMat& m) {
    const DenseMat y = sigmoid(m);
    double s = 0;
    for (double v : y.data()) s += v;
    return s;
  };
  DenseMat g = sigmoid_grad(sigmoid(x), DenseMat(3, 2, 1.0));
  CHECK(fd_check(sum_sig, x, g) < 1e-4);
  for (double& v : g.data()) v *= 2.0;
  // The denominator is floored at 1 and sigmoid' <= 0.25, so the error equals max |fd|.
  const double err = fd_check(sum_sig, x, g);
  CHECK(err > 0.05);
  CHECK(err <= 0.25 + 1e-9);

  const DenseMat big = testutil::random_mat(rng, 2, 2);
  auto scaled = [](const DenseMat& m) {
    double s = 0;
    for (double v : m.data()) s += 10.0 * v;
    return s;
  };
  CHECK(fd_check(scaled, big, DenseMat(2, 2, 20.0)) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("glorot_init") {
  Rng a(42), b(42);
  const DenseMat m = glorot_init(a, 20, 30);
  CHECK(m == glorot_init(b, 20, 30));
  const double bound = std::sqrt(6.0 / 50.0);
  for (double v : m.data()) CHECK(std::fabs(v) <= bound);

  Rng c(9);
  const DenseMat big = glorot_init(c, 40, 25);  // 1000 draws
  double mean = 0;
  for (double v : big.data()) mean += v;
  mean /= 1000.0;
  const double a65 = std::sqrt(6.0 / 65.0);
  CHECK(std::fabs(mean) < 3.0 * a65 / std::sqrt(3.0 * 1000.0));
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a = Rng::stream(5, 1), b = Rng::stream(5, 1), c = Rng::stream(5, 2);
  bool differ = false;
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differ |= x != c.next_u64();
  }
  CHECK(differ);

  Rng r(1);
  double s = 0, s2 = 0;
  for (int i = 0; i < 20000; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::fabs(s / 20000) < 0.03);
  CHECK(std::fabs(s2 / 20000 - 1.0) < 0.05);
}

TEST_CASE("bias helpers") {
  const DenseMat x = DenseMat::from_rows({{1, 2}, {3, 4}});
  CHECK(add_row_bias(x, DenseMat::from_rows({{10, 20}})) == DenseMat::from_rows({{11, 22}, {13, 24}}));
  CHECK(column_sums(x) == DenseMat::from_rows({{4, 6}}));
  CHECK_FALSE(DenseMat::from_rows({{NAN}}).all_finite());
}
