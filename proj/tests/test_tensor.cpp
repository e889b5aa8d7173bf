#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "decokan/tensor.hpp"
#include "testutil.hpp"

using namespace decokan;
namespace tu = decokan::testutil;

TEST_CASE("matmul basics") {
  auto eye = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
  auto v = Tensor::from_vector({2, 1}, {3, 4});
  auto r = matmul(eye, v);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.at({0, 0}) == doctest::Approx(3.0));
  CHECK(r.at({1, 0}) == doctest::Approx(4.0));

  auto row = Tensor::from_vector({1, 2}, {1, 2});
  auto col = Tensor::from_vector({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == doctest::Approx(11.0));

  CHECK_THROWS_AS(matmul(Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6}),
                         Tensor::from_vector({2, 2}, {1, 2, 3, 4})),
                  shape_error);
}

TEST_CASE("matmul gradient of sum equals ones x b^T") {
  std::mt19937_64 rng(7);
  auto a = tu::random_tensor({4, 5}, rng);
  auto b = tu::random_tensor({5, 3}, rng, -2, 2, false);
  auto loss = sum_all(matmul(a, b));
  backward(loss);
  // d(sum)/dA[i,l] = sum_j B[l,j]
  for (Dim i = 0; i < 4; ++i)
    for (Dim l = 0; l < 5; ++l) {
      double expect = 0;
      for (Dim j = 0; j < 3; ++j) expect += b.at({l, j});
      CHECK(a.grad()[static_cast<std::size_t>(i * 5 + l)] ==
            doctest::Approx(expect).epsilon(1e-10));
    }

  auto res = tu::grad_check({a}, [&] { return sum_all(matmul(a, b)); });
  CHECK(res.worst_rel <= 1e-4);
}

TEST_CASE("backward on elementwise square") {
  auto w = Tensor::from_vector({2}, {1, 2}, true);
  auto loss = sum_all(mul(w, w));
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  auto w = Tensor::from_vector({2}, {1, 2}, true);
  auto y = mul(w, w);
  CHECK_THROWS_AS(backward(y), contract_error);
}

TEST_CASE("silu values and gradient at zero") {
  auto x = Tensor::from_vector({3}, {0.0, 1.0, -30.0}, true);
  auto y = silu(x);
  CHECK(y.values()[0] == doctest::Approx(0.0));
  CHECK(y.values()[1] == doctest::Approx(0.7310585786300049));
  CHECK(y.values()[2] == doctest::Approx(-30.0 * std::exp(-30.0)).epsilon(1e-6));
  CHECK(std::isfinite(y.values()[2]));

  backward(sum_all(y));
  // d silu/dx at 0 is sigma(0) = 0.5
  CHECK(x.grad()[0] == doctest::Approx(0.5));
}

TEST_CASE("gradients of primitives match finite differences") {
  std::mt19937_64 rng(123);
  auto x = tu::random_tensor({3, 4}, rng);
  auto y = tu::random_tensor({3, 4}, rng);

  SUBCASE("add") {
    auto r = tu::grad_check({x, y}, [&] { return sum_all(square(add(x, y))); });
    CHECK(r.worst_rel <= 1e-4);
  }
  SUBCASE("sub/mul/div") {
    auto yy = tu::random_tensor({3, 4}, rng, 0.5, 2.0);
    auto r = tu::grad_check({x, yy}, [&] {
      return mean_all(square(div(mul(sub(x, yy), x), yy)));
    });
    CHECK(r.worst_rel <= 1e-4);
  }
  SUBCASE("broadcast add and mul") {
    auto b = tu::random_tensor({4}, rng);
    auto r = tu::grad_check({x, b}, [&] { return sum_all(square(add(x, b))); });
    CHECK(r.worst_rel <= 1e-4);
    auto s = tu::random_tensor({3, 1}, rng);
    auto r2 = tu::grad_check({x, s}, [&] { return sum_all(square(mul(x, s))); });
    CHECK(r2.worst_rel <= 1e-4);
  }
  SUBCASE("silu and abs") {
    auto r = tu::grad_check({x}, [&] { return sum_all(square(silu(x))); });
    CHECK(r.worst_rel <= 1e-4);
    auto xa = tu::random_tensor({3, 4}, rng, 0.25, 2.0);
    auto r2 = tu::grad_check({xa}, [&] { return sum_all(square(abs(xa))); });
    CHECK(r2.worst_rel <= 1e-4);
  }
  SUBCASE("linear with bias") {
    auto w = tu::random_tensor({5, 4}, rng);
    auto bias = tu::random_tensor({5}, rng);
    auto r = tu::grad_check(
        {x, w, bias}, [&] { return mean_all(square(linear(x, w, bias))); });
    CHECK(r.worst_rel <= 1e-4);
  }
  SUBCASE("batched matmul") {
    auto a3 = tu::random_tensor({2, 3, 4}, rng);
    auto b3 = tu::random_tensor({2, 4, 2}, rng);
    auto r = tu::grad_check({a3, b3},
                            [&] { return sum_all(square(matmul(a3, b3))); });
    CHECK(r.worst_rel <= 1e-4);
    auto b2 = tu::random_tensor({4, 2}, rng);
    auto r2 = tu::grad_check({a3, b2},
                             [&] { return sum_all(square(matmul(a3, b2))); });
    CHECK(r2.worst_rel <= 1e-4);
  }
  SUBCASE("permute, reshape, patches, pad") {
    auto t = tu::random_tensor({2, 3, 4}, rng);
    auto r = tu::grad_check({t}, [&] {
      return sum_all(square(permute(t, {2, 0, 1})));
    });
    CHECK(r.worst_rel <= 1e-4);
    auto m = tu::random_tensor({2, 9}, rng);
    auto r2 = tu::grad_check({m}, [&] {
      return sum_all(square(gather_patches(pad_tail_replicate(m, 2), 4, 2)));
    });
    CHECK(r2.worst_rel <= 1e-4);
  }
  SUBCASE("normalize_last") {
    auto t = tu::random_tensor({2, 3, 6}, rng);
    auto r = tu::grad_check(
        {t}, [&] { return sum_all(square(normalize_last(t, 1e-5))); });
    CHECK(r.worst_rel <= 1e-4);
  }
}

TEST_CASE("three-op chain matches hand-derived chain rule") {
  auto x = Tensor::from_vector({}, {0.7}, true);
  auto y = Tensor::from_vector({}, {-1.3}, true);
  auto loss = sum_all(square(mul(silu(x), y)));
  backward(loss);

  const double sig = 1.0 / (1.0 + std::exp(-0.7));
  const double s = 0.7 * sig;
  const double ds = sig * (1.0 + 0.7 * (1.0 - sig));
  const double xv = 0.7, yv = -1.3;
  (void)xv;
  const double dx = 2.0 * s * yv * yv * ds;
  const double dy = 2.0 * s * s * yv;
  CHECK(x.grad()[0] == doctest::Approx(dx).epsilon(1e-12));
  CHECK(y.grad()[0] == doctest::Approx(dy).epsilon(1e-12));
}

TEST_CASE("checked mode rejects NaN and Inf at op boundaries") {
  CHECK(checked_mode());
  CHECK_THROWS_AS(Tensor::from_vector({1}, {std::nan("")}), value_error);
  auto zero = Tensor::from_vector({1}, {0.0});
  auto one = Tensor::from_vector({1}, {1.0});
  CHECK_THROWS_AS(div(one, zero), value_error);

  set_checked_mode(false);
  auto inf = div(one, zero);
  CHECK(std::isinf(inf.values()[0]));
  set_checked_mode(true);
}

TEST_CASE("dropout semantics") {
  std::mt19937_64 rng(5);
  auto x = Tensor::full({1000}, 1.0, true);
  SUBCASE("eval mode is identity") {
    auto y = dropout(x, 0.3, false, rng);
    CHECK(y.impl() == x.impl());
  }
  SUBCASE("train mode masks and rescales") {
    auto y = dropout(x, 0.25, true, rng);
    int zeros = 0;
    double mean = 0;
    for (double v : y.values()) {
      if (v == 0.0)
        ++zeros;
      else
        CHECK(v == doctest::Approx(1.0 / 0.75));
      mean += v;
    }
    mean /= 1000.0;
    CHECK(zeros > 150);
    CHECK(zeros < 350);
    CHECK(mean == doctest::Approx(1.0).epsilon(0.1));
  }
  SUBCASE("invalid rate") {
    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), contract_error);
  }
}

TEST_CASE("gradient accumulates across shared uses") {
  auto x = Tensor::from_vector({}, {3.0}, true);
  auto loss = sum_all(mul(x, x));  // same node used twice
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("tape cleared after backward, grads persist") {
  auto x = Tensor::from_vector({2}, {1.0, 2.0}, true);
  auto y = mul(x, x);
  auto loss = sum_all(y);
  backward(loss);
  CHECK(y.impl()->parents.empty());
  CHECK_FALSE(y.impl()->adjoint_rule);
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  x.zero_grad();
  CHECK(x.grad()[1] == 0.0);
}
