#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "decokan/wavelet.hpp"
#include "testutil.hpp"

using namespace decokan;
namespace tu = decokan::testutil;

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
}

TEST_CASE("filter bank invariants") {
  for (const char* name : {"db2", "db4"}) {
    auto bank = WaveletFilterBank::make(name);
    const std::size_t f = bank.dec_lo.size();
    CHECK(f == (std::string(name) == "db2" ? 4 : 8));
    double lo = 0, hi = 0;
    for (double v : bank.dec_lo) lo += v;
    for (double v : bank.dec_hi) hi += v;
    CHECK(std::fabs(lo - kSqrt2) <= 1e-12);
    CHECK(std::fabs(hi) <= 1e-12);
    for (std::size_t n = 0; n < f; ++n)
      CHECK(bank.dec_hi[n] ==
            (n % 2 == 0 ? 1.0 : -1.0) * bank.dec_lo[f - 1 - n]);
  }
  CHECK_THROWS_AS(WaveletFilterBank::make("sym5"), config_error);
}

TEST_CASE("coefficient lengths") {
  auto db4 = WaveletFilterBank::make("db4");
  auto db2 = WaveletFilterBank::make("db2");
  CHECK(coefficient_length(96, db4) == 51);
  CHECK(coefficient_length(24, db4) == 15);
  CHECK(coefficient_length(2, db2) == 2);
  CHECK(coefficient_length(512, db4) == 259);
  CHECK(coefficient_length(259, db4) == 133);
}

TEST_CASE("constant series: zero details, exact sqrt2-scaled approx") {
  auto db4 = WaveletFilterBank::make("db4");
  auto x = Tensor::full({1, 32}, 5.0);
  auto set = dwt_multilevel(x, db4, 1);
  CHECK(set.series_count() == 2);
  CHECK(set.approx.shape() == Shape{1, 19});
  for (double v : set.details[0].values()) CHECK(std::fabs(v) <= 1e-10);
  for (double v : set.approx.values())
    CHECK(v == doctest::Approx(5.0 * kSqrt2).epsilon(1e-13));
}

TEST_CASE("multilevel lengths for 512 db4") {
  auto db4 = WaveletFilterBank::make("db4");
  std::mt19937_64 rng(1);
  auto x = tu::random_tensor({2, 512}, rng, -1, 1, false);
  auto set = dwt_multilevel(x, db4, 2);
  CHECK(set.approx.dim(1) == 133);
  CHECK(set.details[0].dim(1) == 133);  // D_2, coarse first
  CHECK(set.details[1].dim(1) == 259);  // D_1
}

TEST_CASE("perfect reconstruction across lengths, levels, banks") {
  std::mt19937_64 rng(42);
  for (const char* name : {"db2", "db4"}) {
    auto bank = WaveletFilterBank::make(name);
    for (Dim L : {Dim(17), Dim(96), Dim(512)}) {
      for (Dim m : {Dim(1), Dim(2), Dim(3)}) {
        auto x = tu::random_tensor({3, L}, rng, -5, 5, false);
        auto set = dwt_multilevel(x, bank, m);
        auto rec = idwt_multilevel(set, bank, L);
        REQUIRE(rec.shape() == x.shape());
        CHECK(tu::max_abs_diff(rec.values(), x.values()) <= 1e-10);
      }
    }
  }
}

TEST_CASE("zero coefficients reconstruct to zero; operator is linear") {
  auto db4 = WaveletFilterBank::make("db4");
  std::mt19937_64 rng(3);
  auto x1 = tu::random_tensor({2, 64}, rng, -1, 1, false);
  auto x2 = tu::random_tensor({2, 64}, rng, -1, 1, false);

  auto s1 = dwt_multilevel(x1, db4, 2);
  auto s2 = dwt_multilevel(x2, db4, 2);

  CoefficientSet zero;
  zero.level = s1.level;
  zero.approx = Tensor::zeros(s1.approx.shape());
  for (const auto& d : s1.details) zero.details.push_back(Tensor::zeros(d.shape()));
  auto rec0 = idwt_multilevel(zero, db4, 64);
  for (double v : rec0.values()) CHECK(v == 0.0);

  const double a = 2.5, b = -1.25;
  CoefficientSet mix;
  mix.level = s1.level;
  mix.approx = add(mul_scalar(s1.approx, a), mul_scalar(s2.approx, b));
  for (std::size_t i = 0; i < s1.details.size(); ++i)
    mix.details.push_back(
        add(mul_scalar(s1.details[i], a), mul_scalar(s2.details[i], b)));
  auto lhs = idwt_multilevel(mix, db4, 64);
  auto r1 = idwt_multilevel(s1, db4, 64);
  auto r2 = idwt_multilevel(s2, db4, 64);
  auto rhs = add(mul_scalar(r1, a), mul_scalar(r2, b));
  CHECK(tu::max_abs_diff(lhs.values(), rhs.values()) <= 1e-10);
}

TEST_CASE("db4 vanishing moments: cubic polynomial details vanish inside") {
  auto db4 = WaveletFilterBank::make("db4");
  const Dim L = 128;
  const Dim F = db4.filter_length();
  for (int degree = 0; degree <= 3; ++degree) {
    std::vector<double> vals(static_cast<std::size_t>(L));
    for (Dim t = 0; t < L; ++t) {
      const double u = static_cast<double>(t) / static_cast<double>(L);
      vals[static_cast<std::size_t>(t)] = std::pow(2.0 * u - 1.0, degree);
    }
    auto x = Tensor::from_vector({1, L}, std::move(vals));
    auto set = dwt_multilevel(x, db4, 2);
    // level 1 (finest detail): coefficients untouched by boundary reflection
    const auto& d1 = set.details[1];
    for (Dim k = F / 2; k <= (L - 2) / 2; ++k)
      CHECK(std::fabs(d1.at({0, k})) <= 1e-8);
    // level 2: wider margin for cascaded boundary contamination
    const auto& d2 = set.details[0];
    const Dim L2 = d2.dim(1);
    for (Dim k = F; k < L2 - F; ++k) CHECK(std::fabs(d2.at({0, k})) <= 1e-8);
  }
}

TEST_CASE("dwt and idwt adjoints pass finite differences") {
  auto db4 = WaveletFilterBank::make("db4");
  std::mt19937_64 rng(11);
  auto x = tu::random_tensor({2, 21}, rng);
  auto r = tu::grad_check({x}, [&] {
    auto set = dwt_multilevel(x, db4, 2);
    auto rec = idwt_multilevel(set, db4, 21);
    Tensor acc = sum_all(square(rec));
    acc = add(acc, sum_all(square(set.approx)));
    for (const auto& d : set.details) acc = add(acc, sum_all(square(d)));
    return acc;
  });
  CHECK(r.worst_rel <= 1e-4);
}

TEST_CASE("error paths") {
  auto db4 = WaveletFilterBank::make("db4");
  std::mt19937_64 rng(2);
  // 20 -> 13 -> 10 -> 8 stays >= 8, but starting at 7 fails immediately.
  auto tiny = tu::random_tensor({1, 7}, rng, -1, 1, false);
  CHECK_THROWS_AS(dwt_multilevel(tiny, db4, 1), shape_error);

  auto x = tu::random_tensor({1, 40}, rng, -1, 1, false);
  auto set = dwt_multilevel(x, db4, 1);
  CoefficientSet broken = set;
  broken.details[0] = Tensor::zeros({1, set.details[0].dim(1) + 3});
  CHECK_THROWS_AS(idwt_multilevel(broken, db4, 40), shape_error);
  CHECK_THROWS_AS(idwt_multilevel(set, db4, 7), shape_error);
}
