#include <doctest.h>

#include <cmath>
#include <vector>

#include "invtrans/rng.hpp"

using invtrans::Rng;

TEST_CASE("same seed and path reproduce the stream") {
  Rng a = Rng::from_path(42, {1, 2, 3});
  Rng b = Rng::from_path(42, {1, 2, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different paths give different streams") {
  Rng a = Rng::from_path(42, {1, 2});
  Rng b = Rng::from_path(42, {2, 1});
  Rng c = Rng::from_path(43, {1, 2});
  int equal_ab = 0, equal_ac = 0;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u64();
    if (va == b.next_u64()) ++equal_ab;
    if (va == c.next_u64()) ++equal_ac;
  }
  CHECK(equal_ab == 0);
  CHECK(equal_ac == 0);
}

TEST_CASE("uniform01 stays in [0,1) and fills the range") {
  Rng r = Rng::from_path(7, {1});
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("uniform_below is bounded and roughly balanced") {
  Rng r = Rng::from_path(9, {4});
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = r.uniform_below(7);
    REQUIRE(v < 7);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("normal deviates have the right first moments") {
  Rng r = Rng::from_path(11, {0});
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gamma and chi-squared match their means") {
  Rng r = Rng::from_path(13, {0});
  const int n = 100000;
  for (double shape : {0.5, 1.0, 3.7}) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += r.gamma(shape);
    CHECK(sum / n == doctest::Approx(shape).epsilon(0.03));
  }
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += r.chi_squared(5.0);
  CHECK(sum / n == doctest::Approx(5.0).epsilon(0.03));
}

TEST_CASE("student t is symmetric with heavier tails than normal") {
  Rng r = Rng::from_path(17, {0});
  const int n = 200000;
  int positive = 0, beyond3 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.student_t(3.0);
    if (x > 0.0) ++positive;
    if (std::abs(x) > 3.0) ++beyond3;
  }
  CHECK(std::abs(positive - n / 2) < 2000);
  // P(|t_3| > 3) ~ 0.0577 vs ~0.0027 for the normal.
  CHECK(beyond3 > static_cast<int>(0.04 * n));
}

TEST_CASE("invalid arguments are rejected") {
  Rng r = Rng::from_path(1, {1});
  CHECK_THROWS_AS(r.uniform_below(0), invtrans::Error);
  CHECK_THROWS_AS(r.gamma(0.0), invtrans::Error);
  CHECK_THROWS_AS(r.student_t(-1.0), invtrans::Error);
}
