#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "invtrans/invariance.hpp"
#include "invtrans/rng.hpp"
#include "test_util.hpp"

using namespace invtrans;

namespace {

ResidualSample random_sample(int groups, Eigen::Index per_group, std::uint64_t seed,
                             double group_shift = 0.0) {
  ResidualSample s;
  s.residuals.resize(groups * per_group);
  Rng rng = Rng::from_path(seed, {0});
  Eigen::Index at = 0;
  for (int g = 1; g <= groups; ++g)
    for (Eigen::Index i = 0; i < per_group; ++i, ++at) {
      s.residuals[at] = rng.normal() + group_shift * static_cast<double>(g - 1);
      s.task_ids.push_back(g);
    }
  return s;
}

// Deterministic interleave so group labels are not sorted on input.
ResidualSample shuffled(const ResidualSample& s, std::uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(s.residuals.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng::from_path(seed, {1});
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_below(i))]);
  ResidualSample out;
  out.residuals.resize(s.residuals.size());
  out.task_ids.resize(s.task_ids.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.residuals[static_cast<Eigen::Index>(i)] = s.residuals[perm[i]];
    out.task_ids[i] = s.task_ids[static_cast<std::size_t>(perm[i])];
  }
  return out;
}

}  // namespace

TEST_CASE("trace-form HSIC equals the double-sum oracle") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    const ResidualSample s = shuffled(random_sample(3, 20, seed, 0.8), seed);
    for (double bw : {0.7, 1.0, 1.7}) {  // kernel width, sigma2 = bw^2
      KernelConfig cfg;
      cfg.bandwidth = bw;
      const double got = hsic_statistic(s, cfg);
      const double want = testutil::oracle_hsic(s.residuals, s.task_ids, bw * bw);
      CHECK(std::abs(got - want) < 1e-12);
    }
  }
}

TEST_CASE("HSIC is invariant to row order and workspace reuse") {
  const ResidualSample s = random_sample(4, 15, 9, 0.5);
  KernelConfig cfg;
  cfg.bandwidth = 1.0;
  const double base = hsic_statistic(s, cfg);
  CHECK(hsic_statistic(shuffled(s, 3), cfg) == doctest::Approx(base).epsilon(1e-13));

  HsicWorkspace ws;
  CHECK(hsic_statistic(s, cfg, ws) == base);
  CHECK(hsic_statistic(shuffled(s, 4), cfg, ws) == doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("median-heuristic bandwidth is deterministic") {
  const ResidualSample s = random_sample(3, 30, 12);
  const double a = hsic_statistic(s);
  const double b = hsic_statistic(s);
  CHECK(a == b);
  CHECK(a > 0.0);
}

TEST_CASE("HSIC test separates null from mean-shifted alternatives") {
  const ResidualSample null_sample = random_sample(3, 60, 100);
  const TestOutcome null_out = hsic_d_sample_test(null_sample, {}, 0.05);
  CHECK(!null_out.degenerate_null);
  CHECK(null_out.p_value > 0.01);

  const ResidualSample alt = random_sample(3, 60, 100, 1.5);
  const TestOutcome alt_out = hsic_d_sample_test(alt, {}, 0.05);
  CHECK(alt_out.p_value < 1e-4);
  CHECK(!alt_out.accepted);
  CHECK(alt_out.statistic > null_out.statistic);
}

TEST_CASE("gamma approximation agrees with a permutation null") {
  // Mild dependence so the p-value is away from both 0 and 1.
  ResidualSample s = random_sample(3, 40, 7, 0.35);
  KernelConfig cfg;
  cfg.bandwidth = 1.0;
  const TestOutcome out = hsic_d_sample_test(s, cfg, 0.05);
  REQUIRE(out.p_value > 0.001);
  REQUIRE(out.p_value < 0.999);

  const double observed = hsic_statistic(s, cfg);
  Rng rng = Rng::from_path(99, {0});
  const int b = 400;
  int ge = 0;
  ResidualSample perm = s;
  for (int rep = 0; rep < b; ++rep) {
    for (std::size_t i = perm.task_ids.size(); i > 1; --i)
      std::swap(perm.task_ids[i - 1], perm.task_ids[static_cast<std::size_t>(rng.uniform_below(i))]);
    if (hsic_statistic(perm, cfg) >= observed) ++ge;
  }
  const double p_perm = (1.0 + ge) / (1.0 + b);
  CHECK(std::abs(out.p_value - p_perm) < 0.15);
}

TEST_CASE("degenerate nulls accept with p = 1") {
  ResidualSample tiny;
  tiny.residuals = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  tiny.task_ids = {1, 1, 1, 2, 2};
  const TestOutcome out = hsic_d_sample_test(tiny, {}, 0.05);
  CHECK(out.degenerate_null);
  CHECK(out.accepted);
  CHECK(out.p_value == 1.0);

  ResidualSample flat;
  flat.residuals = Eigen::VectorXd::Zero(20);
  flat.task_ids.assign(20, 1);
  for (std::size_t i = 0; i < 10; ++i) flat.task_ids[i] = 2;
  const TestOutcome flat_out = hsic_d_sample_test(flat, {}, 0.05);
  CHECK(flat_out.degenerate_null);
  CHECK(flat_out.accepted);
}

TEST_CASE("invalid inputs are rejected with specific codes") {
  auto code_of = [](auto&& fn) -> Errc {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    FAIL("expected a throw");
    return Errc::ParseError;
  };

  ResidualSample s = random_sample(2, 10, 1);
  ResidualSample bad = s;
  bad.task_ids.pop_back();
  CHECK(code_of([&] { hsic_statistic(bad); }) == Errc::DimensionMismatch);

  ResidualSample one_group = s;
  std::fill(one_group.task_ids.begin(), one_group.task_ids.end(), 1);
  CHECK(code_of([&] { hsic_statistic(one_group); }) == Errc::SingleTask);

  KernelConfig zero_bw;
  zero_bw.bandwidth = 0.0;
  CHECK(code_of([&] { hsic_statistic(s, zero_bw); }) == Errc::InvalidBandwidth);

  ResidualSample nan_sample = s;
  nan_sample.residuals[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { hsic_statistic(nan_sample); }) == Errc::NonFiniteValue);

  ResidualSample two;
  two.residuals = Eigen::Vector2d(0.0, 1.0);
  two.task_ids = {1, 2};
  CHECK(code_of([&] { hsic_statistic(two); }) == Errc::TooFewSamples);
}

TEST_CASE("Levene matches reference values") {
  // Reference W and p computed with an independent statistics package
  // (one-way, centered at group means).
  ResidualSample s;
  s.residuals.resize(15);
  s.residuals << 0.5, -1.2, 0.3, 2.1, -0.7, 1.5, 2.2, -3.1, 0.9, -1.8, 0.4, 0.1, -0.2, 0.05, 0.3;
  s.task_ids = {1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3};
  const TestOutcome out = levene_test(s, 0.05);
  CHECK(out.statistic == doctest::Approx(4.7257044499462255).epsilon(1e-10));
  CHECK(out.p_value == doctest::Approx(0.030644500600844282).epsilon(1e-9));
  CHECK(!out.accepted);

  ResidualSample s2;
  s2.residuals.resize(9);
  s2.residuals << 1.0, -1.0, 0.5, -0.5, 0.8, -0.9, 0.6, -0.4, 0.1;
  s2.task_ids = {1, 1, 1, 1, 2, 2, 2, 2, 2};
  const TestOutcome out2 = levene_test(s2, 0.05);
  CHECK(out2.statistic == doctest::Approx(0.8730958653075245).epsilon(1e-10));
  CHECK(out2.p_value == doctest::Approx(0.3812029392873965).epsilon(1e-9));
  CHECK(out2.accepted);
}

TEST_CASE("Levene edge cases: zero denominators and tiny groups") {
  ResidualSample both_flat;
  both_flat.residuals = Eigen::VectorXd(4);
  both_flat.residuals << 1.0, 1.0, 2.0, 2.0;
  both_flat.task_ids = {1, 1, 2, 2};
  const TestOutcome a = levene_test(both_flat, 0.05);
  CHECK(a.p_value == 1.0);
  CHECK(a.accepted);

  ResidualSample spread_one;
  spread_one.residuals = Eigen::VectorXd(4);
  spread_one.residuals << 0.0, 2.0, 0.0, 0.0;
  spread_one.task_ids = {1, 1, 2, 2};
  const TestOutcome b = levene_test(spread_one, 0.05);
  CHECK(b.p_value == 0.0);
  CHECK(!b.accepted);

  ResidualSample tiny;
  tiny.residuals = Eigen::Vector3d(1.0, 2.0, 3.0);
  tiny.task_ids = {1, 1, 2};
  CHECK_THROWS_AS(levene_test(tiny, 0.05), Error);
}

TEST_CASE("Levene flags variance differences") {
  Rng rng = Rng::from_path(55, {0});
  ResidualSample s;
  s.residuals.resize(300);
  for (int i = 0; i < 150; ++i) {
    s.residuals[i] = rng.normal();
    s.task_ids.push_back(1);
  }
  for (int i = 150; i < 300; ++i) {
    s.residuals[i] = 3.0 * rng.normal();
    s.task_ids.push_back(2);
  }
  const TestOutcome out = levene_test(s, 0.05);
  CHECK(out.p_value < 1e-6);
  CHECK(!out.accepted);
}
