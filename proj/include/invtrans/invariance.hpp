#pragma once

#include <optional>

#include "invtrans/regression.hpp"

namespace invtrans {

struct KernelConfig {
  // Gaussian kernel width sigma for the residual kernel. Empty selects the
  // median heuristic: sigma^2 = half the median of positive squared pairwise
  // distances, computed on at most 2000 deterministically subsampled points.
  std::optional<double> bandwidth;
};

struct TestOutcome {
  double statistic = 0.0;
  double p_value = 1.0;
  bool accepted = true;
  double level = 0.0;
  // Set when the null model is degenerate (fewer than 6 rows, or residuals
  // without spread); the test then accepts with p = 1 instead of failing.
  bool degenerate_null = false;
};

// Reusable buffers for the kernel columns and their per-task reductions;
// passing one across calls avoids reallocating them for every subset during
// search.
struct HsicWorkspace {
  Eigen::MatrixXd gram;
  Eigen::VectorXd row_sum;
  Eigen::VectorXd scratch;
};

// Biased HSIC statistic between residuals and task labels: the Gaussian
// kernel on residuals is double-centered against the delta kernel on task
// ids, (1/n^2) trace(Kc Lc). Requires n >= 4 rows from >= 2 distinct tasks.
double hsic_statistic(const ResidualSample& sample, const KernelConfig& cfg = {});
double hsic_statistic(const ResidualSample& sample, const KernelConfig& cfg, HsicWorkspace& ws);

// HSIC independence test across tasks with a two-moment Gamma approximation
// of the null distribution of n * statistic. Accepts iff p_value > level.
TestOutcome hsic_d_sample_test(const ResidualSample& sample, const KernelConfig& cfg, double level);
TestOutcome hsic_d_sample_test(const ResidualSample& sample, const KernelConfig& cfg, double level,
                               HsicWorkspace& ws);

// Levene's test for equal residual variance across tasks: one-way ANOVA on
// absolute deviations from the group means, F(D-1, n-D) null. Requires every
// task to contribute >= 2 rows.
TestOutcome levene_test(const ResidualSample& sample, double level);

}  // namespace invtrans
