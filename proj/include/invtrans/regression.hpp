#pragma once

#include "invtrans/types.hpp"

namespace invtrans {

// Residuals pooled over tasks, with the task id of every row kept alongside.
struct ResidualSample {
  Eigen::VectorXd residuals;
  std::vector<int> task_ids;  // same length as residuals
};

// Centered normal-equation pieces of the pooled labeled rows. Computed once
// per design, then any subset is fit by solving on the corresponding
// submatrix, which is what makes exhaustive subset search affordable.
struct PooledGram {
  Eigen::MatrixXd gram;    // p x p, sum (x - x_mean)(x - x_mean)^T
  Eigen::VectorXd xty;     // p, sum (x - x_mean)(y - y_mean)
  Eigen::VectorXd x_mean;  // p
  double y_mean = 0.0;
  Eigen::Index n = 0;
};

PooledGram pooled_gram(const MultiTaskDataset& ds);

// Least squares with intercept on the subset columns, solved from the
// precomputed Gram. Adds a ridge jitter of 1e-10 * trace/|S| once if the
// submatrix is numerically singular, and fails with RankDeficient if it still
// is. An empty subset returns the pooled mean predictor.
LinearPredictor ols_from_gram(const PooledGram& g, const SubsetMask& subset);

// Pooled least squares over all labeled tasks of `ds`, restricted to
// `subset`. Off-subset coefficients are zero by construction.
LinearPredictor fit_pooled_ols(const MultiTaskDataset& ds, const SubsetMask& subset);

// Least squares on the labeled rows of one task only, using all features.
LinearPredictor fit_domain_only(const MultiTaskDataset& ds, int task_id);

// Per-row residuals y - prediction over every task of `ds`, in task order.
// All tasks must be labeled.
ResidualSample residuals(const LinearPredictor& f, const MultiTaskDataset& ds);

// Mean squared residual over the pooled labeled rows.
double empirical_mse(const LinearPredictor& f, const MultiTaskDataset& ds);

// Lasso screening: coordinate descent on standardized features over a
// geometric penalty path from lambda_max down to 1e-4 * lambda_max (100
// steps). Walks the path from the top and returns the active set at the last
// penalty where at most k features are active.
SubsetMask lasso_screen(const MultiTaskDataset& ds, int k);

}  // namespace invtrans
