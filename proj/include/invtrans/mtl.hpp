#pragma once

#include <optional>
#include <utility>

#include "invtrans/types.hpp"

namespace invtrans {

// Joint Gaussian model over (X_S, X_N, Y) in that variable order, where S is
// the invariant subset and N its complement. Training rows are treated as
// observing (X_S, Y) only: their X_N columns come from shifted distributions
// and are deliberately ignored, which is what the missing-data formulation
// expresses.
struct CovarianceModel {
  SubsetMask subset;
  int p = 0;
  Eigen::VectorXd mean;                // p + 1
  Eigen::MatrixXd sigma;               // (p+1) x (p+1)
  std::vector<int> model_to_feature;   // model X position -> 0-based feature column
  std::vector<double> loglik_trace;    // filled by em_fit
};

// One missingness pattern: the observed coordinate list (model order) and the
// rows restricted to those coordinates.
struct PatternGroup {
  std::vector<int> observed;  // ascending, values in [0, p]
  Eigen::MatrixXd rows;       // n_g x observed.size()
};

struct EmData {
  int p = 0;
  std::vector<PatternGroup> groups;

  Eigen::Index rows() const {
    Eigen::Index n = 0;
    for (const auto& g : groups) n += g.rows.rows();
    return n;
  }
};

// Assembles the pattern groups for the EM problem: training-task labeled rows
// observe (X_S, Y), labeled test rows observe everything, and unlabeled test
// rows observe all of X when use_unlabeled is set.
EmData build_em_data(const MultiTaskDataset& ds, const SubsetMask& subset, int test_task_id,
                     bool use_unlabeled);

// Observed-data log-likelihood: every row contributes the log density of its
// observed marginal.
double observed_loglik(const CovarianceModel& model, const EmData& data);

// One EM update of (mean, sigma): missing coordinates are replaced by their
// conditional means and the conditional covariance enters the scatter.
CovarianceModel em_step(const CovarianceModel& model, const EmData& data);

struct EmOptions {
  double tol = 1e-8;   // relative log-likelihood change
  int max_iter = 500;
  bool use_unlabeled = false;
};

struct EmFit {
  CovarianceModel model;
  LinearPredictor predictor;
  int iterations = 0;
  bool converged = false;
};

// Fits the joint Gaussian by EM, initialized from the labeled test-task
// sample moments (ridged when that sample is small), then reads the regression
// coefficients of Y on X off the final covariance.
EmFit em_fit(const MultiTaskDataset& ds, const SubsetMask& subset, int test_task_id,
             const EmOptions& opts = {});

// Regression of Y on all of X implied by the joint covariance; coefficients
// are returned in original feature order.
LinearPredictor coefficients_from_covariance(const CovarianceModel& model);

struct NaivePluginOptions {
  bool use_unlabeled = true;
  // Population quantities for the infinite-data variant; sample moments are
  // used where these are absent. known_sigma_x is in original feature order.
  std::optional<Eigen::MatrixXd> known_sigma_x;
  std::optional<double> known_var_y;
  std::optional<Eigen::VectorXd> known_cov_xs_y;
  int max_evals = 2000;
};

// Test-task-only estimator that pins the causal pieces of the covariance:
// Cov(X_S, Y) := Sigma_(X_S) alpha and Var(Y) := alpha^T Sigma_(X_S) alpha +
// eps_var, with Cov(X_N, Y) free. The free block is started at a feasible
// point (shrunk toward the Schur-feasible center if needed) and optimized by
// Nelder-Mead on the observed-data likelihood of the test rows.
LinearPredictor naive_plugin_fit(const MultiTaskDataset& ds, const SubsetMask& subset,
                                 int test_task_id, const Eigen::VectorXd& alpha, double eps_var,
                                 const NaivePluginOptions& opts = {});

// Population minimizer of the test error given the causal model (alpha,
// eps_var), the couplings gamma = Cov(X_N, Y) / Var(Y) decomposition X_N =
// gamma Y + eta, Sigma_N = Cov(eta), Sigma_XS = Cov(X_S) and Sigma_XN =
// Cov(X_S, eta). Returns (beta on S, beta on N).
std::pair<Eigen::VectorXd, Eigen::VectorXd> analytic_beta_opt(
    const Eigen::VectorXd& alpha, double eps_var, const Eigen::VectorXd& gamma,
    const Eigen::MatrixXd& sigma_n, const Eigen::MatrixXd& sigma_xs, const Eigen::MatrixXd& sigma_xn);

}  // namespace invtrans
