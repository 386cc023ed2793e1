#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "invtrans/rng.hpp"
#include "invtrans/types.hpp"

namespace invtrans {

enum class GammaDistKind { StudentT, Uniform, Normal };

// Law of the per-task coupling coefficient gamma^k.
struct GammaDist {
  GammaDistKind kind = GammaDistKind::StudentT;
  double a = 3.0;  // student_t: degrees of freedom; uniform: lower; normal: mean
  double b = 0.0;  // uniform: upper; normal: variance

  double draw(Rng& rng) const;
};

// Spec strings: "student_t:<df>", "uniform:<lo>:<hi>", "normal:<mean>:<var>".
GammaDist parse_gamma_dist(const std::string& spec);
std::string gamma_dist_string(const GammaDist& g);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Multi-task design with a causal block, an anticausal block coupled to the
// target through a per-task gamma, and optional pure-noise columns:
//   X_S ~ N(0, U U^T)            U per task, entries uniform on u_causal_range
//   Y   = alpha^T X_S + eps      eps ~ N(0, eps_std^2)
//   X_N = gamma Y + (I + M) eta  eta ~ N(0, V V^T), M per task on u_mix_range
//   X_noise ~ N(0, I)
// Feature order: causal 1..s, anticausal s+1..s+n, noise after that.
struct DgGenConfig {
  int s_size = 4;
  int n_size = 4;
  int noise_size = 0;
  int d_tasks = 6;
  int n_per_task = 1000;
  int n_test_labeled = -1;  // -1: use n_per_task
  int n_test_unlabeled = 0;
  double eps_std = 1.4142135623730951;
  GammaDist gamma_dist{};
  Interval u_causal_range{-2.0, 2.0};
  Interval u_noise_range{-1.0, 1.0};
  Interval u_mix_range{-4.0, 4.0};
  Interval alpha_range{-1.0, 2.5};
  std::uint64_t seed = 0;
};

struct DgTaskParams {
  double gamma = 0.0;
  Eigen::MatrixXd causal_factor;  // s x s
  Eigen::MatrixXd noise_factor;   // n x n
  Eigen::MatrixXd mix;            // n x n
};

// Everything needed to redraw rows from any task, test task included (last
// entry of `tasks`).
struct DgParams {
  Eigen::VectorXd alpha;
  double eps_std = 0.0;
  int s = 0, n_anti = 0, n_noise = 0, p = 0;
  std::vector<DgTaskParams> tasks;

  SubsetMask causal_subset() const {
    std::vector<int> v(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i) v[static_cast<std::size_t>(i)] = i + 1;
    return SubsetMask(std::move(v));
  }
};

struct DgInstance {
  MultiTaskDataset dataset;  // tasks 1..D labeled, task D+1 = test
  DgParams params;
};

DgInstance gen_dg_tasks(const DgGenConfig& cfg);

// Draws n fresh rows from task `task_index` (0-based into params.tasks).
void sample_dg_rows(const DgParams& par, std::size_t task_index, Eigen::Index n, Rng& rng,
                    Eigen::MatrixXd& X, Eigen::VectorXd& y);

// Three-node chain with independent causal coordinates and one anticausal
// feature: X_j ~ N(0, sigma_x_j^2), Y = alpha^T X + eps, Z = gamma^k Y + eta.
// Features are (X_1..X_s, Z); gamma^k ~ N(gamma_mean, gamma_var) per task.
struct ThreeNodeConfig {
  Eigen::VectorXd alpha;
  Eigen::VectorXd sigma_x;  // standard deviations
  double sigma_eps = 1.0;
  double sigma_eta = 1.0;
  double gamma_mean = 0.0;
  double gamma_var = 1.0;
  int d_tasks = 2;
  int n_per_task = 1000;
  int n_test = -1;  // -1: use n_per_task
  std::uint64_t seed = 0;
};

struct ThreeNodeParams {
  ThreeNodeConfig cfg;
  std::vector<double> gammas;  // d_tasks + 1 entries, last one is the test task
};

struct ThreeNodeInstance {
  MultiTaskDataset dataset;
  ThreeNodeParams params;
};

ThreeNodeInstance gen_three_node(const ThreeNodeConfig& cfg);

void sample_three_node_rows(const ThreeNodeParams& par, std::size_t task_index, Eigen::Index n,
                            Rng& rng, Eigen::MatrixXd& X, Eigen::VectorXd& y);

// Population coefficients of the least-squares fit of Y on (X, Z) pooled over
// tasks with the given gamma values, in closed form. Returns (beta on X,
// beta on Z).
std::pair<Eigen::VectorXd, double> pooled_coefficients_closed_form(const std::vector<double>& gammas,
                                                                   const ThreeNodeConfig& cfg);

// Population squared prediction error of (beta_x, beta_z) on a test task with
// coupling gamma_t. The predictor (alpha, 0) attains sigma_eps^2 for every
// gamma_t.
double expected_test_error(const Eigen::VectorXd& beta_x, double beta_z, double gamma_t,
                           const ThreeNodeConfig& cfg);

// Same error averaged over gamma_t with mean mu and variance var.
double expected_test_error_gamma_moments(const Eigen::VectorXd& beta_x, double beta_z, double mu,
                                         double var, const ThreeNodeConfig& cfg);

}  // namespace invtrans
