#include <doctest.h>

#include <cmath>

#include "invtrans/mtl.hpp"
#include "invtrans/synthetic.hpp"
#include "test_util.hpp"

using namespace invtrans;

namespace {

// Transfer-style instance: a few training tasks plus a test task with both
// labeled and unlabeled partitions.
MultiTaskDataset amtl_instance(std::uint64_t seed, int n_train = 120, int n_test_lab = 30,
                               int n_test_unlab = 40) {
  DgGenConfig cfg;
  cfg.s_size = 2;
  cfg.n_size = 2;
  cfg.d_tasks = 2;
  cfg.n_per_task = n_train;
  cfg.n_test_labeled = n_test_lab;
  cfg.n_test_unlabeled = n_test_unlab;
  cfg.gamma_dist = GammaDist{GammaDistKind::Uniform, 0.0, 1.5};
  cfg.seed = seed;
  return gen_dg_tasks(cfg).dataset;
}

double frob(const Eigen::MatrixXd& a) { return a.norm(); }

}  // namespace

TEST_CASE("pattern groups reflect what each partition observes") {
  MultiTaskDataset ds = amtl_instance(1);
  const SubsetMask subset({1, 3});

  const EmData plain = build_em_data(ds, subset, 3, false);
  REQUIRE(plain.groups.size() == 2);
  CHECK(plain.groups[0].observed == std::vector<int>({0, 1, 4}));  // X_S block then Y
  CHECK(plain.groups[0].rows.rows() == 240);
  CHECK(plain.groups[1].observed == std::vector<int>({0, 1, 2, 3, 4}));
  CHECK(plain.groups[1].rows.rows() == 30);

  const EmData with_unlab = build_em_data(ds, subset, 3, true);
  REQUIRE(with_unlab.groups.size() == 3);
  CHECK(with_unlab.groups[2].observed == std::vector<int>({0, 1, 2, 3}));
  CHECK(with_unlab.groups[2].rows.rows() == 40);

  // Model order is [subset ascending, complement ascending, Y]: the first
  // model column is feature 1, the second feature 3.
  CHECK(testutil::same(with_unlab.groups[1].rows.col(0), ds.tasks[2].features.col(0)));
  CHECK(testutil::same(with_unlab.groups[1].rows.col(1), ds.tasks[2].features.col(2)));
  CHECK(testutil::same(with_unlab.groups[1].rows.col(2), ds.tasks[2].features.col(1)));
  CHECK(testutil::same(with_unlab.groups[1].rows.col(4), *ds.tasks[2].targets));
}

TEST_CASE("complete data: EM lands on the sample moments in one step") {
  MultiTaskDataset ds;
  ds.p = 3;
  Rng rng = Rng::from_path(4, {0});
  Eigen::MatrixXd x(80, 3);
  Eigen::VectorXd y(80);
  for (Eigen::Index i = 0; i < 80; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y[i] = x(i, 0) - x(i, 2) + 0.3 * rng.normal();
  }
  ds.tasks.push_back(testutil::labeled_task(1, x, y));
  ds.test_task_id = 1;

  const EmFit fit = em_fit(ds, SubsetMask({1}), 1, {});
  CHECK(fit.converged);
  CHECK(fit.iterations <= 2);

  Eigen::MatrixXd z(80, 4);
  z.leftCols(3) = x;
  z.col(3) = y;
  const Eigen::RowVectorXd mean = z.colwise().mean();
  const Eigen::MatrixXd zc = z.rowwise() - mean;
  const Eigen::MatrixXd cov = zc.transpose() * zc / 80.0;
  CHECK((fit.model.mean.transpose() - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(frob(fit.model.sigma - cov) < 1e-10);

  // The EM map is stationary at the maximum likelihood point.
  const EmData data = build_em_data(ds, SubsetMask({1}), 1, false);
  const CovarianceModel next = em_step(fit.model, data);
  CHECK(frob(next.sigma - fit.model.sigma) < 1e-12);
  CHECK((next.mean - fit.model.mean).cwiseAbs().maxCoeff() < 1e-12);

  // And the fitted predictor equals plain least squares on the same rows.
  double b0 = 0.0;
  const Eigen::VectorXd want = testutil::oracle_ols(x, y, &b0);
  for (int j = 0; j < 3; ++j)
    CHECK(fit.predictor.dense_coefficients(3)[j] == doctest::Approx(want[j]).epsilon(1e-8));
  CHECK(fit.predictor.intercept == doctest::Approx(b0).epsilon(1e-8));
}

TEST_CASE("observed log-likelihood matches a dense evaluation on complete data") {
  MultiTaskDataset ds;
  ds.p = 2;
  Rng rng = Rng::from_path(6, {0});
  Eigen::MatrixXd x(25, 2);
  Eigen::VectorXd y(25);
  for (Eigen::Index i = 0; i < 25; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = x(i, 0) + rng.normal();
  }
  ds.tasks.push_back(testutil::labeled_task(1, x, y));
  ds.test_task_id = 1;
  const EmData data = build_em_data(ds, SubsetMask({1, 2}), 1, false);

  CovarianceModel m;
  m.p = 2;
  m.subset = SubsetMask({1, 2});
  m.model_to_feature = {0, 1};
  m.mean = Eigen::Vector3d(0.1, -0.2, 0.3);
  m.sigma = (Eigen::MatrixXd(3, 3) << 1.5, 0.2, 0.4, 0.2, 1.1, -0.1, 0.4, -0.1, 2.0).finished();

  double want = 0.0;
  const double two_pi = 6.283185307179586476925286766559;
  const Eigen::LLT<Eigen::MatrixXd> llt(m.sigma);
  const double logdet = 2.0 * std::log(llt.matrixL()(0, 0)) + 2.0 * std::log(llt.matrixL()(1, 1)) +
                        2.0 * std::log(llt.matrixL()(2, 2));
  for (Eigen::Index i = 0; i < 25; ++i) {
    Eigen::Vector3d zi(x(i, 0), x(i, 1), y[i]);
    const Eigen::Vector3d c = zi - m.mean;
    want += -0.5 * (c.dot(llt.solve(c)) + logdet + 3.0 * std::log(two_pi));
  }
  CHECK(observed_loglik(m, data) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("EM log-likelihood never decreases, including with unlabeled rows") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    MultiTaskDataset ds = amtl_instance(seed);
    EmOptions opts;
    opts.use_unlabeled = true;
    const EmFit fit = em_fit(ds, SubsetMask({1, 2}), 3, opts);
    REQUIRE(fit.model.loglik_trace.size() >= 2);
    for (std::size_t i = 1; i < fit.model.loglik_trace.size(); ++i)
      CHECK(fit.model.loglik_trace[i] >= fit.model.loglik_trace[i - 1] - 1e-9);
    CHECK(fit.converged);
  }
}

TEST_CASE("EM input contracts") {
  MultiTaskDataset ds = amtl_instance(2);
  auto code_of = [](auto&& fn) -> Errc {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    FAIL("expected a throw");
    return Errc::ParseError;
  };
  CHECK(code_of([&] { em_fit(ds, SubsetMask({1}), 9, {}); }) == Errc::NoTestTask);

  MultiTaskDataset tiny = amtl_instance(3, 60, 1, 0);
  CHECK(code_of([&] { em_fit(tiny, SubsetMask({1}), 3, {}); }) == Errc::TestTaskTooSmall);

  EmOptions bad;
  bad.max_iter = 0;
  CHECK(code_of([&] { em_fit(ds, SubsetMask({1}), 3, bad); }) == Errc::InvalidConfig);
}

TEST_CASE("coefficients_from_covariance honors the model-to-feature map") {
  // Subset {2} of p = 2 puts feature 2 first in model order.
  CovarianceModel m;
  m.p = 2;
  m.subset = SubsetMask({2});
  m.model_to_feature = {1, 0};
  m.mean = Eigen::Vector3d(1.0, 2.0, 3.0);
  // Diagonal X block: coefficient on model coord j is cov(Xj, Y) / var(Xj).
  m.sigma = (Eigen::MatrixXd(3, 3) << 2.0, 0.0, 1.0, 0.0, 4.0, 2.0, 1.0, 2.0, 9.0).finished();

  const LinearPredictor f = coefficients_from_covariance(m);
  const Eigen::VectorXd dense = f.dense_coefficients(2);
  CHECK(dense[1] == doctest::Approx(0.5).epsilon(1e-12));  // model coord 0 -> feature 2
  CHECK(dense[0] == doctest::Approx(0.5).epsilon(1e-12));  // model coord 1 -> feature 1
  CHECK(f.intercept == doctest::Approx(3.0 - 0.5 * 2.0 - 0.5 * 1.0).epsilon(1e-12));
}

TEST_CASE("analytic optimum equals the population regression read off the joint covariance") {
  // Population three-node-style model with correlated causal block and a
  // nontrivial Sigma_XN: eta = C x_S + w with C rows orthogonal to Sigma_SS
  // alpha, which keeps Cov(eta, Y) = 0.
  const Eigen::VectorXd alpha = (Eigen::VectorXd(2) << 1.0, -0.5).finished();
  const double eps_var = 0.81;
  Eigen::MatrixXd sigma_ss(2, 2);
  sigma_ss << 1.0, 0.3, 0.3, 1.5;
  const Eigen::VectorXd sa = sigma_ss * alpha;  // Cov(X_S, Y)

  Eigen::MatrixXd c_mat(2, 2);  // rows orthogonal to sa
  c_mat.row(0) = Eigen::RowVector2d(-sa[1], sa[0]);
  c_mat.row(1) = 0.4 * Eigen::RowVector2d(-sa[1], sa[0]);
  const Eigen::VectorXd gamma = (Eigen::VectorXd(2) << 0.7, -0.2).finished();
  Eigen::MatrixXd d_w(2, 2);
  d_w << 0.9, 0.1, 0.1, 0.6;

  const Eigen::MatrixXd sigma_eta = c_mat * sigma_ss * c_mat.transpose() + d_w;
  const Eigen::MatrixXd sigma_xn = sigma_ss * c_mat.transpose();  // Cov(X_S, eta)
  const double var_y = alpha.dot(sigma_ss * alpha) + eps_var;

  // Assemble the joint covariance of (X_S, X_N, Y).
  Eigen::MatrixXd joint(5, 5);
  joint.topLeftCorner(2, 2) = sigma_ss;
  const Eigen::MatrixXd cov_s_n = sa * gamma.transpose() + sigma_xn;
  joint.block(0, 2, 2, 2) = cov_s_n;
  joint.block(2, 0, 2, 2) = cov_s_n.transpose();
  joint.block(2, 2, 2, 2) = gamma * gamma.transpose() * var_y + sigma_eta;
  joint.block(0, 4, 2, 1) = sa;
  joint.block(4, 0, 1, 2) = sa.transpose();
  joint.block(2, 4, 2, 1) = gamma * var_y;
  joint.block(4, 2, 1, 2) = (gamma * var_y).transpose();
  joint(4, 4) = var_y;

  CovarianceModel m;
  m.p = 4;
  m.subset = SubsetMask({1, 2});
  m.model_to_feature = {0, 1, 2, 3};
  m.mean = Eigen::VectorXd::Zero(5);
  m.sigma = joint;
  const LinearPredictor via_cov = coefficients_from_covariance(m);

  const auto [beta_s, beta_n] = analytic_beta_opt(alpha, eps_var, gamma, sigma_eta, sigma_ss, sigma_xn);
  const Eigen::VectorXd dense = via_cov.dense_coefficients(4);
  for (int j = 0; j < 2; ++j) {
    CHECK(dense[j] == doctest::Approx(beta_s[j]).epsilon(1e-10));
    CHECK(dense[2 + j] == doctest::Approx(beta_n[j]).epsilon(1e-10));
  }
}

TEST_CASE("analytic optimum reduces to the single-task closed form on the chain model") {
  ThreeNodeConfig tc;
  tc.alpha = (Eigen::VectorXd(2) << 1.4, 0.3).finished();
  tc.sigma_x = (Eigen::VectorXd(2) << 1.0, 0.8).finished();
  tc.sigma_eps = 1.1;
  tc.sigma_eta = 0.9;
  const double gamma_t = 0.75;

  const auto [bx, bz] = pooled_coefficients_closed_form({gamma_t}, tc);
  Eigen::MatrixXd sigma_xs = Eigen::MatrixXd::Zero(2, 2);
  sigma_xs.diagonal() = tc.sigma_x.array().square();
  const auto [beta_s, beta_n] = analytic_beta_opt(
      tc.alpha, tc.sigma_eps * tc.sigma_eps, (Eigen::VectorXd(1) << gamma_t).finished(),
      (Eigen::MatrixXd(1, 1) << tc.sigma_eta * tc.sigma_eta).finished(), sigma_xs,
      Eigen::MatrixXd::Zero(2, 1));
  CHECK(beta_s[0] == doctest::Approx(bx[0]).epsilon(1e-10));
  CHECK(beta_s[1] == doctest::Approx(bx[1]).epsilon(1e-10));
  CHECK(beta_n[0] == doctest::Approx(bz).epsilon(1e-10));
}

TEST_CASE("plug-in estimator approaches the analytic optimum with plenty of data") {
  ThreeNodeConfig tc;
  tc.alpha = (Eigen::VectorXd(1) << 1.5).finished();
  tc.sigma_x = (Eigen::VectorXd(1) << 1.0).finished();
  tc.sigma_eps = 1.0;
  tc.sigma_eta = 1.0;
  tc.gamma_mean = 0.8;
  tc.gamma_var = 0.0;
  tc.d_tasks = 1;
  tc.n_per_task = 6000;
  tc.seed = 31;
  const ThreeNodeInstance inst = gen_three_node(tc);

  NaivePluginOptions opts;
  opts.use_unlabeled = false;
  const LinearPredictor f =
      naive_plugin_fit(inst.dataset, SubsetMask({1}), 2, tc.alpha, 1.0, opts);

  const auto [beta_s, beta_n] = analytic_beta_opt(
      tc.alpha, 1.0, (Eigen::VectorXd(1) << 0.8).finished(), (Eigen::MatrixXd(1, 1) << 1.0).finished(),
      (Eigen::MatrixXd(1, 1) << 1.0).finished(), Eigen::MatrixXd::Zero(1, 1));
  const Eigen::VectorXd dense = f.dense_coefficients(2);
  CHECK(dense[0] == doctest::Approx(beta_s[0]).epsilon(0.1));
  CHECK(dense[1] == doctest::Approx(beta_n[0]).epsilon(0.1));

  CHECK_THROWS_AS(naive_plugin_fit(inst.dataset, SubsetMask({1}), 2, tc.alpha, -1.0, opts), Error);
}

TEST_CASE("analytic optimum rejects inconsistent shapes and singular systems") {
  const Eigen::VectorXd alpha = (Eigen::VectorXd(1) << 1.0).finished();
  CHECK_THROWS_AS(analytic_beta_opt(alpha, 1.0, Eigen::VectorXd::Zero(2),
                                    Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1),
                                    Eigen::MatrixXd::Zero(1, 1)),
                  Error);
  // Sigma_N = 0 with gamma = 0 makes M singular.
  CHECK_THROWS_AS(analytic_beta_opt(alpha, 1.0, Eigen::VectorXd::Zero(1),
                                    Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Identity(1, 1),
                                    Eigen::MatrixXd::Zero(1, 1)),
                  Error);
}
