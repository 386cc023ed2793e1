#include "invtrans/mtl.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "invtrans/dataset.hpp"

namespace invtrans {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Model variable order is [X_S ascending, X_N ascending, Y]; this returns the
// feature-column map for the X part.
std::vector<int> model_order(const SubsetMask& subset, int p) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(p));
  for (int i : subset.indices()) order.push_back(i - 1);
  const SubsetMask rest = subset.complement(p);
  for (int i : rest.indices()) order.push_back(i - 1);
  return order;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& X, const std::vector<int>& cols) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = X.col(cols[j]);
  return out;
}

Eigen::LLT<Eigen::MatrixXd> chol_or_fail(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) fail(Errc::NotPositiveDefinite, what);
  return llt;
}

double gaussian_loglik(const Eigen::MatrixXd& rows, const Eigen::VectorXd& mu,
                       const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::Index n = rows.rows(), d = rows.cols();
  const Eigen::MatrixXd centered = rows.rowwise() - mu.transpose();
  const Eigen::MatrixXd w = llt.matrixL().solve(centered.transpose());
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * w.squaredNorm() -
         0.5 * static_cast<double>(n) * (logdet + static_cast<double>(d) * std::log(kTwoPi));
}

void check_model(const CovarianceModel& model) {
  const Eigen::Index d = static_cast<Eigen::Index>(model.p) + 1;
  if (model.mean.size() != d || model.sigma.rows() != d || model.sigma.cols() != d)
    fail(Errc::DimensionMismatch, "covariance model dimensions do not match p");
}

}  // namespace

EmData build_em_data(const MultiTaskDataset& ds, const SubsetMask& subset, int test_task_id,
                     bool use_unlabeled) {
  if (subset.max_index() > ds.p) fail(Errc::DimensionMismatch, "subset index exceeds feature count");
  const std::vector<int> order = model_order(subset, ds.p);
  const int p = ds.p;

  EmData data;
  data.p = p;

  // Training rows: observed coordinates are the subset block plus Y.
  std::vector<int> train_obs;
  for (int j = 0; j < static_cast<int>(subset.size()); ++j) train_obs.push_back(j);
  train_obs.push_back(p);
  Eigen::Index n_train = 0;
  for (const auto& t : ds.tasks)
    if (t.task_id != test_task_id && t.labeled()) n_train += t.rows();
  if (n_train > 0) {
    PatternGroup g;
    g.observed = train_obs;
    g.rows.resize(n_train, static_cast<Eigen::Index>(train_obs.size()));
    Eigen::Index at = 0;
    for (const auto& t : ds.tasks) {
      if (t.task_id == test_task_id || !t.labeled()) continue;
      const auto cols = subset.columns();
      for (std::size_t j = 0; j < cols.size(); ++j)
        g.rows.col(static_cast<Eigen::Index>(j)).segment(at, t.rows()) = t.features.col(cols[j]);
      g.rows.col(static_cast<Eigen::Index>(subset.size())).segment(at, t.rows()) = *t.targets;
      at += t.rows();
    }
    data.groups.push_back(std::move(g));
  }

  const TaskSample* test_lab = find_task(ds, test_task_id, true);
  if (!test_lab) fail(Errc::NoTestTask, "test task " + std::to_string(test_task_id) + " has no labeled rows");
  {
    PatternGroup g;
    for (int j = 0; j <= p; ++j) g.observed.push_back(j);
    g.rows.resize(test_lab->rows(), p + 1);
    g.rows.leftCols(p) = gather_columns(test_lab->features, order);
    g.rows.col(p) = *test_lab->targets;
    data.groups.push_back(std::move(g));
  }

  if (use_unlabeled) {
    const TaskSample* test_unlab = find_task(ds, test_task_id, false);
    if (test_unlab) {
      PatternGroup g;
      for (int j = 0; j < p; ++j) g.observed.push_back(j);
      g.rows = gather_columns(test_unlab->features, order);
      data.groups.push_back(std::move(g));
    }
  }
  return data;
}

double observed_loglik(const CovarianceModel& model, const EmData& data) {
  check_model(model);
  double ll = 0.0;
  for (const auto& g : data.groups) {
    const Eigen::Index d = static_cast<Eigen::Index>(g.observed.size());
    Eigen::VectorXd mu(d);
    Eigen::MatrixXd s(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      mu[i] = model.mean[g.observed[static_cast<std::size_t>(i)]];
      for (Eigen::Index j = 0; j < d; ++j)
        s(i, j) = model.sigma(g.observed[static_cast<std::size_t>(i)], g.observed[static_cast<std::size_t>(j)]);
    }
    ll += gaussian_loglik(g.rows, mu, chol_or_fail(s, "observed block of sigma is not positive definite"));
  }
  return ll;
}

CovarianceModel em_step(const CovarianceModel& model, const EmData& data) {
  check_model(model);
  const Eigen::Index d = static_cast<Eigen::Index>(model.p) + 1;
  const Eigen::Index n = data.rows();
  if (n == 0) fail(Errc::NoLabeledData, "no rows to run EM on");

  Eigen::VectorXd sum_z = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd sum_zz = Eigen::MatrixXd::Zero(d, d);

  for (const auto& g : data.groups) {
    const Eigen::Index n_g = g.rows.rows();
    std::vector<int> missing;
    {
      std::size_t at = 0;
      for (int j = 0; j < static_cast<int>(d); ++j) {
        if (at < g.observed.size() && g.observed[at] == j)
          ++at;
        else
          missing.push_back(j);
      }
    }
    const Eigen::Index no = static_cast<Eigen::Index>(g.observed.size());
    const Eigen::Index nm = static_cast<Eigen::Index>(missing.size());

    Eigen::VectorXd mu_o(no), mu_m(nm);
    Eigen::MatrixXd s_oo(no, no), s_om(no, nm), s_mm(nm, nm);
    for (Eigen::Index i = 0; i < no; ++i) {
      mu_o[i] = model.mean[g.observed[static_cast<std::size_t>(i)]];
      for (Eigen::Index j = 0; j < no; ++j)
        s_oo(i, j) = model.sigma(g.observed[static_cast<std::size_t>(i)], g.observed[static_cast<std::size_t>(j)]);
      for (Eigen::Index j = 0; j < nm; ++j)
        s_om(i, j) = model.sigma(g.observed[static_cast<std::size_t>(i)], missing[static_cast<std::size_t>(j)]);
    }
    for (Eigen::Index i = 0; i < nm; ++i) {
      mu_m[i] = model.mean[missing[static_cast<std::size_t>(i)]];
      for (Eigen::Index j = 0; j < nm; ++j)
        s_mm(i, j) = model.sigma(missing[static_cast<std::size_t>(i)], missing[static_cast<std::size_t>(j)]);
    }

    Eigen::MatrixXd full(n_g, d);
    Eigen::MatrixXd cond_cov;
    if (nm > 0) {
      const auto llt = chol_or_fail(s_oo, "observed block of sigma is not positive definite");
      const Eigen::MatrixXd a_t = llt.solve(s_om);  // Sigma_oo^{-1} Sigma_om
      cond_cov = s_mm - s_om.transpose() * a_t;
      const Eigen::MatrixXd imputed =
          ((g.rows.rowwise() - mu_o.transpose()) * a_t).rowwise() + mu_m.transpose();
      for (Eigen::Index j = 0; j < no; ++j) full.col(g.observed[static_cast<std::size_t>(j)]) = g.rows.col(j);
      for (Eigen::Index j = 0; j < nm; ++j) full.col(missing[static_cast<std::size_t>(j)]) = imputed.col(j);
    } else {
      full = g.rows;
    }
    sum_z += full.colwise().sum().transpose();
    sum_zz.noalias() += full.transpose() * full;
    if (nm > 0)
      for (Eigen::Index i = 0; i < nm; ++i)
        for (Eigen::Index j = 0; j < nm; ++j)
          sum_zz(missing[static_cast<std::size_t>(i)], missing[static_cast<std::size_t>(j)]) +=
              static_cast<double>(n_g) * cond_cov(i, j);
  }

  CovarianceModel next = model;
  next.mean = sum_z / static_cast<double>(n);
  next.sigma = sum_zz / static_cast<double>(n) - next.mean * next.mean.transpose();
  next.sigma = 0.5 * (next.sigma + next.sigma.transpose()).eval();
  return next;
}

EmFit em_fit(const MultiTaskDataset& ds, const SubsetMask& subset, int test_task_id,
             const EmOptions& opts) {
  if (opts.max_iter < 1) fail(Errc::InvalidConfig, "max_iter must be >= 1");
  if (!(opts.tol >= 0.0)) fail(Errc::InvalidConfig, "tol must be >= 0");
  const TaskSample* test_lab = find_task(ds, test_task_id, true);
  if (!test_lab) fail(Errc::NoTestTask, "test task " + std::to_string(test_task_id) + " has no labeled rows");
  if (test_lab->rows() < 2) fail(Errc::TestTaskTooSmall, "need >= 2 labeled test rows to initialize EM");

  EmData data = build_em_data(ds, subset, test_task_id, opts.use_unlabeled);
  const int p = ds.p;
  const Eigen::Index d = static_cast<Eigen::Index>(p) + 1;

  CovarianceModel model;
  model.subset = subset;
  model.p = p;
  model.model_to_feature = model_order(subset, p);

  // Initialize from the labeled test-task sample moments; ridge when the
  // sample is too small for a full-rank covariance.
  Eigen::MatrixXd z(test_lab->rows(), d);
  z.leftCols(p) = gather_columns(test_lab->features, model.model_to_feature);
  z.col(p) = *test_lab->targets;
  model.mean = z.colwise().mean().transpose();
  const Eigen::MatrixXd zc = z.rowwise() - model.mean.transpose();
  model.sigma = zc.transpose() * zc / static_cast<double>(z.rows());
  if (z.rows() <= d) {
    const double ridge = 1e-3 * std::max(model.sigma.trace() / static_cast<double>(d), 1e-12);
    model.sigma.diagonal().array() += ridge;
  }
  for (double jitter = 1e-8;; jitter *= 100.0) {
    if (Eigen::LLT<Eigen::MatrixXd>(model.sigma).info() == Eigen::Success) break;
    if (jitter > 1e-2) fail(Errc::NotPositiveDefinite, "could not initialize a positive definite sigma");
    model.sigma.diagonal().array() += jitter * std::max(model.sigma.trace() / static_cast<double>(d), 1.0);
  }

  EmFit fit;
  fit.converged = false;
  model.loglik_trace.push_back(observed_loglik(model, data));
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    CovarianceModel next = em_step(model, data);
    next.loglik_trace = std::move(model.loglik_trace);
    model = std::move(next);
    model.loglik_trace.push_back(observed_loglik(model, data));
    const double prev = model.loglik_trace[model.loglik_trace.size() - 2];
    const double cur = model.loglik_trace.back();
    if (std::abs(cur - prev) <= opts.tol * (1.0 + std::abs(cur))) {
      fit.converged = true;
      ++it;
      break;
    }
  }
  fit.iterations = it;
  fit.predictor = coefficients_from_covariance(model);
  fit.model = std::move(model);
  return fit;
}

LinearPredictor coefficients_from_covariance(const CovarianceModel& model) {
  check_model(model);
  const int p = model.p;
  const auto llt_check = Eigen::LLT<Eigen::MatrixXd>(model.sigma.topLeftCorner(p, p));
  if (llt_check.info() != Eigen::Success)
    fail(Errc::NotPositiveDefinite, "X block of sigma is not positive definite");
  const Eigen::VectorXd beta_model = llt_check.solve(model.sigma.col(p).head(p));

  LinearPredictor f;
  f.subset = SubsetMask::full(p);
  f.coefficients = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < p; ++j)
    f.coefficients[model.model_to_feature[static_cast<std::size_t>(j)]] = beta_model[j];
  f.intercept = model.mean[p] - beta_model.dot(model.mean.head(p));
  return f;
}

namespace {

// Covariance assembled from the fixed blocks plus the free Cov(X_N, Y) block.
CovarianceModel assemble_plugin_model(const Eigen::MatrixXd& sigma_x, const Eigen::VectorXd& v_s,
                                      const Eigen::VectorXd& c, double var_y,
                                      const Eigen::VectorXd& mean, const SubsetMask& subset, int p,
                                      const std::vector<int>& order) {
  const Eigen::Index s = static_cast<Eigen::Index>(subset.size());
  const Eigen::Index d = static_cast<Eigen::Index>(p) + 1;
  CovarianceModel m;
  m.subset = subset;
  m.p = p;
  m.model_to_feature = order;
  m.mean = mean;
  m.sigma.resize(d, d);
  m.sigma.topLeftCorner(p, p) = sigma_x;
  m.sigma.col(p).head(s) = v_s;
  m.sigma.col(p).segment(s, p - s) = c;
  m.sigma.row(p).head(p) = m.sigma.col(p).head(p).transpose();
  m.sigma(p, p) = var_y;
  return m;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

LinearPredictor naive_plugin_fit(const MultiTaskDataset& ds, const SubsetMask& subset,
                                 int test_task_id, const Eigen::VectorXd& alpha, double eps_var,
                                 const NaivePluginOptions& opts) {
  const int p = ds.p;
  if (subset.max_index() > p) fail(Errc::DimensionMismatch, "subset index exceeds feature count");
  if (alpha.size() != static_cast<Eigen::Index>(subset.size()))
    fail(Errc::DimensionMismatch, "alpha length does not match subset size");
  if (!(eps_var > 0.0)) fail(Errc::InfeasibleConstraints, "eps_var must be > 0");

  const TaskSample* test_lab = find_task(ds, test_task_id, true);
  const TaskSample* test_unlab = opts.use_unlabeled ? find_task(ds, test_task_id, false) : nullptr;
  if (!test_lab && !test_unlab)
    fail(Errc::NoTestTask, "test task " + std::to_string(test_task_id) + " has no rows");

  const std::vector<int> order = model_order(subset, p);
  const Eigen::Index s = static_cast<Eigen::Index>(subset.size());
  const Eigen::Index q = static_cast<Eigen::Index>(p) - s;

  // X moments over all available test rows, in model order.
  Eigen::Index n_x = (test_lab ? test_lab->rows() : 0) + (test_unlab ? test_unlab->rows() : 0);
  Eigen::MatrixXd xs(n_x, p);
  Eigen::Index at = 0;
  if (test_lab) {
    xs.middleRows(at, test_lab->rows()) = gather_columns(test_lab->features, order);
    at += test_lab->rows();
  }
  if (test_unlab) xs.middleRows(at, test_unlab->rows()) = gather_columns(test_unlab->features, order);

  Eigen::VectorXd x_mean = xs.colwise().mean().transpose();
  Eigen::MatrixXd sigma_x;
  if (opts.known_sigma_x) {
    if (opts.known_sigma_x->rows() != p || opts.known_sigma_x->cols() != p)
      fail(Errc::DimensionMismatch, "known_sigma_x has wrong shape");
    sigma_x.resize(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        sigma_x(i, j) = (*opts.known_sigma_x)(order[static_cast<std::size_t>(i)],
                                              order[static_cast<std::size_t>(j)]);
  } else {
    if (n_x < 2) fail(Errc::TestTaskTooSmall, "need >= 2 test rows for X moments");
    const Eigen::MatrixXd xc = xs.rowwise() - x_mean.transpose();
    sigma_x = xc.transpose() * xc / static_cast<double>(n_x);
  }

  const double y_mean =
      test_lab ? test_lab->targets->mean() : alpha.dot(x_mean.head(s));

  const Eigen::MatrixXd sigma_ss = sigma_x.topLeftCorner(s, s);
  const Eigen::VectorXd v_s = opts.known_cov_xs_y ? *opts.known_cov_xs_y
                                                  : Eigen::VectorXd(sigma_ss * alpha);
  if (v_s.size() != s) fail(Errc::DimensionMismatch, "known_cov_xs_y has wrong length");
  const double var_y = opts.known_var_y ? *opts.known_var_y : alpha.dot(sigma_ss * alpha) + eps_var;

  Eigen::VectorXd mean(p + 1);
  mean.head(p) = x_mean;
  mean[p] = y_mean;

  if (q == 0) {
    // Nothing to optimize: the predictor is alpha itself.
    LinearPredictor f;
    f.subset = subset;
    f.coefficients = alpha;
    f.intercept = y_mean - alpha.dot(x_mean.head(s));
    return f;
  }

  if (min_eigenvalue(sigma_x) < 1e-8)
    fail(Errc::InfeasibleConstraints, "test-sample X covariance is not positive definite");

  // Center of the feasible region: the c minimizing the Schur penalty,
  // c* = Sigma_NS Sigma_SS^{-1} v_S.
  Eigen::LLT<Eigen::MatrixXd> llt_ss(sigma_ss);
  if (llt_ss.info() != Eigen::Success)
    fail(Errc::InfeasibleConstraints, "subset block of the X covariance is not positive definite");
  const Eigen::VectorXd center = sigma_x.bottomLeftCorner(q, s) * llt_ss.solve(v_s);
  const double schur_at_center = var_y - v_s.dot(llt_ss.solve(v_s));
  if (!(schur_at_center > 0.0))
    fail(Errc::InfeasibleConstraints, "no positive definite completion exists for the pinned blocks");

  auto feasible = [&](const Eigen::VectorXd& c) {
    const CovarianceModel m = assemble_plugin_model(sigma_x, v_s, c, var_y, mean, subset, p, order);
    return min_eigenvalue(m.sigma) >= 1e-8;
  };

  // Start from the sample Cov(X_N, y) when labels exist, shrinking toward the
  // center until positive definite.
  Eigen::VectorXd c0 = center;
  if (test_lab && test_lab->rows() >= 2) {
    const Eigen::MatrixXd xl = gather_columns(test_lab->features, order);
    const Eigen::VectorXd yl = *test_lab->targets;
    const Eigen::VectorXd ylc = yl.array() - yl.mean();
    c0 = (xl.rightCols(q).rowwise() - xl.rightCols(q).colwise().mean()).transpose() * ylc /
         static_cast<double>(xl.rows());
  }
  for (int i = 0; i < 200 && !feasible(c0); ++i) c0 = center + 0.5 * (c0 - center);
  if (!feasible(c0)) c0 = center;
  if (!feasible(c0)) fail(Errc::InfeasibleConstraints, "could not find a feasible starting point");

  // Likelihood of the test rows under the assembled model.
  EmData test_data;
  test_data.p = p;
  if (test_lab) {
    PatternGroup g;
    for (int j = 0; j <= p; ++j) g.observed.push_back(j);
    g.rows.resize(test_lab->rows(), p + 1);
    g.rows.leftCols(p) = gather_columns(test_lab->features, order);
    g.rows.col(p) = *test_lab->targets;
    test_data.groups.push_back(std::move(g));
  }
  if (test_unlab) {
    PatternGroup g;
    for (int j = 0; j < p; ++j) g.observed.push_back(j);
    g.rows = gather_columns(test_unlab->features, order);
    test_data.groups.push_back(std::move(g));
  }

  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto objective = [&](const Eigen::VectorXd& c) {
    const CovarianceModel m = assemble_plugin_model(sigma_x, v_s, c, var_y, mean, subset, p, order);
    if (min_eigenvalue(m.sigma) < 1e-10) return neg_inf;
    return observed_loglik(m, test_data);
  };

  // Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5) on
  // the free block, maximizing the likelihood.
  const Eigen::Index dim = q;
  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> value;
  simplex.push_back(c0);
  for (Eigen::Index i = 0; i < dim; ++i) {
    Eigen::VectorXd v = c0;
    double scale = std::sqrt(std::max(sigma_x(s + i, s + i) * var_y, 0.0));
    if (!(scale > 0.0)) scale = 1.0;
    v[i] += 0.1 * scale;
    simplex.push_back(v);
  }
  int evals = 0;
  for (auto& v : simplex) {
    value.push_back(objective(v));
    ++evals;
  }

  auto order_simplex = [&]() {
    std::vector<std::size_t> idx(simplex.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return value[a] > value[b]; });
    std::vector<Eigen::VectorXd> s2;
    std::vector<double> v2;
    for (std::size_t i : idx) {
      s2.push_back(simplex[i]);
      v2.push_back(value[i]);
    }
    simplex = std::move(s2);
    value = std::move(v2);
  };

  while (evals < opts.max_evals) {
    order_simplex();
    const double best = value.front(), worst = value.back();
    if (std::isfinite(worst) && std::abs(best - worst) < 1e-10 * (1.0 + std::abs(best))) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex.back());
    const double f_r = objective(reflected);
    ++evals;
    if (f_r > value.front()) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex.back());
      const double f_e = objective(expanded);
      ++evals;
      if (f_e > f_r) {
        simplex.back() = expanded;
        value.back() = f_e;
      } else {
        simplex.back() = reflected;
        value.back() = f_r;
      }
      continue;
    }
    if (f_r > value[value.size() - 2]) {
      simplex.back() = reflected;
      value.back() = f_r;
      continue;
    }
    const Eigen::VectorXd contracted = centroid + 0.5 * (simplex.back() - centroid);
    const double f_c = objective(contracted);
    ++evals;
    if (f_c > value.back()) {
      simplex.back() = contracted;
      value.back() = f_c;
      continue;
    }
    for (std::size_t i = 1; i < simplex.size(); ++i) {
      simplex[i] = simplex.front() + 0.5 * (simplex[i] - simplex.front());
      value[i] = objective(simplex[i]);
      ++evals;
    }
  }
  order_simplex();

  const CovarianceModel final_model =
      assemble_plugin_model(sigma_x, v_s, simplex.front(), var_y, mean, subset, p, order);
  return coefficients_from_covariance(final_model);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> analytic_beta_opt(
    const Eigen::VectorXd& alpha, double eps_var, const Eigen::VectorXd& gamma,
    const Eigen::MatrixXd& sigma_n, const Eigen::MatrixXd& sigma_xs, const Eigen::MatrixXd& sigma_xn) {
  const Eigen::Index s = alpha.size(), q = gamma.size();
  if (sigma_n.rows() != q || sigma_n.cols() != q) fail(Errc::DimensionMismatch, "sigma_n has wrong shape");
  if (sigma_xs.rows() != s || sigma_xs.cols() != s) fail(Errc::DimensionMismatch, "sigma_xs has wrong shape");
  if (sigma_xn.rows() != s || sigma_xn.cols() != q) fail(Errc::DimensionMismatch, "sigma_xn has wrong shape");
  if (!(eps_var > 0.0)) fail(Errc::InvalidConfig, "eps_var must be > 0");

  Eigen::LLT<Eigen::MatrixXd> llt(sigma_xs);
  if (llt.info() != Eigen::Success) fail(Errc::NotPositiveDefinite, "sigma_xs is not positive definite");
  const Eigen::MatrixXd solved_xn = llt.solve(sigma_xn);  // Sigma_XS^{-1} Sigma_XN

  const Eigen::MatrixXd m =
      eps_var * gamma * gamma.transpose() + sigma_n - sigma_xn.transpose() * solved_xn;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) fail(Errc::SingularM, "target matrix for the anticausal block is singular");
  Eigen::VectorXd beta_n = eps_var * lu.solve(gamma);
  Eigen::VectorXd beta_s = alpha * (1.0 - gamma.dot(beta_n)) - solved_xn * beta_n;
  return {std::move(beta_s), std::move(beta_n)};
}

}  // namespace invtrans
