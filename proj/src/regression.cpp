#include "invtrans/regression.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "invtrans/dataset.hpp"

namespace invtrans {

namespace {

// Pooled labeled rows as one design matrix plus targets and row task ids.
struct PooledRows {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<int> task_ids;
};

PooledRows pool_labeled(const MultiTaskDataset& ds) {
  Eigen::Index n = ds.labeled_rows();
  if (n == 0) fail(Errc::NoLabeledData, "dataset has no labeled rows");
  PooledRows out;
  out.X.resize(n, ds.p);
  out.y.resize(n);
  out.task_ids.reserve(static_cast<std::size_t>(n));
  Eigen::Index at = 0;
  for (const auto& t : ds.tasks) {
    if (!t.labeled()) continue;
    out.X.middleRows(at, t.rows()) = t.features;
    out.y.segment(at, t.rows()) = *t.targets;
    out.task_ids.insert(out.task_ids.end(), static_cast<std::size_t>(t.rows()), t.task_id);
    at += t.rows();
  }
  return out;
}

}  // namespace

PooledGram pooled_gram(const MultiTaskDataset& ds) {
  PooledGram g;
  g.n = ds.labeled_rows();
  if (g.n == 0) fail(Errc::NoLabeledData, "dataset has no labeled rows");
  const int p = ds.p;

  Eigen::VectorXd x_sum = Eigen::VectorXd::Zero(p);
  double y_sum = 0.0;
  for (const auto& t : ds.tasks) {
    if (!t.labeled()) continue;
    x_sum += t.features.colwise().sum().transpose();
    y_sum += t.targets->sum();
  }
  g.x_mean = x_sum / static_cast<double>(g.n);
  g.y_mean = y_sum / static_cast<double>(g.n);

  g.gram = Eigen::MatrixXd::Zero(p, p);
  g.xty = Eigen::VectorXd::Zero(p);
  for (const auto& t : ds.tasks) {
    if (!t.labeled()) continue;
    Eigen::MatrixXd xc = t.features.rowwise() - g.x_mean.transpose();
    Eigen::VectorXd yc = t.targets->array() - g.y_mean;
    g.gram.noalias() += xc.transpose() * xc;
    g.xty.noalias() += xc.transpose() * yc;
  }
  return g;
}

LinearPredictor ols_from_gram(const PooledGram& g, const SubsetMask& subset) {
  if (subset.max_index() > g.gram.rows())
    fail(Errc::DimensionMismatch, "subset index " + std::to_string(subset.max_index()) +
                                      " exceeds feature count " + std::to_string(g.gram.rows()));
  LinearPredictor f;
  f.subset = subset;
  if (subset.empty()) {
    f.coefficients.resize(0);
    f.intercept = g.y_mean;
    return f;
  }
  const auto cols = subset.columns();
  const Eigen::Index s = static_cast<Eigen::Index>(cols.size());
  if (g.n < s + 1)
    fail(Errc::RankDeficient, "need at least " + std::to_string(s + 1) + " pooled rows for " +
                                  std::to_string(s) + " coefficients, have " + std::to_string(g.n));

  Eigen::MatrixXd gs(s, s);
  Eigen::VectorXd bs(s);
  for (Eigen::Index i = 0; i < s; ++i) {
    bs[i] = g.xty[cols[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < s; ++j)
      gs(i, j) = g.gram(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
  }

  Eigen::LLT<Eigen::MatrixXd> llt(gs);
  if (llt.info() != Eigen::Success) {
    // One jitter attempt before giving up; keeps near-collinear designs usable.
    const double jitter = 1e-10 * gs.trace() / static_cast<double>(s);
    gs.diagonal().array() += jitter;
    llt.compute(gs);
    if (llt.info() != Eigen::Success)
      fail(Errc::RankDeficient, "pooled Gram for subset " + subset.to_string() + " is singular");
  }
  f.coefficients = llt.solve(bs);
  double dot = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) dot += f.coefficients[i] * g.x_mean[cols[static_cast<std::size_t>(i)]];
  f.intercept = g.y_mean - dot;
  return f;
}

LinearPredictor fit_pooled_ols(const MultiTaskDataset& ds, const SubsetMask& subset) {
  return ols_from_gram(pooled_gram(ds), subset);
}

LinearPredictor fit_domain_only(const MultiTaskDataset& ds, int task_id) {
  const TaskSample* t = find_task(ds, task_id, true);
  if (!t) fail(Errc::NoLabeledData, "task " + std::to_string(task_id) + " has no labeled rows");
  MultiTaskDataset one;
  one.p = ds.p;
  one.tasks.push_back(*t);
  return fit_pooled_ols(one, SubsetMask::full(ds.p));
}

ResidualSample residuals(const LinearPredictor& f, const MultiTaskDataset& ds) {
  for (const auto& t : ds.tasks)
    if (!t.labeled()) fail(Errc::UnlabeledTask, "task " + std::to_string(t.task_id) + " has no targets");
  PooledRows rows = pool_labeled(ds);
  ResidualSample r;
  r.residuals = rows.y - f.predict(rows.X);
  r.task_ids = std::move(rows.task_ids);
  return r;
}

double empirical_mse(const LinearPredictor& f, const MultiTaskDataset& ds) {
  PooledRows rows = pool_labeled(ds);
  const Eigen::VectorXd r = rows.y - f.predict(rows.X);
  return r.squaredNorm() / static_cast<double>(r.size());
}

SubsetMask lasso_screen(const MultiTaskDataset& ds, int k) {
  if (k < 1 || k > ds.p)
    fail(Errc::InvalidK, "k must lie in [1, " + std::to_string(ds.p) + "], got " + std::to_string(k));
  PooledRows rows = pool_labeled(ds);
  const Eigen::Index n = rows.X.rows();
  if (n < 2) fail(Errc::TaskTooSmall, "lasso screening needs at least 2 pooled rows");
  const int p = ds.p;

  // Standardize columns to mean 0, norm^2/n = 1; constant columns are frozen.
  Eigen::VectorXd mean = rows.X.colwise().mean();
  Eigen::MatrixXd Z = rows.X.rowwise() - mean.transpose();
  Eigen::VectorXd scale(p);
  std::vector<bool> usable(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    const double s = std::sqrt(Z.col(j).squaredNorm() / static_cast<double>(n));
    usable[static_cast<std::size_t>(j)] = s > 0.0;
    scale[j] = usable[static_cast<std::size_t>(j)] ? s : 1.0;
    Z.col(j) /= scale[j];
  }
  Eigen::VectorXd yc = rows.y.array() - rows.y.mean();

  double lambda_max = 0.0;
  for (int j = 0; j < p; ++j)
    if (usable[static_cast<std::size_t>(j)])
      lambda_max = std::max(lambda_max, std::abs(Z.col(j).dot(yc)) / static_cast<double>(n));
  if (lambda_max == 0.0) return SubsetMask{};  // no column carries signal

  const int n_path = 100;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd resid = yc;
  std::vector<int> best;  // active set at the last penalty with <= k features

  for (int step = 0; step < n_path; ++step) {
    const double lambda =
        lambda_max * std::pow(1e-4, static_cast<double>(step) / static_cast<double>(n_path - 1));
    for (int sweep = 0; sweep < 10000; ++sweep) {
      double max_delta = 0.0;
      for (int j = 0; j < p; ++j) {
        if (!usable[static_cast<std::size_t>(j)]) continue;
        const double old = beta[j];
        double rho = Z.col(j).dot(resid) / static_cast<double>(n) + old;
        double next = 0.0;
        if (rho > lambda)
          next = rho - lambda;
        else if (rho < -lambda)
          next = rho + lambda;
        if (next != old) {
          resid -= (next - old) * Z.col(j);
          beta[j] = next;
          max_delta = std::max(max_delta, std::abs(next - old));
        }
      }
      if (max_delta < 1e-9) break;
    }
    std::vector<int> active;
    for (int j = 0; j < p; ++j)
      if (beta[j] != 0.0) active.push_back(j + 1);
    if (static_cast<int>(active.size()) > k) break;
    best = std::move(active);
  }
  return SubsetMask(std::move(best));
}

}  // namespace invtrans
