#include "invtrans/synthetic.hpp"

#include <charconv>
#include <cmath>

#include "invtrans/csv.hpp"

namespace invtrans {

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, const Interval& range, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(range.lo, range.hi);
  return m;
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

void check_interval(const Interval& iv, const char* name) {
  if (!(iv.lo <= iv.hi)) fail(Errc::InvalidConfig, std::string(name) + " has lo > hi");
}

}  // namespace

double GammaDist::draw(Rng& rng) const {
  switch (kind) {
    case GammaDistKind::StudentT:
      return rng.student_t(a);
    case GammaDistKind::Uniform:
      return rng.uniform(a, b);
    case GammaDistKind::Normal:
      return a + std::sqrt(b) * rng.normal();
  }
  fail(Errc::InvalidConfig, "unknown gamma distribution kind");
}

DgInstance gen_dg_tasks(const DgGenConfig& cfg) {
  if (cfg.s_size < 1) fail(Errc::InvalidConfig, "s_size must be >= 1");
  if (cfg.n_size < 0 || cfg.noise_size < 0) fail(Errc::InvalidConfig, "block sizes must be >= 0");
  if (cfg.d_tasks < 1) fail(Errc::InvalidConfig, "d_tasks must be >= 1");
  if (cfg.n_per_task < 1) fail(Errc::InvalidConfig, "n_per_task must be >= 1");
  if (!(cfg.eps_std > 0.0)) fail(Errc::InvalidConfig, "eps_std must be > 0");
  check_interval(cfg.u_causal_range, "u_causal_range");
  check_interval(cfg.u_noise_range, "u_noise_range");
  check_interval(cfg.u_mix_range, "u_mix_range");
  check_interval(cfg.alpha_range, "alpha_range");
  if (cfg.gamma_dist.kind == GammaDistKind::Uniform && !(cfg.gamma_dist.a <= cfg.gamma_dist.b))
    fail(Errc::InvalidConfig, "uniform gamma range has lo > hi");

  DgInstance out;
  DgParams& par = out.params;
  par.s = cfg.s_size;
  par.n_anti = cfg.n_size;
  par.n_noise = cfg.noise_size;
  par.p = cfg.s_size + cfg.n_size + cfg.noise_size;
  par.eps_std = cfg.eps_std;

  Rng alpha_rng = Rng::from_path(cfg.seed, {1});
  par.alpha.resize(par.s);
  for (int i = 0; i < par.s; ++i) par.alpha[i] = alpha_rng.uniform(cfg.alpha_range.lo, cfg.alpha_range.hi);

  const int total_tasks = cfg.d_tasks + 1;  // last one is the test task
  for (int k = 0; k < total_tasks; ++k) {
    Rng rng = Rng::from_path(cfg.seed, {2, static_cast<std::uint64_t>(k)});
    DgTaskParams tp;
    tp.gamma = cfg.gamma_dist.draw(rng);
    tp.causal_factor = uniform_matrix(par.s, par.s, cfg.u_causal_range, rng);
    tp.noise_factor = uniform_matrix(par.n_anti, par.n_anti, cfg.u_noise_range, rng);
    tp.mix = uniform_matrix(par.n_anti, par.n_anti, cfg.u_mix_range, rng);
    par.tasks.push_back(std::move(tp));
  }

  out.dataset.p = par.p;
  const int n_test_labeled = cfg.n_test_labeled < 0 ? cfg.n_per_task : cfg.n_test_labeled;
  // The test task enters the dataset only when it has rows; its parameters
  // are kept in par.tasks either way so fresh rows can be drawn from it.
  if (n_test_labeled > 0 || cfg.n_test_unlabeled > 0) out.dataset.test_task_id = cfg.d_tasks + 1;
  for (int k = 0; k < total_tasks; ++k) {
    const bool is_test = k == cfg.d_tasks;
    const Eigen::Index n_lab = is_test ? n_test_labeled : cfg.n_per_task;
    if (n_lab > 0) {
      Rng rng = Rng::from_path(cfg.seed, {3, static_cast<std::uint64_t>(k), 0});
      TaskSample t;
      t.task_id = k + 1;
      Eigen::VectorXd y;
      sample_dg_rows(par, static_cast<std::size_t>(k), n_lab, rng, t.features, y);
      t.targets = std::move(y);
      out.dataset.tasks.push_back(std::move(t));
    }
    if (is_test && cfg.n_test_unlabeled > 0) {
      Rng rng = Rng::from_path(cfg.seed, {3, static_cast<std::uint64_t>(k), 1});
      TaskSample t;
      t.task_id = k + 1;
      Eigen::VectorXd y;
      sample_dg_rows(par, static_cast<std::size_t>(k), cfg.n_test_unlabeled, rng, t.features, y);
      out.dataset.tasks.push_back(std::move(t));
    }
  }
  return out;
}

void sample_dg_rows(const DgParams& par, std::size_t task_index, Eigen::Index n, Rng& rng,
                    Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  if (task_index >= par.tasks.size()) fail(Errc::InvalidConfig, "task index out of range");
  const DgTaskParams& tp = par.tasks[task_index];
  X.resize(n, par.p);
  X.leftCols(par.s).noalias() = normal_matrix(n, par.s, rng) * tp.causal_factor.transpose();
  Eigen::VectorXd eps(n);
  for (Eigen::Index i = 0; i < n; ++i) eps[i] = par.eps_std * rng.normal();
  y = X.leftCols(par.s) * par.alpha + eps;
  if (par.n_anti > 0) {
    Eigen::MatrixXd eta = normal_matrix(n, par.n_anti, rng) * tp.noise_factor.transpose();
    X.middleCols(par.s, par.n_anti).noalias() = eta + eta * tp.mix.transpose();
    X.middleCols(par.s, par.n_anti) += tp.gamma * y * Eigen::RowVectorXd::Ones(par.n_anti);
  }
  if (par.n_noise > 0) X.rightCols(par.n_noise) = normal_matrix(n, par.n_noise, rng);
}

ThreeNodeInstance gen_three_node(const ThreeNodeConfig& cfg) {
  if (cfg.alpha.size() < 1) fail(Errc::InvalidConfig, "alpha must have at least one entry");
  if (cfg.sigma_x.size() != cfg.alpha.size())
    fail(Errc::DimensionMismatch, "alpha and sigma_x differ in length");
  if ((cfg.sigma_x.array() <= 0.0).any()) fail(Errc::InvalidConfig, "sigma_x entries must be > 0");
  if (!(cfg.sigma_eps > 0.0) || !(cfg.sigma_eta > 0.0))
    fail(Errc::InvalidConfig, "sigma_eps and sigma_eta must be > 0");
  if (cfg.gamma_var < 0.0) fail(Errc::InvalidConfig, "gamma_var must be >= 0");
  if (cfg.d_tasks < 1) fail(Errc::InvalidConfig, "d_tasks must be >= 1");
  if (cfg.n_per_task < 1) fail(Errc::InvalidConfig, "n_per_task must be >= 1");

  ThreeNodeInstance out;
  out.params.cfg = cfg;
  Rng grng = Rng::from_path(cfg.seed, {1});
  for (int k = 0; k < cfg.d_tasks + 1; ++k)
    out.params.gammas.push_back(cfg.gamma_mean + std::sqrt(cfg.gamma_var) * grng.normal());

  out.dataset.p = static_cast<int>(cfg.alpha.size()) + 1;
  const Eigen::Index n_test = cfg.n_test < 0 ? cfg.n_per_task : cfg.n_test;
  if (n_test > 0) out.dataset.test_task_id = cfg.d_tasks + 1;
  for (int k = 0; k < cfg.d_tasks + 1; ++k) {
    const bool is_test = k == cfg.d_tasks;
    const Eigen::Index n = is_test ? n_test : cfg.n_per_task;
    if (n == 0) continue;
    Rng rng = Rng::from_path(cfg.seed, {2, static_cast<std::uint64_t>(k)});
    TaskSample t;
    t.task_id = k + 1;
    Eigen::VectorXd y;
    sample_three_node_rows(out.params, static_cast<std::size_t>(k), n, rng, t.features, y);
    t.targets = std::move(y);
    out.dataset.tasks.push_back(std::move(t));
  }
  return out;
}

void sample_three_node_rows(const ThreeNodeParams& par, std::size_t task_index, Eigen::Index n,
                            Rng& rng, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  if (task_index >= par.gammas.size()) fail(Errc::InvalidConfig, "task index out of range");
  const ThreeNodeConfig& cfg = par.cfg;
  const Eigen::Index s = cfg.alpha.size();
  const double gamma = par.gammas[task_index];
  X.resize(n, s + 1);
  y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double dot = 0.0;
    for (Eigen::Index j = 0; j < s; ++j) {
      X(i, j) = cfg.sigma_x[j] * rng.normal();
      dot += cfg.alpha[j] * X(i, j);
    }
    y[i] = dot + cfg.sigma_eps * rng.normal();
    X(i, s) = gamma * y[i] + cfg.sigma_eta * rng.normal();
  }
}

std::pair<Eigen::VectorXd, double> pooled_coefficients_closed_form(const std::vector<double>& gammas,
                                                                   const ThreeNodeConfig& cfg) {
  if (gammas.empty()) fail(Errc::InvalidConfig, "need at least one task gamma");
  if (cfg.sigma_x.size() != cfg.alpha.size())
    fail(Errc::DimensionMismatch, "alpha and sigma_x differ in length");
  const double d = static_cast<double>(gammas.size());
  double g_sum = 0.0, g_sq = 0.0;
  for (double g : gammas) {
    g_sum += g;
    g_sq += g * g;
  }
  const double a_quad = (cfg.alpha.array().square() * cfg.sigma_x.array().square()).sum();
  const double var_y = a_quad + cfg.sigma_eps * cfg.sigma_eps;
  const double den = var_y * g_sq + d * cfg.sigma_eta * cfg.sigma_eta - (g_sum * g_sum / d) * a_quad;
  if (std::abs(den) < 1e-14 * std::max(1.0, var_y * g_sq + d * cfg.sigma_eta * cfg.sigma_eta))
    fail(Errc::DegenerateDenominator, "pooled regression has no unique solution");
  const double beta_z = g_sum * cfg.sigma_eps * cfg.sigma_eps / den;
  Eigen::VectorXd beta_x = (1.0 - (g_sum / d) * beta_z) * cfg.alpha;
  return {std::move(beta_x), beta_z};
}

double expected_test_error(const Eigen::VectorXd& beta_x, double beta_z, double gamma_t,
                           const ThreeNodeConfig& cfg) {
  return expected_test_error_gamma_moments(beta_x, beta_z, gamma_t, 0.0, cfg);
}

double expected_test_error_gamma_moments(const Eigen::VectorXd& beta_x, double beta_z, double mu,
                                         double var, const ThreeNodeConfig& cfg) {
  if (beta_x.size() != cfg.alpha.size()) fail(Errc::DimensionMismatch, "beta_x has wrong length");
  if (var < 0.0) fail(Errc::InvalidConfig, "gamma variance must be >= 0");
  const Eigen::ArrayXd dx = cfg.sigma_x.array().square();
  const double a_quad = (cfg.alpha.array().square() * dx).sum();
  const double var_y = a_quad + cfg.sigma_eps * cfg.sigma_eps;
  const double cross = (beta_x.array() * dx * cfg.alpha.array()).sum();
  const double quad = (beta_x.array().square() * dx).sum();
  // E (1 - beta_z gamma)^2 Var(Y) - 2 E(1 - beta_z gamma) <beta_x, alpha>_Dx
  // + <beta_x, beta_x>_Dx + beta_z^2 sigma_eta^2, gamma having mean mu and
  // variance var.
  const double m1 = 1.0 - beta_z * mu;
  const double m2 = 1.0 - 2.0 * beta_z * mu + beta_z * beta_z * (mu * mu + var);
  return m2 * var_y - 2.0 * m1 * cross + quad + beta_z * beta_z * cfg.sigma_eta * cfg.sigma_eta;
}

GammaDist parse_gamma_dist(const std::string& spec) {
  const auto c1 = spec.find(':');
  const std::string kind = c1 == std::string::npos ? spec : spec.substr(0, c1);
  std::vector<double> args;
  std::size_t start = c1 == std::string::npos ? spec.size() : c1 + 1;
  while (start < spec.size()) {
    std::size_t c = spec.find(':', start);
    if (c == std::string::npos) c = spec.size();
    double v = 0.0;
    const auto res = std::from_chars(spec.data() + start, spec.data() + c, v);
    if (res.ec != std::errc{} || res.ptr != spec.data() + c)
      fail(Errc::InvalidConfig, "gamma spec: bad number in '" + spec + "'");
    args.push_back(v);
    start = c + 1;
  }
  GammaDist g;
  if (kind == "student_t") {
    g.kind = GammaDistKind::StudentT;
    g.a = args.empty() ? 3.0 : args[0];
    if (args.size() > 1) fail(Errc::InvalidConfig, "gamma spec student_t takes one argument");
  } else if (kind == "uniform") {
    if (args.size() != 2) fail(Errc::InvalidConfig, "gamma spec uniform needs lo:hi");
    g.kind = GammaDistKind::Uniform;
    g.a = args[0];
    g.b = args[1];
  } else if (kind == "normal") {
    if (args.size() != 2) fail(Errc::InvalidConfig, "gamma spec normal needs mean:var");
    g.kind = GammaDistKind::Normal;
    g.a = args[0];
    g.b = args[1];
  } else {
    fail(Errc::InvalidConfig, "gamma spec kind must be student_t, uniform or normal");
  }
  return g;
}

std::string gamma_dist_string(const GammaDist& g) {
  switch (g.kind) {
    case GammaDistKind::StudentT:
      return "student_t:" + format_double(g.a);
    case GammaDistKind::Uniform:
      return "uniform:" + format_double(g.a) + ":" + format_double(g.b);
    case GammaDistKind::Normal:
      return "normal:" + format_double(g.a) + ":" + format_double(g.b);
  }
  fail(Errc::InvalidConfig, "bad gamma dist kind");
}

}  // namespace invtrans
