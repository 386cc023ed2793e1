#include "invtrans/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "invtrans/csv.hpp"
#include "invtrans/dataset.hpp"
#include "invtrans/parallel.hpp"
#include "invtrans/search.hpp"
#include "invtrans/synthetic.hpp"

namespace invtrans {

namespace {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t k = mix64(seed ^ 0x517cc1b727220a95ULL);
  for (std::uint64_t t : path) k = mix64(k ^ mix64(t));
  return k;
}

// ---------------------------------------------------------------------------
// Override parsing

const std::set<std::string>& allowed_override_keys() {
  static const std::set<std::string> keys = {
      "d_list",        "d_tasks",     "n_per_task",  "n_test_labeled", "n_test_unlabeled",
      "eps_std",       "s_size",      "n_size",      "noise_size",     "gamma",
      "delta",         "test",        "mode",        "rule",           "lasso_k",
      "greedy_iters",  "train_fraction", "eval_rows", "grid_points",   "grid_lo",
      "grid_hi",       "max_subset_size", "em_tol",  "em_max_iter",    "design",
      "bandwidth",     "sigma_eps",   "sigma_eta",   "gamma_mean",     "gamma_var",
      "alpha",         "sigma_x",     "setting",
  };
  return keys;
}

class Overrides {
 public:
  explicit Overrides(const std::map<std::string, std::string>& m) : m_(m) {
    for (const auto& [k, v] : m)
      if (!allowed_override_keys().count(k)) fail(Errc::InvalidConfig, "unknown override key '" + k + "'");
  }

  bool has(const std::string& k) const { return m_.count(k) > 0; }

  std::string gets(const std::string& k, const std::string& def) const {
    const auto it = m_.find(k);
    return it == m_.end() ? def : it->second;
  }

  int geti(const std::string& k, int def) const {
    const auto it = m_.find(k);
    if (it == m_.end()) return def;
    int v = 0;
    const auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (res.ec != std::errc{} || res.ptr != it->second.data() + it->second.size())
      fail(Errc::InvalidConfig, "override " + k + ": bad integer '" + it->second + "'");
    return v;
  }

  double getd(const std::string& k, double def) const {
    const auto it = m_.find(k);
    if (it == m_.end()) return def;
    double v = 0.0;
    const auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (res.ec != std::errc{} || res.ptr != it->second.data() + it->second.size())
      fail(Errc::InvalidConfig, "override " + k + ": bad number '" + it->second + "'");
    return v;
  }

  std::vector<int> get_int_list(const std::string& k, std::vector<int> def) const {
    const auto it = m_.find(k);
    if (it == m_.end()) return def;
    std::vector<int> out;
    std::size_t start = 0;
    const std::string& s = it->second;
    while (start <= s.size()) {
      std::size_t comma = s.find(',', start);
      if (comma == std::string::npos) comma = s.size();
      int v = 0;
      const auto res = std::from_chars(s.data() + start, s.data() + comma, v);
      if (res.ec != std::errc{} || res.ptr != s.data() + comma)
        fail(Errc::InvalidConfig, "override " + k + ": bad list '" + s + "'");
      out.push_back(v);
      start = comma + 1;
    }
    if (out.empty()) fail(Errc::InvalidConfig, "override " + k + " is empty");
    return out;
  }

  std::vector<double> get_double_list(const std::string& k, std::vector<double> def) const {
    const auto it = m_.find(k);
    if (it == m_.end()) return def;
    std::vector<double> out;
    std::size_t start = 0;
    const std::string& s = it->second;
    while (start <= s.size()) {
      std::size_t comma = s.find(',', start);
      if (comma == std::string::npos) comma = s.size();
      double v = 0.0;
      const auto res = std::from_chars(s.data() + start, s.data() + comma, v);
      if (res.ec != std::errc{} || res.ptr != s.data() + comma)
        fail(Errc::InvalidConfig, "override " + k + ": bad list '" + s + "'");
      out.push_back(v);
      start = comma + 1;
    }
    if (out.empty()) fail(Errc::InvalidConfig, "override " + k + " is empty");
    return out;
  }

 private:
  const std::map<std::string, std::string>& m_;
};

json subset_json(const SubsetMask& m) {
  json a = json::array();
  for (int i : m.indices()) a.push_back(i);
  return a;
}

// ---------------------------------------------------------------------------
// Estimator-style presets (generated designs, search, held-out evaluation)

struct DgPresetSpec {
  DgGenConfig base;  // d_tasks and seed filled per unit
  std::vector<int> d_list;
  int reps = 0;
  double level = 0.05;
  TestKind test = TestKind::Hsic;
  bool greedy = false;
  int lasso_k = 0;  // 0: no screening
  double train_fraction = 0.5;
  int greedy_iters = 0;
  std::optional<int> max_subset_size;
  Eigen::Index eval_rows = 100000;
  bool mtl_roster = false;
  std::optional<double> bandwidth;
  double em_tol = 1e-8;
  int em_max_iter = 500;
};

DgPresetSpec base_spec_for(const std::string& preset) {
  DgPresetSpec s;
  if (preset == "dg_full") {
    s.base.s_size = 4;
    s.base.n_size = 4;
    s.base.n_per_task = 1000;
    s.base.n_test_labeled = 0;
    s.d_list = {2, 3, 4, 5, 6};
    s.reps = 50;
  } else if (preset == "dg_sparse_lasso") {
    s.base.s_size = 4;
    s.base.n_size = 4;
    s.base.noise_size = 32;
    s.base.n_per_task = 500;
    s.base.n_test_labeled = 0;
    s.d_list = {2, 4, 6};
    s.reps = 20;
    s.lasso_k = 10;
  } else if (preset == "dg_greedy_large") {
    s.base.s_size = 20;
    s.base.n_size = 20;
    s.base.n_per_task = 500;
    s.base.n_test_labeled = 0;
    s.base.eps_std = 6.0;
    s.d_list = {2, 4, 6};
    s.reps = 20;
    s.greedy = true;
  } else if (preset == "amtl") {
    s.base.s_size = 3;
    s.base.n_size = 3;
    s.base.n_per_task = 300;
    s.base.n_test_labeled = 50;
    s.base.n_test_unlabeled = 100;
    s.base.gamma_dist = GammaDist{GammaDistKind::Uniform, 0.0, 1.5};
    s.d_list = {2};
    s.reps = 200;
    s.mtl_roster = true;
  } else if (preset == "smtl") {
    s.base.s_size = 3;
    s.base.n_size = 3;
    s.base.n_per_task = 50;
    s.base.n_test_labeled = 50;
    s.base.n_test_unlabeled = 100;
    s.base.gamma_dist = GammaDist{GammaDistKind::Uniform, 0.0, 1.5};
    s.d_list = {4};
    s.reps = 50;
    s.mtl_roster = true;
  } else {
    fail(Errc::InvalidConfig, "unknown preset '" + preset + "'");
  }
  return s;
}

DgPresetSpec apply_overrides(DgPresetSpec s, const Overrides& ov) {
  s.base.s_size = ov.geti("s_size", s.base.s_size);
  s.base.n_size = ov.geti("n_size", s.base.n_size);
  s.base.noise_size = ov.geti("noise_size", s.base.noise_size);
  s.base.n_per_task = ov.geti("n_per_task", s.base.n_per_task);
  s.base.n_test_labeled = ov.geti("n_test_labeled", s.base.n_test_labeled);
  s.base.n_test_unlabeled = ov.geti("n_test_unlabeled", s.base.n_test_unlabeled);
  s.base.eps_std = ov.getd("eps_std", s.base.eps_std);
  if (ov.has("gamma")) s.base.gamma_dist = parse_gamma_dist(ov.gets("gamma", ""));
  if (ov.has("d_tasks"))
    s.d_list = {ov.geti("d_tasks", 0)};
  else
    s.d_list = ov.get_int_list("d_list", s.d_list);
  s.level = ov.getd("delta", s.level);
  const std::string test = ov.gets("test", s.test == TestKind::Hsic ? "hsic" : "levene");
  if (test == "hsic")
    s.test = TestKind::Hsic;
  else if (test == "levene")
    s.test = TestKind::Levene;
  else
    fail(Errc::InvalidConfig, "test must be hsic or levene");
  const std::string mode = ov.gets("mode", s.greedy ? "greedy" : "full");
  if (mode == "greedy")
    s.greedy = true;
  else if (mode == "full")
    s.greedy = false;
  else
    fail(Errc::InvalidConfig, "mode must be full or greedy");
  s.lasso_k = ov.geti("lasso_k", s.lasso_k);
  s.train_fraction = ov.getd("train_fraction", s.train_fraction);
  s.greedy_iters = ov.geti("greedy_iters", s.greedy_iters);
  if (ov.has("max_subset_size")) s.max_subset_size = ov.geti("max_subset_size", 0);
  s.eval_rows = ov.geti("eval_rows", static_cast<int>(s.eval_rows));
  if (ov.has("bandwidth")) s.bandwidth = ov.getd("bandwidth", 0.0);
  s.em_tol = ov.getd("em_tol", s.em_tol);
  s.em_max_iter = ov.geti("em_max_iter", s.em_max_iter);
  if (ov.has("setting")) {
    const std::string setting = ov.gets("setting", "");
    if (setting == "mtl")
      s.mtl_roster = true;
    else if (setting == "dg")
      s.mtl_roster = false;
    else
      fail(Errc::InvalidConfig, "setting must be dg or mtl");
  }
  return s;
}

json spec_config_json(const DgPresetSpec& s) {
  json c;
  c["s_size"] = s.base.s_size;
  c["n_size"] = s.base.n_size;
  c["noise_size"] = s.base.noise_size;
  c["n_per_task"] = s.base.n_per_task;
  c["n_test_labeled"] = s.base.n_test_labeled;
  c["n_test_unlabeled"] = s.base.n_test_unlabeled;
  c["eps_std"] = s.base.eps_std;
  c["gamma"] = gamma_dist_string(s.base.gamma_dist);
  c["d_list"] = s.d_list;
  c["delta"] = s.level;
  c["test"] = s.test == TestKind::Hsic ? "hsic" : "levene";
  c["mode"] = s.greedy ? "greedy" : "full";
  c["lasso_k"] = s.lasso_k;
  c["train_fraction"] = s.train_fraction;
  c["greedy_iters"] = s.greedy_iters;
  c["eval_rows"] = static_cast<std::int64_t>(s.eval_rows);
  c["setting"] = s.mtl_roster ? "mtl" : "dg";
  c["em_tol"] = s.em_tol;
  c["em_max_iter"] = s.em_max_iter;
  if (s.bandwidth) c["bandwidth"] = *s.bandwidth;
  if (s.max_subset_size) c["max_subset_size"] = *s.max_subset_size;
  return c;
}

// Dataset restricted to the columns of `mask` (in mask order).
MultiTaskDataset reduce_features(const MultiTaskDataset& ds, const SubsetMask& mask) {
  MultiTaskDataset out;
  out.p = static_cast<int>(mask.size());
  out.test_task_id = ds.test_task_id;
  if (ds.feature_names) {
    std::vector<std::string> names;
    for (int i : mask.indices()) names.push_back((*ds.feature_names)[static_cast<std::size_t>(i - 1)]);
    out.feature_names = std::move(names);
  }
  const auto cols = mask.columns();
  for (const auto& t : ds.tasks) {
    TaskSample r;
    r.task_id = t.task_id;
    r.targets = t.targets;
    r.features.resize(t.rows(), out.p);
    for (std::size_t j = 0; j < cols.size(); ++j)
      r.features.col(static_cast<Eigen::Index>(j)) = t.features.col(cols[j]);
    out.tasks.push_back(std::move(r));
  }
  return out;
}

SubsetMask map_back(const SubsetMask& reduced, const SubsetMask& screen) {
  std::vector<int> idx;
  for (int i : reduced.indices()) idx.push_back(screen.indices()[static_cast<std::size_t>(i - 1)]);
  return SubsetMask(std::move(idx));
}

struct UnitOutput {
  std::vector<json> records;
  double elapsed_ms = 0.0;
  std::string name;
};

UnitOutput run_dg_unit(const DgPresetSpec& spec, int d, int rep, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  UnitOutput out;
  const std::string group = "d=" + std::to_string(d);
  out.name = group + "/rep=" + std::to_string(rep);

  DgGenConfig g = spec.base;
  g.d_tasks = d;
  if (spec.mtl_roster && g.n_test_labeled == 0) g.n_test_labeled = g.n_per_task;
  g.seed = derive_seed(seed, {10, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(rep)});
  const DgInstance inst = gen_dg_tasks(g);
  const int p = inst.params.p;
  const int test_id = d + 1;
  const MultiTaskDataset train =
      inst.dataset.test_task_id ? training_view(inst.dataset) : inst.dataset;

  SearchConfig sc;
  sc.level = spec.level;
  sc.test_kind = spec.test;
  sc.rule = SelectionRule::Dg;
  sc.split.train_fraction = spec.train_fraction;
  sc.split.seed = derive_seed(seed, {11, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(rep)});
  sc.kernel.bandwidth = spec.bandwidth;
  sc.greedy_iters = spec.greedy_iters;
  sc.max_subset_size = spec.max_subset_size;
  sc.workers = 1;  // units are already parallel

  SubsetMask screened;
  SearchResult sr;
  SubsetMask chosen;
  std::vector<AcceptedSubset> accepted_full;  // in original feature indexing
  if (spec.lasso_k > 0) {
    screened = lasso_screen(train, spec.lasso_k);
    if (screened.empty()) {
      sr.chosen = SubsetMask{};
    } else {
      const MultiTaskDataset reduced = reduce_features(inst.dataset, screened);
      sr = spec.greedy ? greedy_subset_search(reduced, sc) : full_subset_search(reduced, sc);
    }
    chosen = map_back(sr.chosen, screened);
    for (const auto& a : sr.accepted) accepted_full.push_back({map_back(a.subset, screened), a.p_value, a.validation_mse});
  } else {
    sr = spec.greedy ? greedy_subset_search(inst.dataset, sc) : full_subset_search(inst.dataset, sc);
    chosen = sr.chosen;
    accepted_full = sr.accepted;
  }

  // Fresh draw from the held-out task's law for the error estimates.
  Eigen::MatrixXd ex;
  Eigen::VectorXd ey;
  Rng erng(derive_seed(seed, {12, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(rep)}));
  sample_dg_rows(inst.params, inst.params.tasks.size() - 1, spec.eval_rows, erng, ex, ey);

  const PooledGram gram = pooled_gram(train);
  auto emit = [&](const std::string& name, const std::function<LinearPredictor()>& fitter,
                  const SubsetMask* chosen_subset) {
    json rec;
    rec["rep"] = rep;
    rec["group"] = group;
    rec["estimator"] = name;
    try {
      const LinearPredictor f = fitter();
      const double mse = (ey - f.predict(ex)).squaredNorm() / static_cast<double>(ey.size());
      rec["test_mse"] = mse;
      rec["log_mse"] = std::log(mse);
      if (chosen_subset) rec["chosen_subset"] = subset_json(*chosen_subset);
    } catch (const Error& e) {
      rec["failed"] = true;
      rec["error"] = e.what();
    }
    out.records.push_back(std::move(rec));
  };

  const SubsetMask cau = inst.params.causal_subset();
  emit("beta_cs_cau", [&] { return ols_from_gram(gram, cau); }, nullptr);
  emit("beta_cs_shat", [&] { return ols_from_gram(gram, chosen); }, &chosen);
  emit("beta_cs", [&] { return ols_from_gram(gram, SubsetMask::full(p)); }, nullptr);
  emit("beta_mean", [&] { return ols_from_gram(gram, SubsetMask{}); }, nullptr);

  if (spec.mtl_roster) {
    EmOptions em;
    em.tol = spec.em_tol;
    em.max_iter = spec.em_max_iter;
    SubsetMask chosen_mtl;
    bool have_chosen_mtl = false;
    emit("beta_dom", [&] { return fit_domain_only(inst.dataset, test_id); }, nullptr);
    emit("beta_shat_sharp",
         [&] {
           chosen_mtl = select_rule_mtl(accepted_full, inst.dataset, test_id, em);
           have_chosen_mtl = true;
           return em_fit(inst.dataset, chosen_mtl, test_id, em).predictor;
         },
         nullptr);
    if (have_chosen_mtl) out.records.back()["chosen_subset"] = subset_json(chosen_mtl);
    emit("beta_cau_sharp", [&] { return em_fit(inst.dataset, cau, test_id, em).predictor; }, nullptr);
    if (spec.base.n_test_unlabeled > 0) {
      EmOptions em_ul = em;
      em_ul.use_unlabeled = true;
      emit("beta_cau_sharp_ul", [&] { return em_fit(inst.dataset, cau, test_id, em_ul).predictor; },
           nullptr);
    }
  }

  out.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void append_summary(json& body, const std::vector<std::string>& groups,
                    const std::vector<std::string>& estimators, const std::string& baseline) {
  json summary = json::array();
  for (const auto& group : groups) {
    // Baseline errors by rep for the win fractions.
    std::map<int, double> base_mse;
    for (const auto& rec : body["records"]) {
      if (rec["group"] != group || rec["estimator"] != baseline || rec.contains("failed")) continue;
      base_mse[rec["rep"].get<int>()] = rec["test_mse"].get<double>();
    }
    for (const auto& est : estimators) {
      std::vector<double> mses;
      std::vector<std::pair<int, double>> by_rep;
      for (const auto& rec : body["records"]) {
        if (rec["group"] != group || rec["estimator"] != est || rec.contains("failed")) continue;
        mses.push_back(rec["test_mse"].get<double>());
        by_rep.push_back({rec["rep"].get<int>(), rec["test_mse"].get<double>()});
      }
      json row;
      row["group"] = group;
      row["estimator"] = est;
      row["n"] = mses.size();
      if (!mses.empty()) {
        double mean = 0.0, mean_log = 0.0;
        for (double v : mses) {
          mean += v;
          mean_log += std::log(v);
        }
        mean /= static_cast<double>(mses.size());
        mean_log /= static_cast<double>(mses.size());
        double var = 0.0;
        for (double v : mses) var += (v - mean) * (v - mean);
        var /= static_cast<double>(mses.size());
        std::vector<double> sorted = mses;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        const double median =
            sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        row["mean_mse"] = mean;
        row["median_mse"] = median;
        row["std_mse"] = std::sqrt(var);
        row["mean_log_mse"] = mean_log;
        if (est != baseline) {
          int wins = 0, pairs = 0;
          for (const auto& [rep, v] : by_rep) {
            const auto it = base_mse.find(rep);
            if (it == base_mse.end()) continue;
            ++pairs;
            if (v < it->second) ++wins;
          }
          if (pairs > 0)
            row["win_fraction"] = static_cast<double>(wins) / static_cast<double>(pairs);
        }
      }
      summary.push_back(std::move(row));
    }
  }
  body["summary"] = std::move(summary);
}

Report run_dg_style(const std::string& preset, const std::string& base_preset,
                    const ExperimentConfig& cfg, const Overrides& ov) {
  DgPresetSpec spec = apply_overrides(base_spec_for(base_preset), ov);
  if (cfg.reps > 0) spec.reps = cfg.reps;
  if (spec.reps < 1) fail(Errc::InvalidConfig, "reps must be >= 1");
  if (spec.mtl_roster && spec.lasso_k > 0)
    fail(Errc::InvalidConfig, "lasso screening is not supported with the mtl roster");

  const std::size_t units = spec.d_list.size() * static_cast<std::size_t>(spec.reps);
  std::vector<UnitOutput> results(units);
  const int workers = resolve_workers(cfg.workers);
  parallel_for(units, workers, [&](std::size_t u, std::size_t) {
    const int d = spec.d_list[u / static_cast<std::size_t>(spec.reps)];
    const int rep = static_cast<int>(u % static_cast<std::size_t>(spec.reps));
    results[u] = run_dg_unit(spec, d, rep, cfg.seed);
  });

  Report rep;
  json& body = rep.body;
  body["schema_version"] = 1;
  body["preset"] = preset;
  body["kind"] = "estimators";
  body["seed"] = cfg.seed;
  body["reps"] = spec.reps;
  body["config"] = spec_config_json(spec);
  const std::string baseline = spec.mtl_roster ? "beta_dom" : "beta_cs";
  body["baseline"] = baseline;

  std::vector<std::string> groups;
  for (int d : spec.d_list) groups.push_back("d=" + std::to_string(d));
  body["groups"] = groups;

  json records = json::array();
  std::vector<std::string> estimators;
  rep.timings_csv = "unit,elapsed_ms\n";
  for (const auto& r : results) {
    for (const auto& rec : r.records) {
      const std::string est = rec["estimator"].get<std::string>();
      if (std::find(estimators.begin(), estimators.end(), est) == estimators.end())
        estimators.push_back(est);
      records.push_back(rec);
    }
    rep.timings_csv += r.name + "," + format_double(r.elapsed_ms) + "\n";
  }
  body["records"] = std::move(records);
  append_summary(body, groups, estimators, baseline);
  return rep;
}

// ---------------------------------------------------------------------------
// Closed-form error curve preset

Report run_curve(const std::string& preset, const ExperimentConfig& cfg, const Overrides& ov) {
  const int reps = cfg.reps > 0 ? cfg.reps : 2000;
  const int d_tasks = ov.geti("d_tasks", 2);
  const int grid_points = ov.geti("grid_points", 37);
  const double grid_lo = ov.getd("grid_lo", -8.0);  // log10 of the coupling variance
  const double grid_hi = ov.getd("grid_hi", 1.0);
  const double sigma_eps = ov.getd("sigma_eps", 1.0);
  const std::vector<double> alpha_list = ov.get_double_list("alpha", {});
  const std::vector<double> sigma_x_list = ov.get_double_list("sigma_x", {});
  if (reps < 1 || grid_points < 2 || d_tasks < 1) fail(Errc::InvalidConfig, "bad curve parameters");

  std::vector<double> grid(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i)
    grid[static_cast<std::size_t>(i)] =
        std::pow(10.0, grid_lo + (grid_hi - grid_lo) * static_cast<double>(i) /
                                     static_cast<double>(grid_points - 1));

  std::vector<double> acc_pooled(grid.size(), 0.0), acc_inv(grid.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    Rng rng = Rng::from_path(cfg.seed, {20, static_cast<std::uint64_t>(r)});
    ThreeNodeConfig tc;
    const int s = alpha_list.empty() ? 1 : static_cast<int>(alpha_list.size());
    tc.alpha.resize(s);
    tc.sigma_x.resize(s);
    for (int j = 0; j < s; ++j) {
      tc.alpha[j] = alpha_list.empty() ? rng.uniform(-1.0, 2.5) : alpha_list[static_cast<std::size_t>(j)];
      tc.sigma_x[j] = sigma_x_list.empty() ? std::sqrt(rng.uniform(0.5, 1.5))
                                           : sigma_x_list[static_cast<std::size_t>(j)];
    }
    tc.sigma_eps = sigma_eps;
    tc.sigma_eta = ov.has("sigma_eta") ? ov.getd("sigma_eta", 1.0) : std::sqrt(rng.uniform(0.5, 1.5));
    tc.d_tasks = d_tasks;
    std::vector<double> g(static_cast<std::size_t>(d_tasks));
    for (auto& v : g) v = rng.normal();

    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double s2 = grid[i];
      std::vector<double> gammas(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) gammas[k] = std::sqrt(s2) * g[k];
      const auto [beta_x, beta_z] = pooled_coefficients_closed_form(gammas, tc);
      acc_pooled[i] += expected_test_error_gamma_moments(beta_x, beta_z, 0.0, s2, tc);
      acc_inv[i] += expected_test_error_gamma_moments(tc.alpha, 0.0, 0.0, s2, tc);
    }
  }

  Report rep;
  json& body = rep.body;
  body["schema_version"] = 1;
  body["preset"] = preset;
  body["kind"] = "curve";
  body["seed"] = cfg.seed;
  body["reps"] = reps;
  json c;
  c["d_tasks"] = d_tasks;
  c["grid_points"] = grid_points;
  c["grid_lo"] = grid_lo;
  c["grid_hi"] = grid_hi;
  c["sigma_eps"] = sigma_eps;
  body["config"] = c;
  json records = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    json row;
    row["sigma2"] = grid[i];
    row["err_pooled"] = acc_pooled[i] / static_cast<double>(reps);
    row["err_invariant"] = acc_inv[i] / static_cast<double>(reps);
    records.push_back(std::move(row));
  }
  body["records"] = records;
  body["summary"] = std::move(records);
  rep.timings_csv = "unit,elapsed_ms\n";
  return rep;
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
  const Overrides ov(cfg.overrides);
  if (cfg.preset == "fig2_closed_form") return run_curve(cfg.preset, cfg, ov);
  if (cfg.preset == "custom") {
    const std::string design = ov.gets("design", "");
    if (design == "three_node") return run_curve(cfg.preset, cfg, ov);
    if (design == "dg") return run_dg_style(cfg.preset, "dg_full", cfg, ov);
    fail(Errc::InvalidConfig, "custom preset requires design=dg or design=three_node");
  }
  return run_dg_style(cfg.preset, cfg.preset, cfg, ov);
}

std::string summary_csv(const nlohmann::json& body) {
  std::string out;
  if (body.at("kind") == "curve") {
    out = "sigma2,err_pooled,err_invariant\n";
    for (const auto& row : body.at("summary"))
      out += format_double(row.at("sigma2").get<double>()) + "," +
             format_double(row.at("err_pooled").get<double>()) + "," +
             format_double(row.at("err_invariant").get<double>()) + "\n";
    return out;
  }
  out = "group,estimator,n,mean_mse,median_mse,std_mse,mean_log_mse,win_fraction\n";
  for (const auto& row : body.at("summary")) {
    out += row.at("group").get<std::string>() + "," + row.at("estimator").get<std::string>() + "," +
           std::to_string(row.at("n").get<std::size_t>());
    for (const char* key : {"mean_mse", "median_mse", "std_mse", "mean_log_mse", "win_fraction"}) {
      out += ",";
      if (row.contains(key)) out += format_double(row.at(key).get<double>());
    }
    out += "\n";
  }
  return out;
}

void write_report_files(const Report& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  atomic_write_text((fs::path(out_dir) / "report.json").string(), report.body.dump(2) + "\n");
  atomic_write_text((fs::path(out_dir) / "summary.csv").string(), summary_csv(report.body));
  atomic_write_text((fs::path(out_dir) / "timings.csv").string(), report.timings_csv);
}

}  // namespace invtrans
