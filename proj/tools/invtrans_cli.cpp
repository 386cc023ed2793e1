// Command line front end: dataset generation, invariant subset search,
// missing-data model fitting, and the batch experiment harness.

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "invtrans/csv.hpp"
#include "invtrans/dataset.hpp"
#include "invtrans/experiment.hpp"
#include "invtrans/mtl.hpp"
#include "invtrans/search.hpp"
#include "invtrans/synthetic.hpp"

namespace {

using invtrans::Errc;
using invtrans::fail;
using nlohmann::json;

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start < s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    int v = 0;
    const auto res = std::from_chars(s.data() + start, s.data() + comma, v);
    if (res.ec != std::errc{} || res.ptr != s.data() + comma)
      fail(Errc::InvalidConfig, "bad integer list '" + s + "'");
    out.push_back(v);
    start = comma + 1;
  }
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ParseError, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, path + ": " + e.what());
  }
  return j;
}

void emit_json(const json& j, const std::string& out_path) {
  if (out_path.empty())
    std::cout << j.dump(2) << "\n";
  else
    invtrans::atomic_write_text(out_path, j.dump(2) + "\n");
}

json subset_json(const invtrans::SubsetMask& m) {
  json a = json::array();
  for (int i : m.indices()) a.push_back(i);
  return a;
}

int run_gen(const std::string& config_path, std::uint64_t seed, bool seed_given,
            const std::string& out_path) {
  const json cfg = load_json_file(config_path);
  const std::string design = cfg.value("design", "");
  invtrans::MultiTaskDataset ds;
  std::string extras;
  if (design == "dg") {
    invtrans::DgGenConfig g;
    g.s_size = cfg.value("s_size", g.s_size);
    g.n_size = cfg.value("n_size", g.n_size);
    g.noise_size = cfg.value("noise_size", g.noise_size);
    g.d_tasks = cfg.value("d_tasks", g.d_tasks);
    g.n_per_task = cfg.value("n_per_task", g.n_per_task);
    g.n_test_labeled = cfg.value("n_test_labeled", g.n_test_labeled);
    g.n_test_unlabeled = cfg.value("n_test_unlabeled", g.n_test_unlabeled);
    g.eps_std = cfg.value("eps_std", g.eps_std);
    if (cfg.contains("gamma")) g.gamma_dist = invtrans::parse_gamma_dist(cfg.at("gamma").get<std::string>());
    g.seed = cfg.value("seed", std::uint64_t{0});
    if (seed_given) g.seed = seed;
    const auto inst = invtrans::gen_dg_tasks(g);
    ds = inst.dataset;
    extras = " causal_subset=" + inst.params.causal_subset().to_string();
  } else if (design == "three_node") {
    invtrans::ThreeNodeConfig t;
    const auto alpha = cfg.value("alpha", std::vector<double>{1.0});
    const auto sigma_x = cfg.value("sigma_x", std::vector<double>(alpha.size(), 1.0));
    t.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    t.sigma_x =
        Eigen::Map<const Eigen::VectorXd>(sigma_x.data(), static_cast<Eigen::Index>(sigma_x.size()));
    t.sigma_eps = cfg.value("sigma_eps", t.sigma_eps);
    t.sigma_eta = cfg.value("sigma_eta", t.sigma_eta);
    t.gamma_mean = cfg.value("gamma_mean", t.gamma_mean);
    t.gamma_var = cfg.value("gamma_var", t.gamma_var);
    t.d_tasks = cfg.value("d_tasks", t.d_tasks);
    t.n_per_task = cfg.value("n_per_task", t.n_per_task);
    t.n_test = cfg.value("n_test", t.n_test);
    t.seed = cfg.value("seed", std::uint64_t{0});
    if (seed_given) t.seed = seed;
    ds = invtrans::gen_three_node(t).dataset;
  } else {
    fail(Errc::InvalidConfig, "config must set design to dg or three_node");
  }
  invtrans::write_csv(ds, out_path);
  std::size_t rows = 0;
  for (const auto& t : ds.tasks) rows += static_cast<std::size_t>(t.rows());
  std::cout << "wrote " << out_path << ": p=" << ds.p << " partitions=" << ds.tasks.size()
            << " rows=" << rows
            << " test_task=" << (ds.test_task_id ? std::to_string(*ds.test_task_id) : "none")
            << extras << "\n";
  return 0;
}

json evaluation_json(const invtrans::SubsetEvaluation& ev) {
  json e;
  e["subset"] = subset_json(ev.subset);
  if (ev.failed) {
    e["failed"] = true;
    e["error"] = ev.error;
    return e;
  }
  e["statistic"] = ev.statistic;
  e["p_value"] = ev.p_value;
  e["validation_mse"] = ev.validation_mse;
  e["accepted"] = ev.accepted;
  return e;
}

int run_search(const std::string& data_path, std::optional<int> test_task, const std::string& mode,
               const std::string& test, const std::string& rule, invtrans::SearchConfig sc,
               const std::string& out_path) {
  invtrans::MultiTaskDataset ds = invtrans::load_csv(data_path);
  if (test_task) {
    ds.test_task_id = *test_task;
    invtrans::validate_dataset(ds);
  }
  if (test == "hsic")
    sc.test_kind = invtrans::TestKind::Hsic;
  else if (test == "levene")
    sc.test_kind = invtrans::TestKind::Levene;
  else
    fail(Errc::InvalidConfig, "--test must be hsic or levene");
  if (rule == "dg")
    sc.rule = invtrans::SelectionRule::Dg;
  else if (rule == "mtl")
    sc.rule = invtrans::SelectionRule::Mtl;
  else
    fail(Errc::InvalidConfig, "--rule must be dg or mtl");

  invtrans::SearchResult res;
  if (mode == "full")
    res = invtrans::full_subset_search(ds, sc);
  else if (mode == "greedy")
    res = invtrans::greedy_subset_search(ds, sc);
  else
    fail(Errc::InvalidConfig, "--mode must be full or greedy");

  json j;
  j["chosen_subset"] = subset_json(res.chosen);
  json acc = json::array();
  for (const auto& a : res.accepted) {
    json e;
    e["subset"] = subset_json(a.subset);
    e["p_value"] = a.p_value;
    e["validation_mse"] = a.validation_mse;
    acc.push_back(std::move(e));
  }
  j["accepted"] = std::move(acc);
  j["evaluated"] = res.evaluated_count;
  json log = json::array();
  for (const auto& ev : res.log) log.push_back(evaluation_json(ev));
  j["log"] = std::move(log);
  emit_json(j, out_path);
  return 0;
}

int run_mtl_fit(const std::string& data_path, int test_task, const std::string& subset_str,
                const invtrans::EmOptions& em, const std::string& out_path) {
  invtrans::MultiTaskDataset ds = invtrans::load_csv(data_path);
  ds.test_task_id = test_task;
  invtrans::validate_dataset(ds);
  const invtrans::SubsetMask subset(parse_int_list(subset_str));
  const auto fit = invtrans::em_fit(ds, subset, test_task, em);
  json j;
  j["subset"] = subset_json(subset);
  json coef = json::array();
  for (Eigen::Index i = 0; i < fit.predictor.coefficients.size(); ++i)
    coef.push_back(fit.predictor.coefficients[i]);
  j["coefficients"] = std::move(coef);
  j["intercept"] = fit.predictor.intercept;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  json trace = json::array();
  for (double v : fit.model.loglik_trace) trace.push_back(v);
  j["loglik"] = std::move(trace);
  emit_json(j, out_path);
  return 0;
}

int run_experiment_cmd(const invtrans::ExperimentConfig& cfg, const std::string& out_dir) {
  const invtrans::Report rep = invtrans::run_experiment(cfg);
  invtrans::write_report_files(rep, out_dir);
  std::cout << "wrote " << out_dir << "/report.json, summary.csv, timings.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant-subset transfer learning toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic multi-task dataset as CSV");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "JSON design config")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Generator seed (overrides config)");
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  // search
  auto* search = app.add_subcommand("search", "Find invariance-accepted feature subsets");
  std::string s_data, s_mode = "full", s_test = "hsic", s_rule = "dg", s_out;
  int s_test_task = 0, s_max_size = 0, s_greedy_iters = 0, s_workers = 0;
  double s_delta = 0.05, s_train_fraction = 0.5, s_bandwidth = 0.0;
  std::uint64_t s_split_seed = 0;
  search->add_option("--data", s_data, "Input CSV dataset")->required();
  auto* s_test_task_opt = search->add_option("--test-task", s_test_task, "Held-out task id");
  search->add_option("--mode", s_mode, "full or greedy");
  search->add_option("--test", s_test, "hsic or levene");
  search->add_option("--rule", s_rule, "Selection rule: dg or mtl");
  search->add_option("--delta", s_delta, "Acceptance level");
  search->add_option("--train-fraction", s_train_fraction, "Per-task training fraction");
  search->add_option("--split-seed", s_split_seed, "Train/validation split seed");
  auto* s_max_size_opt = search->add_option("--max-subset-size", s_max_size, "Cardinality cap");
  search->add_option("--greedy-iters", s_greedy_iters, "Greedy iteration cap (0: 2p)");
  auto* s_bw_opt = search->add_option("--bandwidth", s_bandwidth, "Fixed kernel width sigma");
  search->add_option("--workers", s_workers, "Worker threads (0: auto)");
  search->add_option("--out", s_out, "Output JSON path (default stdout)");

  // mtl-fit
  auto* mtl = app.add_subcommand("mtl-fit", "Fit the joint Gaussian model by EM and predict");
  std::string m_data, m_subset, m_out;
  int m_test_task = 0;
  invtrans::EmOptions m_em;
  mtl->add_option("--data", m_data, "Input CSV dataset")->required();
  mtl->add_option("--test-task", m_test_task, "Test task id")->required();
  mtl->add_option("--subset", m_subset, "Invariant subset, e.g. 1,3 (empty: none)");
  mtl->add_flag("--use-unlabeled", m_em.use_unlabeled, "Include unlabeled test rows");
  mtl->add_option("--tol", m_em.tol, "Log-likelihood convergence tolerance");
  mtl->add_option("--max-iter", m_em.max_iter, "Iteration cap");
  mtl->add_option("--out", m_out, "Output JSON path (default stdout)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a batch experiment preset");
  invtrans::ExperimentConfig e_cfg;
  std::string e_out_dir;
  std::vector<std::string> e_sets;
  exp->add_option("--preset,--name", e_cfg.preset, "Preset name")->required();
  exp->add_option("--reps", e_cfg.reps, "Repetitions (0: preset default)");
  exp->add_option("--seed", e_cfg.seed, "Master seed");
  exp->add_option("--workers", e_cfg.workers, "Worker threads (0: auto)");
  exp->add_option("--out-dir", e_out_dir, "Output directory")->required();
  exp->add_option("--set", e_sets, "Override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen(gen_config, gen_seed, gen_seed_opt->count() > 0, gen_out);
    if (search->parsed()) {
      invtrans::SearchConfig sc;
      sc.level = s_delta;
      sc.split.train_fraction = s_train_fraction;
      sc.split.seed = s_split_seed;
      if (s_max_size_opt->count() > 0) sc.max_subset_size = s_max_size;
      sc.greedy_iters = s_greedy_iters;
      if (s_bw_opt->count() > 0) sc.kernel.bandwidth = s_bandwidth;
      sc.workers = s_workers;
      std::optional<int> tt;
      if (s_test_task_opt->count() > 0) tt = s_test_task;
      return run_search(s_data, tt, s_mode, s_test, s_rule, sc, s_out);
    }
    if (mtl->parsed()) return run_mtl_fit(m_data, m_test_task, m_subset, m_em, m_out);
    if (exp->parsed()) {
      for (const auto& kv : e_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
          fail(Errc::InvalidConfig, "--set expects key=value, got '" + kv + "'");
        e_cfg.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      return run_experiment_cmd(e_cfg, e_out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
