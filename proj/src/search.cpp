#include "invtrans/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "invtrans/dataset.hpp"
#include "invtrans/parallel.hpp"

namespace invtrans {

namespace {

// Fixed split, training-half Gram and pooled validation rows shared by every
// subset evaluation of one search run.
struct EvalContext {
  PooledGram gram;
  Eigen::MatrixXd val_x;
  Eigen::VectorXd val_y;
  std::vector<int> val_tasks;
  const SearchConfig* cfg = nullptr;
};

EvalContext make_context(const MultiTaskDataset& ds, const SearchConfig& cfg) {
  if (!(cfg.level >= 0.0 && cfg.level <= 1.0)) fail(Errc::InvalidConfig, "level must lie in [0, 1]");
  MultiTaskDataset view = ds.test_task_id ? training_view(ds) : ds;
  int labeled_tasks = 0;
  for (const auto& t : view.tasks)
    if (t.labeled()) ++labeled_tasks;
  if (labeled_tasks < 2) fail(Errc::SingleTask, "need at least 2 labeled training tasks");

  auto [train, val] = split_train_validation(view, cfg.split);

  EvalContext ctx;
  ctx.cfg = &cfg;
  ctx.gram = pooled_gram(train);
  Eigen::Index n_val = val.labeled_rows();
  ctx.val_x.resize(n_val, ds.p);
  ctx.val_y.resize(n_val);
  ctx.val_tasks.reserve(static_cast<std::size_t>(n_val));
  Eigen::Index at = 0;
  for (const auto& t : val.tasks) {
    ctx.val_x.middleRows(at, t.rows()) = t.features;
    ctx.val_y.segment(at, t.rows()) = *t.targets;
    ctx.val_tasks.insert(ctx.val_tasks.end(), static_cast<std::size_t>(t.rows()), t.task_id);
    at += t.rows();
  }
  return ctx;
}

SubsetEvaluation evaluate_subset(const EvalContext& ctx, SubsetMask subset, HsicWorkspace& ws) {
  SubsetEvaluation ev;
  ev.subset = std::move(subset);
  try {
    const LinearPredictor f = ols_from_gram(ctx.gram, ev.subset);
    ResidualSample rs;
    rs.residuals = ctx.val_y - f.predict(ctx.val_x);
    rs.task_ids = ctx.val_tasks;
    ev.validation_mse = rs.residuals.squaredNorm() / static_cast<double>(rs.residuals.size());
    const TestOutcome outcome = ctx.cfg->test_kind == TestKind::Hsic
                                    ? hsic_d_sample_test(rs, ctx.cfg->kernel, ctx.cfg->level, ws)
                                    : levene_test(rs, ctx.cfg->level);
    ev.statistic = outcome.statistic;
    ev.p_value = outcome.p_value;
    ev.accepted = outcome.accepted;
  } catch (const Error& e) {
    ev.failed = true;
    ev.error = e.what();
  }
  return ev;
}

// All c-subsets of {1..p} in lexicographic order, flattened.
void combinations(int p, int c, std::vector<int>& flat) {
  flat.clear();
  if (c == 0 || c > p) return;
  std::vector<int> comb(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) comb[static_cast<std::size_t>(i)] = i + 1;
  for (;;) {
    flat.insert(flat.end(), comb.begin(), comb.end());
    int i = c - 1;
    while (i >= 0 && comb[static_cast<std::size_t>(i)] == p - (c - 1 - i)) --i;
    if (i < 0) break;
    ++comb[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < c; ++j)
      comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
  }
}

void finish_result(SearchResult& res, const MultiTaskDataset& ds, const SearchConfig& cfg) {
  res.evaluated_count = static_cast<std::int64_t>(res.log.size());
  for (const auto& ev : res.log)
    if (!ev.failed && ev.accepted) res.accepted.push_back({ev.subset, ev.p_value, ev.validation_mse});
  if (cfg.rule == SelectionRule::Dg) {
    res.chosen = select_rule_dg(res.accepted);
  } else {
    if (!ds.test_task_id) fail(Errc::NoTestTask, "the mtl selection rule needs a declared test task");
    res.chosen = select_rule_mtl(res.accepted, ds, *ds.test_task_id, cfg.em);
  }
}

}  // namespace

SearchResult full_subset_search(const MultiTaskDataset& ds, const SearchConfig& cfg) {
  const int p = ds.p;
  if (cfg.max_subset_size && *cfg.max_subset_size < 0)
    fail(Errc::InvalidConfig, "max_subset_size must be >= 0");
  if (!cfg.max_subset_size && p > 25)
    fail(Errc::EnumerationTooLarge,
         "2^" + std::to_string(p) + " subsets; set max_subset_size to search p > 25");
  const int cap = cfg.max_subset_size ? std::min(*cfg.max_subset_size, p) : p;

  const EvalContext ctx = make_context(ds, cfg);
  const int workers = resolve_workers(cfg.workers);
  std::vector<HsicWorkspace> ws(static_cast<std::size_t>(workers));

  SearchResult res;
  std::vector<int> flat;
  for (int c = 0; c <= cap; ++c) {
    if (c == 0) {
      res.log.push_back(evaluate_subset(ctx, SubsetMask{}, ws[0]));
      continue;
    }
    combinations(p, c, flat);
    const std::size_t count = flat.size() / static_cast<std::size_t>(c);
    std::vector<SubsetEvaluation> evals(count);
    parallel_for(count, workers, [&](std::size_t i, std::size_t w) {
      std::vector<int> idx(flat.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(c)),
                           flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * static_cast<std::size_t>(c)));
      evals[i] = evaluate_subset(ctx, SubsetMask(std::move(idx)), ws[w]);
    });
    for (auto& ev : evals) res.log.push_back(std::move(ev));
  }
  finish_result(res, ds, cfg);
  return res;
}

SearchResult greedy_subset_search(const MultiTaskDataset& ds, const SearchConfig& cfg) {
  const int p = ds.p;
  if (cfg.max_subset_size && *cfg.max_subset_size < 0)
    fail(Errc::InvalidConfig, "max_subset_size must be >= 0");
  const int cap = cfg.max_subset_size ? std::min(*cfg.max_subset_size, p) : p;
  const int iters = cfg.greedy_iters > 0 ? cfg.greedy_iters : 2 * p;

  const EvalContext ctx = make_context(ds, cfg);
  const int workers = resolve_workers(cfg.workers);
  std::vector<HsicWorkspace> ws(static_cast<std::size_t>(workers));

  SearchResult res;
  std::set<std::vector<int>> visited;
  SubsetMask current;

  for (int t = 0; t < iters; ++t) {
    std::vector<SubsetMask> fresh;
    auto consider = [&](SubsetMask m) {
      if (!visited.count(m.indices())) fresh.push_back(std::move(m));
    };
    if (static_cast<int>(current.size()) < cap)
      for (int j = 1; j <= p; ++j)
        if (!current.contains(j)) consider(current.with(j));
    for (int j : current.indices()) consider(current.without(j));
    if (fresh.empty()) break;
    std::sort(fresh.begin(), fresh.end(), subset_order_less);

    std::vector<SubsetEvaluation> evals(fresh.size());
    parallel_for(fresh.size(), workers, [&](std::size_t i, std::size_t w) {
      evals[i] = evaluate_subset(ctx, fresh[i], ws[w]);
    });

    const SubsetEvaluation* best_accepted = nullptr;
    const SubsetEvaluation* best_statistic = nullptr;
    for (const auto& ev : evals) {
      visited.insert(ev.subset.indices());
      if (ev.failed) continue;
      if (ev.accepted && (!best_accepted || ev.validation_mse < best_accepted->validation_mse))
        best_accepted = &ev;
      if (!best_statistic || ev.statistic < best_statistic->statistic) best_statistic = &ev;
    }
    // Move to the accepted neighbor with the best validation error; with no
    // acceptance in sight, follow the smallest statistic.
    const SubsetEvaluation* move = best_accepted ? best_accepted : best_statistic;
    SubsetMask next = move ? move->subset : SubsetMask{};
    for (auto& ev : evals) res.log.push_back(std::move(ev));
    if (!move) break;
    current = std::move(next);
  }
  finish_result(res, ds, cfg);
  return res;
}

SubsetMask select_rule_dg(const std::vector<AcceptedSubset>& accepted) {
  const AcceptedSubset* best = nullptr;
  for (const auto& a : accepted) {
    if (!best || a.validation_mse < best->validation_mse ||
        (a.validation_mse == best->validation_mse && subset_order_less(a.subset, best->subset)))
      best = &a;
  }
  return best ? best->subset : SubsetMask{};
}

SubsetMask select_rule_mtl(const std::vector<AcceptedSubset>& accepted, const MultiTaskDataset& ds,
                           int test_task_id, const EmOptions& opts) {
  const TaskSample* lab = find_task(ds, test_task_id, true);
  if (!lab) fail(Errc::NoTestTask, "test task " + std::to_string(test_task_id) + " has no labeled rows");
  const Eigen::Index n = lab->rows();
  if (n < 10) fail(Errc::TestTaskTooSmall, "need >= 10 labeled test rows for cross-validation");
  if (accepted.empty()) return SubsetMask{};

  constexpr int kFolds = 10;
  const SubsetMask* best = nullptr;
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& a : accepted) {
    double sq_sum = 0.0;
    Eigen::Index held_total = 0;
    bool failed = false;
    for (int fold = 0; fold < kFolds && !failed; ++fold) {
      std::vector<Eigen::Index> held, kept;
      for (Eigen::Index i = 0; i < n; ++i)
        (i % kFolds == fold ? held : kept).push_back(i);
      if (held.empty()) continue;

      MultiTaskDataset cv = ds;
      for (auto& t : cv.tasks) {
        if (t.task_id != test_task_id || !t.labeled()) continue;
        TaskSample reduced;
        reduced.task_id = t.task_id;
        reduced.features.resize(static_cast<Eigen::Index>(kept.size()), ds.p);
        Eigen::VectorXd y(static_cast<Eigen::Index>(kept.size()));
        for (std::size_t i = 0; i < kept.size(); ++i) {
          reduced.features.row(static_cast<Eigen::Index>(i)) = t.features.row(kept[i]);
          y[static_cast<Eigen::Index>(i)] = (*t.targets)[kept[i]];
        }
        reduced.targets = std::move(y);
        t = std::move(reduced);
      }
      try {
        const EmFit fit = em_fit(cv, a.subset, test_task_id, opts);
        for (Eigen::Index i : held) {
          const double e = (*lab->targets)[i] - fit.predictor.predict_row(lab->features.row(i));
          sq_sum += e * e;
        }
        held_total += static_cast<Eigen::Index>(held.size());
      } catch (const Error&) {
        failed = true;
      }
    }
    const double err = (failed || held_total == 0)
                           ? std::numeric_limits<double>::infinity()
                           : sq_sum / static_cast<double>(held_total);
    if (!best || err < best_err || (err == best_err && subset_order_less(a.subset, *best))) {
      best = &a.subset;
      best_err = err;
    }
  }
  return *best;
}

}  // namespace invtrans
