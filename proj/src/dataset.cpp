#include "invtrans/dataset.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "invtrans/rng.hpp"

namespace invtrans {

void validate_dataset(const MultiTaskDataset& ds) {
  if (ds.tasks.empty()) fail(Errc::NoLabeledData, "dataset has no tasks");
  if (ds.p < 1) fail(Errc::DimensionMismatch, "feature count must be >= 1, got " + std::to_string(ds.p));
  if (ds.feature_names && static_cast<int>(ds.feature_names->size()) != ds.p)
    fail(Errc::DimensionMismatch, "feature_names length does not match p");

  std::map<std::pair<int, bool>, int> seen;
  for (const auto& t : ds.tasks) {
    const std::string tid = "task " + std::to_string(t.task_id);
    if (t.task_id < 1) fail(Errc::InvalidConfig, tid + ": ids must be >= 1");
    if (++seen[{t.task_id, t.labeled()}] > 1)
      fail(Errc::DuplicateTaskId, tid + (t.labeled() ? " labeled" : " unlabeled") + " partition appears twice");
    if (t.rows() == 0) fail(Errc::TaskTooSmall, tid + " has no rows");
    if (t.features.cols() != ds.p)
      fail(Errc::DimensionMismatch, tid + " has " + std::to_string(t.features.cols()) +
                                        " features, dataset declares " + std::to_string(ds.p));
    if (t.labeled() && t.targets->size() != t.rows())
      fail(Errc::DimensionMismatch, tid + ": target length does not match row count");
    if (!t.features.allFinite()) fail(Errc::NonFiniteValue, tid + " has non-finite feature values");
    if (t.labeled() && !t.targets->allFinite()) fail(Errc::NonFiniteValue, tid + " has non-finite targets");
  }
  if (ds.test_task_id) {
    bool found = false;
    for (const auto& t : ds.tasks) found = found || t.task_id == *ds.test_task_id;
    if (!found) fail(Errc::NoTestTask, "test task " + std::to_string(*ds.test_task_id) + " not in dataset");
  }
}

std::pair<MultiTaskDataset, MultiTaskDataset> split_train_validation(const MultiTaskDataset& ds,
                                                                     const SplitConfig& cfg) {
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    fail(Errc::InvalidConfig, "train_fraction must lie in (0, 1)");
  MultiTaskDataset train, val;
  train.p = val.p = ds.p;
  train.feature_names = val.feature_names = ds.feature_names;
  train.test_task_id = val.test_task_id = ds.test_task_id;

  for (const auto& t : ds.tasks) {
    if (!t.labeled()) continue;
    const Eigen::Index n = t.rows();
    if (n < 2) fail(Errc::TaskTooSmall, "task " + std::to_string(t.task_id) + " needs >= 2 labeled rows to split");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::from_path(cfg.seed, {0x5eedu, static_cast<std::uint64_t>(t.task_id)});
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(rng.uniform_below(static_cast<std::uint64_t>(i + 1)))]);

    Eigen::Index n_train = static_cast<Eigen::Index>(std::llround(cfg.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<Eigen::Index>(n_train, 1, n - 1);

    std::vector<Eigen::Index> tr(order.begin(), order.begin() + n_train);
    std::vector<Eigen::Index> va(order.begin() + n_train, order.end());
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());

    auto take = [&](const std::vector<Eigen::Index>& rows) {
      TaskSample out;
      out.task_id = t.task_id;
      out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.p);
      Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = t.features.row(rows[i]);
        y[static_cast<Eigen::Index>(i)] = (*t.targets)[rows[i]];
      }
      out.targets = std::move(y);
      return out;
    };
    train.tasks.push_back(take(tr));
    val.tasks.push_back(take(va));
  }
  if (train.tasks.empty()) fail(Errc::NoLabeledData, "no labeled tasks to split");
  return {std::move(train), std::move(val)};
}

MultiTaskDataset training_view(const MultiTaskDataset& ds) {
  if (!ds.test_task_id) fail(Errc::NoTestTask, "training_view requires test_task_id");
  MultiTaskDataset out;
  out.p = ds.p;
  out.feature_names = ds.feature_names;
  for (const auto& t : ds.tasks)
    if (t.task_id != *ds.test_task_id) out.tasks.push_back(t);
  return out;
}

const TaskSample* find_task(const MultiTaskDataset& ds, int task_id, bool labeled) {
  for (const auto& t : ds.tasks)
    if (t.task_id == task_id && t.labeled() == labeled) return &t;
  return nullptr;
}

}  // namespace invtrans
