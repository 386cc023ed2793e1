#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "invtrans/errors.hpp"

namespace invtrans {

// Rows of one task. `targets` is absent for an unlabeled partition (features
// only). A task id may appear at most twice in a dataset: once labeled, once
// unlabeled.
struct TaskSample {
  int task_id = 0;
  Eigen::MatrixXd features;                // n_k x p
  std::optional<Eigen::VectorXd> targets;  // n_k, absent if unlabeled

  bool labeled() const { return targets.has_value(); }
  Eigen::Index rows() const { return features.rows(); }
};

// Feature subset as 1-based indices, kept sorted and unique.
class SubsetMask {
 public:
  SubsetMask() = default;

  explicit SubsetMask(std::vector<int> indices) : idx_(std::move(indices)) {
    std::sort(idx_.begin(), idx_.end());
    for (std::size_t i = 0; i < idx_.size(); ++i) {
      if (idx_[i] < 1) fail(Errc::InvalidConfig, "subset index " + std::to_string(idx_[i]) + " is not >= 1");
      if (i > 0 && idx_[i] == idx_[i - 1])
        fail(Errc::InvalidConfig, "duplicate subset index " + std::to_string(idx_[i]));
    }
  }

  static SubsetMask full(int p) {
    std::vector<int> v(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) v[static_cast<std::size_t>(i)] = i + 1;
    return SubsetMask(std::move(v));
  }

  const std::vector<int>& indices() const { return idx_; }
  std::size_t size() const { return idx_.size(); }
  bool empty() const { return idx_.empty(); }

  bool contains(int idx) const { return std::binary_search(idx_.begin(), idx_.end(), idx); }

  int max_index() const { return idx_.empty() ? 0 : idx_.back(); }

  SubsetMask complement(int p) const {
    std::vector<int> v;
    v.reserve(static_cast<std::size_t>(p) - idx_.size());
    for (int i = 1; i <= p; ++i)
      if (!contains(i)) v.push_back(i);
    return SubsetMask(std::move(v));
  }

  SubsetMask with(int idx) const {
    std::vector<int> v = idx_;
    v.push_back(idx);
    return SubsetMask(std::move(v));
  }

  SubsetMask without(int idx) const {
    std::vector<int> v;
    v.reserve(idx_.size());
    for (int i : idx_)
      if (i != idx) v.push_back(i);
    return SubsetMask(std::move(v));
  }

  // 0-based column positions for indexing feature matrices.
  std::vector<Eigen::Index> columns() const {
    std::vector<Eigen::Index> c;
    c.reserve(idx_.size());
    for (int i : idx_) c.push_back(static_cast<Eigen::Index>(i - 1));
    return c;
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < idx_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(idx_[i]);
    }
    s += "}";
    return s;
  }

  bool operator==(const SubsetMask& o) const { return idx_ == o.idx_; }
  bool operator!=(const SubsetMask& o) const { return idx_ != o.idx_; }

 private:
  std::vector<int> idx_;
};

// Order used for tie-breaking: smaller cardinality first, then lexicographic
// on the index lists.
inline bool subset_order_less(const SubsetMask& a, const SubsetMask& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a.indices() < b.indices();
}

// Sparse linear predictor: coefficients live on `subset` (same order),
// everything off the subset is implicitly zero.
struct LinearPredictor {
  SubsetMask subset;
  Eigen::VectorXd coefficients;  // size == subset.size()
  double intercept = 0.0;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double v = intercept;
    const auto& idx = subset.indices();
    for (std::size_t j = 0; j < idx.size(); ++j)
      v += coefficients[static_cast<Eigen::Index>(j)] * x[idx[j] - 1];
    return v;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), intercept);
    const auto& idx = subset.indices();
    for (std::size_t j = 0; j < idx.size(); ++j)
      out += coefficients[static_cast<Eigen::Index>(j)] * X.col(idx[j] - 1);
    return out;
  }

  // Dense length-p coefficient vector with zeros off the subset.
  Eigen::VectorXd dense_coefficients(int p) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
    const auto& idx = subset.indices();
    for (std::size_t j = 0; j < idx.size(); ++j)
      out[idx[j] - 1] = coefficients[static_cast<Eigen::Index>(j)];
    return out;
  }
};

struct SplitConfig {
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct MultiTaskDataset {
  std::vector<TaskSample> tasks;
  int p = 0;
  std::optional<std::vector<std::string>> feature_names;
  std::optional<int> test_task_id;

  Eigen::Index labeled_rows() const {
    Eigen::Index n = 0;
    for (const auto& t : tasks)
      if (t.labeled()) n += t.rows();
    return n;
  }
};

}  // namespace invtrans
