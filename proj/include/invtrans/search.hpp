#pragma once

#include "invtrans/invariance.hpp"
#include "invtrans/mtl.hpp"
#include "invtrans/types.hpp"

namespace invtrans {

enum class TestKind { Hsic, Levene };
enum class SelectionRule { Dg, Mtl };

struct SearchConfig {
  double level = 0.05;
  TestKind test_kind = TestKind::Hsic;
  SelectionRule rule = SelectionRule::Dg;
  SplitConfig split{};
  std::optional<int> max_subset_size;
  KernelConfig kernel{};
  int greedy_iters = 0;  // 0: defaults to 2p
  int workers = 0;       // 0: INVTRANS_WORKERS env var, then hardware
  EmOptions em{};        // used by the mtl selection rule
};

struct AcceptedSubset {
  SubsetMask subset;
  double p_value = 0.0;
  double validation_mse = 0.0;
};

struct SubsetEvaluation {
  SubsetMask subset;
  double statistic = 0.0;
  double p_value = 0.0;
  double validation_mse = 0.0;
  bool accepted = false;
  bool failed = false;
  std::string error;
};

struct SearchResult {
  SubsetMask chosen;
  std::vector<AcceptedSubset> accepted;
  std::int64_t evaluated_count = 0;
  std::vector<SubsetEvaluation> log;
};

// Evaluates every subset (optionally capped in size) on one fixed
// train/validation split: fit pooled least squares on the training half,
// test the validation residuals for task invariance, accept iff p > level.
// The test task, when declared, is excluded from the search. Subsets are
// visited in (cardinality, lexicographic) order. Without a size cap, p is
// limited to 25.
SearchResult full_subset_search(const MultiTaskDataset& ds, const SearchConfig& cfg);

// Coordinate walk over subsets: starting from the empty set, evaluates the
// one-feature additions and removals of the current subset, moves to the
// accepted neighbor with the smallest validation MSE, or failing that to the
// neighbor with the smallest test statistic. Already-evaluated subsets are
// never re-tested; the walk stops early once the whole neighborhood is known.
SearchResult greedy_subset_search(const MultiTaskDataset& ds, const SearchConfig& cfg);

// Final choice among the accepted subsets: smallest validation MSE, ties
// broken by cardinality then lexicographic order. Empty input selects the
// empty subset (mean prediction).
SubsetMask select_rule_dg(const std::vector<AcceptedSubset>& accepted);

// Final choice for the transfer setting: 10-fold cross-validation over the
// labeled test-task rows (fold rows are held out entirely, training tasks
// stay visible), refitting the missing-data model per fold and picking the
// subset with the smallest held-out squared error. Requires >= 10 labeled
// test rows.
SubsetMask select_rule_mtl(const std::vector<AcceptedSubset>& accepted, const MultiTaskDataset& ds,
                           int test_task_id, const EmOptions& opts = {});

}  // namespace invtrans
