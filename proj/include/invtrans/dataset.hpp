#pragma once

#include <utility>

#include "invtrans/types.hpp"

namespace invtrans {

// Checks structural invariants: p >= 1 and consistent across tasks, task ids
// positive and unique per (id, labeledness) pair, every partition nonempty,
// target lengths matching, all values finite, and test_task_id (when set)
// present. Throws Error on the first violation.
void validate_dataset(const MultiTaskDataset& ds);

// Splits each task's labeled rows into disjoint train/validation parts. The
// row selection is a deterministic function of (cfg.seed, task_id), so the
// plan does not depend on task order. Each side receives at least one row;
// tasks with fewer than 2 labeled rows are rejected. Unlabeled partitions are
// dropped from both outputs.
std::pair<MultiTaskDataset, MultiTaskDataset> split_train_validation(const MultiTaskDataset& ds,
                                                                     const SplitConfig& cfg);

// Dataset without the test task (both partitions). Requires test_task_id to
// be set.
MultiTaskDataset training_view(const MultiTaskDataset& ds);

// Pointer to the task sample with the given id and labeledness, or nullptr.
const TaskSample* find_task(const MultiTaskDataset& ds, int task_id, bool labeled);

}  // namespace invtrans
