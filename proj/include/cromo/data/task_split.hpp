#pragma once

#include "cromo/data/dataset.hpp"

#include <json.hpp>

#include <cstdint>
#include <set>
#include <vector>

namespace cromo::data {

enum class SplitMode { kClassIncremental, kDataIncremental };

struct Task {
    int task_id = 0;
    LabeledDataset dataset;
    std::set<int> class_set;
    std::vector<int> source_indices;  // positions in the source dataset
};

struct TaskSequence {
    SplitMode mode = SplitMode::kClassIncremental;
    int class_count = 0;
    int source_size = 0;
    std::vector<Task> tasks;

    [[nodiscard]] int size() const { return static_cast<int>(tasks.size()); }
    // class id -> task id (CIL only; throws for DIL).
    [[nodiscard]] std::vector<int> class_to_task() const;
    // Checks the disjointness (CIL) or coverage (DIL) invariants.
    void validate() const;

    // Reproducibility manifest: task id -> class ids and sample indices.
    [[nodiscard]] nlohmann::json manifest() const;
};

// Classes are shuffled by `seed`, then chunked contiguously.
TaskSequence split_class_incremental(const LabeledDataset& ds, int num_tasks, std::uint64_t seed);

// Stratified per class: each class's samples are shuffled and dealt into
// `num_tasks` shards, so every shard carries every class.
TaskSequence split_data_incremental(const LabeledDataset& ds, int num_tasks, std::uint64_t seed);

// Applies the class-to-task assignment of `seq` to another split (e.g. test).
TaskSequence apply_class_split(const TaskSequence& seq, const LabeledDataset& ds);

}  // namespace cromo::data
