#pragma once

#include "cromo/data/dataset.hpp"
#include "cromo/nn/checkpoint.hpp"
#include "cromo/rng.hpp"

#include <set>
#include <vector>

namespace cromo::core {

struct BufferSample {
    ImageBatch images;  // floats in [0,1], un-augmented
    std::vector<int> labels, task_ids, entries;
};

// Fixed per-task budget of raw exemplars from completed tasks.
class MemoryBuffer {
public:
    MemoryBuffer() = default;
    MemoryBuffer(int samples_per_task, ImageShape shape);

    // Adds up to samples_per_task class-balanced exemplars of `task`.
    void update_after_task(const data::LabeledDataset& task, int task_id, Rng& rng);
    // n uniform draws with replacement over all entries.
    BufferSample sample_batch(int n, Rng& rng) const;

    [[nodiscard]] int size() const { return store_.size(); }
    [[nodiscard]] bool empty() const { return store_.size() == 0; }
    [[nodiscard]] int samples_per_task() const { return samples_per_task_; }
    [[nodiscard]] const std::set<int>& tasks_seen() const { return tasks_seen_; }
    [[nodiscard]] const data::LabeledDataset& entries() const { return store_; }
    [[nodiscard]] const std::vector<int>& task_ids() const { return task_ids_; }
    // Entry count for (task, class).
    [[nodiscard]] int count(int task_id, int label) const;

    void save(nn::Container& c) const;
    static MemoryBuffer load(const nn::Container& c);

private:
    int samples_per_task_ = 0;
    data::LabeledDataset store_;
    std::vector<int> task_ids_;
    std::set<int> tasks_seen_;
};

}  // namespace cromo::core
