#include "cromo/data/task_split.hpp"

#include "cromo/error.hpp"
#include "cromo/rng.hpp"

#include <algorithm>

namespace cromo::data {

std::vector<int> TaskSequence::class_to_task() const {
    require(mode == SplitMode::kClassIncremental, "class_to_task: only defined for class-incremental splits");
    std::vector<int> map(static_cast<std::size_t>(class_count), -1);
    for (const auto& t : tasks)
        for (int c : t.class_set) map[static_cast<std::size_t>(c)] = t.task_id;
    return map;
}

void TaskSequence::validate() const {
    require(!tasks.empty(), "task sequence is empty");
    std::vector<int> seen(static_cast<std::size_t>(source_size), 0);
    for (const auto& t : tasks) {
        for (int i : t.source_indices) ++seen[static_cast<std::size_t>(i)];
        for (int y : t.dataset.labels)
            require(t.class_set.count(y) == 1, "task " + std::to_string(t.task_id) + " holds a foreign class");
    }
    for (int s : seen) require(s == 1, "task samples do not partition the source dataset");
    if (mode == SplitMode::kClassIncremental) {
        for (std::size_t a = 0; a < tasks.size(); ++a)
            for (std::size_t b = a + 1; b < tasks.size(); ++b)
                for (int c : tasks[a].class_set)
                    require(tasks[b].class_set.count(c) == 0, "class sets of tasks overlap");
    } else {
        for (const auto& t : tasks) {
            const auto h = t.dataset.class_histogram();
            require(std::none_of(h.begin(), h.end(), [](int n) { return n == 0; }),
                    "data-incremental task " + std::to_string(t.task_id) + " misses a class");
        }
    }
}

nlohmann::json TaskSequence::manifest() const {
    nlohmann::json j;
    j["mode"] = mode == SplitMode::kClassIncremental ? "cil" : "dil";
    j["class_count"] = class_count;
    j["source_size"] = source_size;
    j["tasks"] = nlohmann::json::array();
    for (const auto& t : tasks) {
        j["tasks"].push_back({{"task_id", t.task_id},
                              {"classes", std::vector<int>(t.class_set.begin(), t.class_set.end())},
                              {"indices", t.source_indices}});
    }
    return j;
}

TaskSequence split_class_incremental(const LabeledDataset& ds, int num_tasks, std::uint64_t seed) {
    require(num_tasks >= 1, "split_class_incremental: num_tasks must be >= 1");
    require(ds.class_count % num_tasks == 0, "split_class_incremental: " + std::to_string(ds.class_count) +
                                                 " classes do not divide into " + std::to_string(num_tasks) +
                                                 " tasks");
    Rng rng = Rng::derive(seed, 0xc1a55);
    const std::vector<int> order = rng.permutation(ds.class_count);
    const int per_task = ds.class_count / num_tasks;
    std::vector<int> task_of(static_cast<std::size_t>(ds.class_count));
    for (int k = 0; k < ds.class_count; ++k) task_of[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k / per_task;

    TaskSequence seq;
    seq.mode = SplitMode::kClassIncremental;
    seq.class_count = ds.class_count;
    seq.source_size = ds.size();
    seq.tasks.resize(static_cast<std::size_t>(num_tasks));
    for (int t = 0; t < num_tasks; ++t) seq.tasks[static_cast<std::size_t>(t)].task_id = t;
    for (int c = 0; c < ds.class_count; ++c) seq.tasks[static_cast<std::size_t>(task_of[static_cast<std::size_t>(c)])].class_set.insert(c);
    for (int i = 0; i < ds.size(); ++i)
        seq.tasks[static_cast<std::size_t>(task_of[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])])].source_indices.push_back(i);
    for (auto& t : seq.tasks) t.dataset = ds.subset(t.source_indices);
    seq.validate();
    return seq;
}

TaskSequence split_data_incremental(const LabeledDataset& ds, int num_tasks, std::uint64_t seed) {
    require(num_tasks >= 1, "split_data_incremental: num_tasks must be >= 1");
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.class_count));
    for (int i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c)
        require(static_cast<int>(by_class[c].size()) >= num_tasks,
                "split_data_incremental: class " + std::to_string(c) + " has " +
                    std::to_string(by_class[c].size()) + " samples, fewer than " + std::to_string(num_tasks) +
                    " tasks");

    Rng rng = Rng::derive(seed, 0xd11);
    TaskSequence seq;
    seq.mode = SplitMode::kDataIncremental;
    seq.class_count = ds.class_count;
    seq.source_size = ds.size();
    seq.tasks.resize(static_cast<std::size_t>(num_tasks));
    for (int t = 0; t < num_tasks; ++t) {
        auto& task = seq.tasks[static_cast<std::size_t>(t)];
        task.task_id = t;
        for (int c = 0; c < ds.class_count; ++c) task.class_set.insert(c);
    }
    // Deal each class's shuffled samples round-robin; the starting shard
    // rotates with the class so shard sizes stay within one of each other.
    int offset = 0;
    for (auto& members : by_class) {
        const auto perm = rng.permutation(static_cast<int>(members.size()));
        for (std::size_t k = 0; k < members.size(); ++k) {
            const auto shard = static_cast<std::size_t>((static_cast<int>(k) + offset) % num_tasks);
            seq.tasks[shard].source_indices.push_back(members[static_cast<std::size_t>(perm[k])]);
        }
        offset = (offset + static_cast<int>(members.size())) % num_tasks;
    }
    for (auto& t : seq.tasks) {
        std::sort(t.source_indices.begin(), t.source_indices.end());
        t.dataset = ds.subset(t.source_indices);
    }
    seq.validate();
    return seq;
}

TaskSequence apply_class_split(const TaskSequence& seq, const LabeledDataset& ds) {
    require(seq.mode == SplitMode::kClassIncremental, "apply_class_split: needs a class-incremental sequence");
    require(ds.class_count == seq.class_count, "apply_class_split: class count mismatch");
    const auto task_of = seq.class_to_task();
    TaskSequence out;
    out.mode = seq.mode;
    out.class_count = seq.class_count;
    out.source_size = ds.size();
    out.tasks.resize(seq.tasks.size());
    for (std::size_t t = 0; t < seq.tasks.size(); ++t) {
        out.tasks[t].task_id = seq.tasks[t].task_id;
        out.tasks[t].class_set = seq.tasks[t].class_set;
    }
    for (int i = 0; i < ds.size(); ++i)
        out.tasks[static_cast<std::size_t>(task_of[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])])].source_indices.push_back(i);
    for (auto& t : out.tasks) t.dataset = ds.subset(t.source_indices);
    return out;
}

}  // namespace cromo::data
