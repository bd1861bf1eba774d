#pragma once

#include "cromo/data/task_split.hpp"

#include <cstdint>
#include <vector>

namespace cromo::data {

enum class ScheduleMode { kRoundRobin, kSinglePool };

struct ScheduledBatch {
    int task_id = -1;          // -1 for single-pool batches
    std::vector<int> indices;  // positions in the source dataset
};

struct IterationSchedule {
    int batch_size = 0;
    ScheduleMode mode = ScheduleMode::kRoundRobin;
    std::vector<ScheduledBatch> order;
};

// Round robin: iteration k draws from task k mod T. Single pool: uniform over
// the union of all tasks. Within a pool, samples are drawn without
// replacement from a seeded permutation that is refreshed when exhausted.
IterationSchedule make_minibatch_schedule(const TaskSequence& seq, int batch_size, int iterations,
                                          ScheduleMode mode, std::uint64_t seed);

}  // namespace cromo::data
