#include "cromo/data/schedule.hpp"

#include "cromo/error.hpp"
#include "cromo/rng.hpp"

#include <algorithm>

namespace cromo::data {

namespace {

// Cycles through shuffled permutations of a pool.
class PoolSampler {
public:
    PoolSampler(std::vector<int> pool, Rng rng) : pool_(std::move(pool)), rng_(std::move(rng)) {}

    std::vector<int> next(int n) {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(n));
        while (static_cast<int>(out.size()) < n) {
            if (cursor_ >= perm_.size()) {
                perm_ = rng_.permutation(static_cast<int>(pool_.size()));
                cursor_ = 0;
            }
            out.push_back(pool_[static_cast<std::size_t>(perm_[cursor_++])]);
        }
        return out;
    }

private:
    std::vector<int> pool_;
    Rng rng_;
    std::vector<int> perm_;
    std::size_t cursor_ = 0;
};

}  // namespace

IterationSchedule make_minibatch_schedule(const TaskSequence& seq, int batch_size, int iterations,
                                          ScheduleMode mode, std::uint64_t seed) {
    require(!seq.tasks.empty(), "make_minibatch_schedule: empty task sequence");
    require(batch_size >= 1 && iterations >= 0, "make_minibatch_schedule: bad batch size or iteration count");
    for (const auto& t : seq.tasks)
        require(static_cast<int>(t.source_indices.size()) >= batch_size,
                "make_minibatch_schedule: batch size " + std::to_string(batch_size) + " exceeds task " +
                    std::to_string(t.task_id) + " size " + std::to_string(t.source_indices.size()));

    IterationSchedule sched;
    sched.batch_size = batch_size;
    sched.mode = mode;
    sched.order.reserve(static_cast<std::size_t>(iterations));
    if (mode == ScheduleMode::kRoundRobin) {
        std::vector<PoolSampler> samplers;
        for (std::size_t t = 0; t < seq.tasks.size(); ++t)
            samplers.emplace_back(seq.tasks[t].source_indices, Rng::derive(seed, 0x5c4ed + t));
        const int T = seq.size();
        for (int k = 0; k < iterations; ++k) {
            const int t = k % T;
            sched.order.push_back({seq.tasks[static_cast<std::size_t>(t)].task_id,
                                   samplers[static_cast<std::size_t>(t)].next(batch_size)});
        }
    } else {
        std::vector<int> pool;
        for (const auto& t : seq.tasks) pool.insert(pool.end(), t.source_indices.begin(), t.source_indices.end());
        std::sort(pool.begin(), pool.end());
        PoolSampler sampler(std::move(pool), Rng::derive(seed, 0x5c4ed - 1));
        for (int k = 0; k < iterations; ++k) sched.order.push_back({-1, sampler.next(batch_size)});
    }
    return sched;
}

}  // namespace cromo::data
