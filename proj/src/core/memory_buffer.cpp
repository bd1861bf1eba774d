#include "cromo/core/memory_buffer.hpp"

#include "cromo/error.hpp"
#include "cromo/log.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace cromo::core {

MemoryBuffer::MemoryBuffer(int samples_per_task, ImageShape shape) : samples_per_task_(samples_per_task) {
    require(samples_per_task >= 0, "buffer: samples_per_task must be >= 0");
    store_.name = "memory-buffer";
    store_.shape = shape;
}

void MemoryBuffer::update_after_task(const data::LabeledDataset& task, int task_id, Rng& rng) {
    if (tasks_seen_.count(task_id)) throw ValidationError("buffer: task " + std::to_string(task_id) + " already stored");
    require(task.shape == store_.shape, "buffer: task images have shape " + task.shape.to_string() +
                                            ", buffer holds " + store_.shape.to_string());
    tasks_seen_.insert(task_id);
    store_.class_count = std::max(store_.class_count, task.class_count);

    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < task.size(); ++i) by_class[task.labels[static_cast<std::size_t>(i)]].push_back(i);
    std::vector<int> classes;
    for (const auto& [c, idx] : by_class) classes.push_back(c);

    std::vector<int> chosen;
    if (task.size() <= samples_per_task_) {
        if (task.size() < samples_per_task_)
            log_warn("buffer: task " + std::to_string(task_id) + " has " + std::to_string(task.size()) +
                     " samples, below the budget of " + std::to_string(samples_per_task_) + "; storing all");
        for (int i = 0; i < task.size(); ++i) chosen.push_back(i);
    } else if (!classes.empty()) {
        // Quotas: equal split, remainder to classes in seeded order, and any
        // shortfall of small classes handed on to classes with spare samples.
        const int k = static_cast<int>(classes.size());
        const std::vector<int> order = rng.permutation(k);
        std::vector<int> quota(static_cast<std::size_t>(k), samples_per_task_ / k);
        for (int r = 0; r < samples_per_task_ % k; ++r) ++quota[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
        int shortfall = 0;
        for (int c = 0; c < k; ++c) {
            const int avail = static_cast<int>(by_class[classes[static_cast<std::size_t>(c)]].size());
            if (quota[static_cast<std::size_t>(c)] > avail) {
                shortfall += quota[static_cast<std::size_t>(c)] - avail;
                quota[static_cast<std::size_t>(c)] = avail;
            }
        }
        while (shortfall > 0) {
            bool progressed = false;
            for (int r = 0; r < k && shortfall > 0; ++r) {
                const auto c = static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
                if (quota[c] < static_cast<int>(by_class[classes[c]].size())) {
                    ++quota[c];
                    --shortfall;
                    progressed = true;
                }
            }
            if (!progressed) break;
        }
        for (int c = 0; c < k; ++c) {
            auto& pool = by_class[classes[static_cast<std::size_t>(c)]];
            const std::vector<int> perm = rng.permutation(static_cast<int>(pool.size()));
            std::vector<int> pick;
            for (int r = 0; r < quota[static_cast<std::size_t>(c)]; ++r)
                pick.push_back(pool[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])]);
            std::sort(pick.begin(), pick.end());
            chosen.insert(chosen.end(), pick.begin(), pick.end());
        }
    }

    const data::LabeledDataset picked = task.subset(chosen);
    store_.pixels.insert(store_.pixels.end(), picked.pixels.begin(), picked.pixels.end());
    store_.labels.insert(store_.labels.end(), picked.labels.begin(), picked.labels.end());
    task_ids_.insert(task_ids_.end(), chosen.size(), task_id);
}

BufferSample MemoryBuffer::sample_batch(int n, Rng& rng) const {
    if (empty()) throw ValidationError("buffer: cannot sample from an empty buffer");
    require(n >= 1, "buffer: sample size must be >= 1");
    BufferSample out;
    out.entries.resize(static_cast<std::size_t>(n));
    for (auto& e : out.entries) e = rng.index(size());
    out.images = data::to_batch(store_, out.entries);
    for (int e : out.entries) {
        out.labels.push_back(store_.labels[static_cast<std::size_t>(e)]);
        out.task_ids.push_back(task_ids_[static_cast<std::size_t>(e)]);
    }
    return out;
}

int MemoryBuffer::count(int task_id, int label) const {
    int n = 0;
    for (int i = 0; i < size(); ++i)
        if (task_ids_[static_cast<std::size_t>(i)] == task_id && store_.labels[static_cast<std::size_t>(i)] == label) ++n;
    return n;
}

void MemoryBuffer::save(nn::Container& c) const {
    c.meta["buffer.samples_per_task"] = std::to_string(samples_per_task_);
    c.meta["buffer.shape"] = std::to_string(store_.shape.channels) + "," + std::to_string(store_.shape.height) + "," +
                             std::to_string(store_.shape.width);
    c.meta["buffer.class_count"] = std::to_string(store_.class_count);
    std::string seen;
    for (int t : tasks_seen_) seen += (seen.empty() ? "" : ",") + std::to_string(t);
    c.meta["buffer.tasks_seen"] = seen;
    const int d = store_.shape.size();
    Mat px(size(), d);
    for (int i = 0; i < size(); ++i)
        for (int k = 0; k < d; ++k) px(i, k) = store_.image(i)[k];
    Mat meta(size(), 2);
    for (int i = 0; i < size(); ++i) {
        meta(i, 0) = store_.labels[static_cast<std::size_t>(i)];
        meta(i, 1) = task_ids_[static_cast<std::size_t>(i)];
    }
    c.tensors.emplace_back("buffer.pixels", std::move(px));
    c.tensors.emplace_back("buffer.labels_tasks", std::move(meta));
}

MemoryBuffer MemoryBuffer::load(const nn::Container& c) {
    auto get = [&](const std::string& k) {
        auto it = c.meta.find(k);
        if (it == c.meta.end()) throw RuntimeError("buffer snapshot lacks '" + k + "'");
        return it->second;
    };
    ImageShape shape;
    if (std::sscanf(get("buffer.shape").c_str(), "%d,%d,%d", &shape.channels, &shape.height, &shape.width) != 3)
        throw RuntimeError("buffer snapshot: malformed shape");
    MemoryBuffer buf(std::stoi(get("buffer.samples_per_task")), shape);
    buf.store_.class_count = std::stoi(get("buffer.class_count"));
    const std::string seen = get("buffer.tasks_seen");
    for (std::size_t pos = 0; pos < seen.size();) {
        const std::size_t next = seen.find(',', pos);
        buf.tasks_seen_.insert(std::stoi(seen.substr(pos, next - pos)));
        pos = next == std::string::npos ? seen.size() : next + 1;
    }
    const Mat& px = c.tensor("buffer.pixels");
    const Mat& meta = c.tensor("buffer.labels_tasks");
    require(px.rows() == meta.rows() && (px.rows() == 0 || px.cols() == shape.size()),
            "buffer snapshot: inconsistent tensor sizes");
    for (Eigen::Index i = 0; i < px.rows(); ++i) {
        for (Eigen::Index k = 0; k < px.cols(); ++k) buf.store_.pixels.push_back(static_cast<std::uint8_t>(px(i, k)));
        buf.store_.labels.push_back(static_cast<int>(meta(i, 0)));
        buf.task_ids_.push_back(static_cast<int>(meta(i, 1)));
    }
    return buf;
}

}  // namespace cromo::core
