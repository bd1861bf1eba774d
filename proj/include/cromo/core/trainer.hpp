#pragma once

#include "cromo/core/memory_buffer.hpp"
#include "cromo/core/objective.hpp"
#include "cromo/data/augment.hpp"
#include "cromo/data/task_split.hpp"
#include "cromo/nn/checkpoint.hpp"
#include "cromo/nn/optim.hpp"
#include "cromo/nn/trinet.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace cromo::core {

struct TrainConfig {
    Strategy strategy = Strategy::kCromo;
    std::optional<double> zeta;  // unset: strategy default
    double alpha = 1.0;          // Beta(alpha, alpha) mixing weights
    int buffer_budget = 500;     // samples saved per task
    int buffer_batch = 64;
    losses::SslLossSpec ssl;
    nn::ModelConfig model;
    nn::OptimConfig optim;
    data::AugmentationPolicy augmentation = data::AugmentationPolicy::standard(3);
    std::vector<int> epochs{500};  // one entry, or one per task
    int batch_size = 256;
    double ema_base = 0.99;  // BYOL target momentum at the start of a task
    std::uint64_t seed = 0;

    [[nodiscard]] double effective_zeta() const;
    [[nodiscard]] int epochs_for(int task_index) const;
    // Checks cross-field consistency (heads required by the strategy and
    // SSL kind, epoch list length).
    void validate(int num_tasks) const;
};

struct StepRecord {
    long step = 0;       // global, counted from the start of the run
    int task = 0;        // task index, 0-based
    int epoch = 0;
    double lr = 0;
    LossBundle bundle;

    [[nodiscard]] nlohmann::json to_json() const;
};

// Mutable training state carried across tasks.
struct RunState {
    std::unique_ptr<nn::TriNet> net;
    std::optional<nn::FrozenModel> frozen;  // model saved at the last task boundary
    std::optional<nn::EmaTarget> target;    // BYOL only
    MemoryBuffer buffer;
    int task_index = 0;  // next task to train
    long step = 0;
    LossStates cov_states;
    Rng data_rng, aug_rng, buffer_rng, mix_rng, select_rng;
};

class Trainer {
public:
    Trainer(TrainConfig cfg, ImageShape input, std::string config_hash = "");

    void set_step_callback(std::function<void(const StepRecord&)> cb) { on_step_ = std::move(cb); }
    // Task-boundary checkpoints are written to dir/task_<k> when set.
    void set_checkpoint_dir(std::filesystem::path dir) { ckpt_dir_ = std::move(dir); }

    // Trains one task for its configured epochs; returns the per-step losses.
    std::vector<LossBundle> train_task(const data::Task& task);
    // Snapshots the model, stores exemplars, resets per-task state.
    void end_task(const data::Task& task);
    // train_task + end_task for every remaining task of `seq`.
    void run(const data::TaskSequence& seq);

    // Restores the state saved at the end of a task. Throws when the
    // checkpoint was produced by a different configuration.
    void resume(const std::filesystem::path& checkpoint);
    nn::Container checkpoint();

    // One optimization step on the given samples of `ds` within the current
    // task; task_step/task_steps drive the EMA momentum ramp. train_task is
    // a loop over this.
    LossBundle train_batch(const data::LabeledDataset& ds, const std::vector<int>& indices, double lr,
                           nn::Optimizer& opt, long task_step, long task_steps);

    RunState& state() { return state_; }
    [[nodiscard]] const TrainConfig& config() const { return cfg_; }
    [[nodiscard]] const std::string& config_hash() const { return hash_; }

private:
    TrainConfig cfg_;
    StrategyTraits traits_;
    ImageShape input_;
    std::string hash_;
    RunState state_;
    std::function<void(const StepRecord&)> on_step_;
    std::optional<std::filesystem::path> ckpt_dir_;
};

}  // namespace cromo::core
