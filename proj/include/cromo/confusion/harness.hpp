#pragma once

#include "cromo/data/augment.hpp"
#include "cromo/data/task_split.hpp"
#include "cromo/eval/evaluation.hpp"
#include "cromo/losses/ssl_losses.hpp"
#include "cromo/nn/optim.hpp"
#include "cromo/nn/trinet.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cromo::confusion {

enum class ScheduleKind { kCilMinibatch, kDilMinibatch, kSinglePool };

ScheduleKind parse_schedule(const std::string& name);
std::string to_string(ScheduleKind s);

// One cell of the task-confusion study: a learner trained on a minibatch
// schedule, probed on its own training set.
struct ConfusionExperiment {
    ScheduleKind schedule = ScheduleKind::kCilMinibatch;
    std::string learner = "simclr";  // an ssl kind, or "supervised"
    int tasks = 2;
    int iterations = 600;
    int batch_size = 32;
    int probe_every = 200;  // the final iteration is always probed
    eval::ProbeConfig probe;
    losses::SslLossSpec ssl;  // kind is taken from `learner`
    nn::ModelConfig model;
    nn::OptimConfig optim;
    data::AugmentationPolicy augmentation = data::AugmentationPolicy::noise_only(0.1);
    std::uint64_t seed = 0;

    [[nodiscard]] bool supervised() const { return learner == "supervised"; }
    static ConfusionExperiment from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;
};

struct CurvePoint {
    int iteration = 0;
    double la = 0, wp = 0, tp = 0;
};

struct CurveSeries {
    std::string learner;
    std::string schedule;
    std::vector<CurvePoint> points;

    [[nodiscard]] std::string label() const { return learner + "/" + schedule; }
};

// Trains the learner under the experiment's schedule and records train-set
// LA/WP/TP of a linear probe at the probe cadence. TP/WP use the
// class-incremental task grouping for every schedule so that cells are
// comparable. SSL learners run through core::Trainer::train_batch.
CurveSeries run_confusion_experiment(const ConfusionExperiment& exp, const data::LabeledDataset& train);

// Writes curves.csv (one row per series, metric and probe point) and
// la.png, tp.png, wp.png into `out`. Nothing is written when any series is
// empty.
void emit_curves(const std::vector<CurveSeries>& series, const std::filesystem::path& out);

}  // namespace cromo::confusion
