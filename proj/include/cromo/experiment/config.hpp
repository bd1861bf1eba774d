#pragma once

#include "cromo/confusion/harness.hpp"
#include "cromo/core/trainer.hpp"
#include "cromo/data/dataset.hpp"
#include "cromo/eval/evaluation.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cromo::experiment {

struct DataConfig {
    std::string dataset = "synthetic-gaussians";
    std::string root = "data";
    std::string split = "class_incremental";  // or data_incremental
    int tasks = 2;
    data::SyntheticConfig synthetic;  // used by synthetic-gaussians only

    static DataConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;
};

struct StrategyConfig {
    core::Strategy name = core::Strategy::kCromo;
    std::optional<double> zeta;  // unset: strategy default
    double alpha = 1.0;
    int buffer_budget = 500;
    int buffer_batch = 64;

    static StrategyConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
};

struct TrainerSection {
    std::vector<int> epochs{500};
    int batch_size = 256;
    nn::OptimConfig optim;
    data::AugmentationPolicy augmentation = data::AugmentationPolicy::standard(3);
    double ema_base = 0.99;
    std::optional<std::uint64_t> seed;  // overrides the document seed for training

    static TrainerSection from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
};

struct EvalConfig {
    eval::ProbeConfig probe;
    int knn_k = 200;             // clipped to the training-set size
    bool per_task_knn = true;    // task-by-task matrix over the saved checkpoints

    static EvalConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
};

// The full description of one continual run.
struct ExperimentConfig {
    std::string name = "run";
    std::uint64_t seed = 0;
    std::string output_root = "runs";
    DataConfig data;
    nn::ModelConfig model;
    losses::SslLossSpec ssl;
    StrategyConfig strategy;
    TrainerSection trainer;
    EvalConfig eval;

    // Rejects unknown keys anywhere in the document and wraps type errors
    // as ValidationError.
    static ExperimentConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;

    [[nodiscard]] core::TrainConfig train_config() const;
    [[nodiscard]] std::uint64_t train_seed() const { return trainer.seed.value_or(seed); }
    // Hex FNV-1a over the normalized document minus output_root. Documents
    // that differ only in key order or in spelled-out defaults agree.
    [[nodiscard]] std::string hash() const;
};

// Study of CIL-minibatch vs single-pool (and DIL) training on the training
// split of one dataset.
struct ConfusionStudy {
    std::string name = "confusion";
    std::string output_root = "runs";
    std::string dataset = "synthetic-gaussians";
    std::string root = "data";
    data::SyntheticConfig synthetic;
    std::vector<std::string> learners{"simclr", "barlow_twins", "byol", "corinfomax", "supervised"};
    std::vector<confusion::ScheduleKind> schedules{confusion::ScheduleKind::kCilMinibatch,
                                                   confusion::ScheduleKind::kSinglePool,
                                                   confusion::ScheduleKind::kDilMinibatch};
    std::vector<std::uint64_t> seeds{0};
    confusion::ConfusionExperiment base;  // learner, schedule and seed are set per cell
    // Per-learner patches merged onto `base` (e.g. optimizer settings).
    nlohmann::json learner_overrides = nlohmann::json::object();

    // The experiment of one cell.
    [[nodiscard]] confusion::ConfusionExperiment cell(const std::string& learner, confusion::ScheduleKind schedule,
                                                      std::uint64_t seed) const;

    static ConfusionStudy from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;
    [[nodiscard]] std::string hash() const;
};

// Sets a dotted path ("trainer.seed=7"). The value is parsed as JSON when
// it parses, else taken as a string. Missing intermediate objects are
// created; validation happens when the document is parsed.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Canonical 16-hex-digit hash of a JSON document.
std::string hash_document(const nlohmann::json& doc);

// Named presets: "<dataset>_<ssl>_<strategy>" for the full-scale settings
// (dataset in cifar10_split2, cifar100_split5, cifar100_split10,
// tinyimagenet_split10; ssl in barlow, simclr, byol, corinfomax), plus the
// desk-scale toy_* and confusion_* presets.
std::vector<std::string> preset_names();
nlohmann::json preset(const std::string& name);

// Resolves --config: an existing file is read as JSON, anything else is
// looked up as a preset name.
nlohmann::json load_document(const std::string& path_or_preset);

}  // namespace cromo::experiment
