#pragma once

#include "cromo/confusion/harness.hpp"
#include "cromo/eval/evaluation.hpp"
#include "cromo/experiment/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cromo::experiment {

struct RunOptions {
    bool force = false;  // replace an existing run directory
    // Continue from a task-boundary checkpoint of an earlier run of the
    // same configuration.
    std::optional<std::filesystem::path> resume;
    std::function<void(const std::string&)> progress;  // one line per event
};

struct RunSummary {
    std::filesystem::path dir;
    std::string hash;
    eval::MetricsReport report;
};

// Trains every task and evaluates the final model. The run directory
// <output_root>/<hash> holds config.snapshot, manifest.json, metrics.log,
// checkpoints/task_<k>, buffer.snapshot, report.json, tables.csv,
// confusion.csv and loss.png (plus knn.png with the per-task matrix). It is
// assembled under a temporary name and renamed into place when complete.
RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {});

enum class EvalMode { kLinear, kKnn, kTransfer };
EvalMode parse_eval_mode(const std::string& name);
std::string to_string(EvalMode mode);

struct EvalRequest {
    std::filesystem::path checkpoint;  // <run>/checkpoints/task_<k>
    EvalMode mode = EvalMode::kLinear;
    std::optional<int> k;  // knn; default from the run config
    // Transfer target. synthetic-gaussians reuses the run's synthetic
    // settings with the seed shifted by one.
    std::string target = "cifar10";
    std::string target_root = "data/cifar10";
};

// Rebuilds the model from the run directory alone, checks the checkpoint
// belongs to it and writes eval_<mode>_<checkpoint>.json next to the
// report. Returns the written record.
nlohmann::json evaluate_checkpoint(const EvalRequest& req);

struct SweepCell {
    std::string value;
    bool ok = false;
    std::string error;
    std::string hash;
    std::optional<eval::MetricsReport> report;
};

struct SweepResult {
    std::filesystem::path dir;
    std::vector<SweepCell> cells;
};

// Axis names: buffer_budget, alpha, zeta, strategy.
std::vector<std::string> sweep_axes();

// One run per value with the axis overridden. A failing cell is recorded
// and the sweep continues; finished cells are reused. Writes sweep.csv,
// sweep.json and sweep.png under <output_root>/sweep/<hash>.
SweepResult run_sweep(const nlohmann::json& base, const std::string& axis, const std::vector<std::string>& values,
                      const RunOptions& opt = {});

struct ConfusionResult {
    std::filesystem::path dir;
    std::vector<confusion::CurveSeries> curves;  // mean over seeds per learner/schedule
    nlohmann::json summary;
};

// Every learner x schedule x seed cell; writes summary.json, curves.csv
// and la/tp/wp.png under <output_root>/confusion/<hash>.
ConfusionResult run_confusion_study(const ConfusionStudy& study, const RunOptions& opt = {});

// Regenerates the images of a run, sweep or confusion directory from its
// records. Returns the written files.
std::vector<std::filesystem::path> replot(const std::filesystem::path& dir);

}  // namespace cromo::experiment
