#pragma once

#include "cromo/data/augment.hpp"
#include "cromo/data/task_split.hpp"
#include "cromo/nn/trinet.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cromo::eval {

struct ProbeConfig {
    int epochs = 100;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0;
    int batch_size = 256;
    std::uint64_t seed = 0;

    // Out-of-distribution transfer defaults.
    static ProbeConfig transfer();
    static ProbeConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;
};

// Softmax regression on standardized features.
struct LinearProbe {
    RowVec feature_mean, feature_scale;  // applied before the linear map
    Mat weight;  // [classes x D]
    RowVec bias;  // [1 x classes]

    [[nodiscard]] Mat logits(const Mat& features) const;
    [[nodiscard]] std::vector<int> predict(const Mat& features) const;
};

LinearProbe fit_linear_probe(const Mat& features, const std::vector<int>& labels, int class_count,
                             const ProbeConfig& cfg);

// Encoder features of every sample under the eval transform, in dataset
// order. Runs in inference mode and never changes the network.
using FeatureFn = std::function<Mat(const ImageBatch&)>;
Mat encode_dataset(const FeatureFn& encoder, const data::LabeledDataset& ds, const data::AugmentationPolicy& policy,
                   int batch_size = 256);
FeatureFn encoder_features(nn::TriNet& net);

struct MetricsReport {
    long n_total = 0;
    long n_class_correct = 0;
    long n_task_correct = 0;
    double la = 0, tp = 0, wp = 0;
    bool wp_defined = false;  // false when n_task_correct == 0 (wp then 0)
    std::vector<double> per_task_accuracy;  // class accuracy per true task
    std::vector<std::vector<long>> confusion;  // [true class][predicted class]
    std::optional<double> knn_accuracy;

    [[nodiscard]] nlohmann::json to_json() const;
};

// class_to_task[c] is the task of class c.
MetricsReport compute_la_wp_tp(const std::vector<int>& predictions, const std::vector<int>& labels,
                               const std::vector<int>& class_to_task);

// Cosine k-NN with similarity-weighted votes.
std::vector<int> knn_predict(const Mat& train_features, const std::vector<int>& train_labels,
                             const Mat& test_features, int k, int class_count);
double knn_eval(const Mat& train_features, const std::vector<int>& train_labels, const Mat& test_features,
                const std::vector<int>& test_labels, int k, int class_count);

// M(i, j): k-NN accuracy on task j (train bank and test split of task j)
// using the model saved after task i; entries with j > i are absent.
struct TaskMatrix {
    Mat value;
    std::vector<std::vector<bool>> present;

    // max_i M(i, j) - M(T, j) over present entries, per column.
    [[nodiscard]] std::vector<double> forgetting() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

TaskMatrix per_task_knn_matrix(const std::vector<FeatureFn>& checkpoints, const data::TaskSequence& train,
                               const data::TaskSequence& test, const data::AugmentationPolicy& policy, int k);

// Formatted rows mirroring an LA / WP / TP results table.
std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);
void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace cromo::eval
