#pragma once

#include "cromo/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cromo::data {

// Raw image dataset. Images are stored HWC, one contiguous byte block per
// sample, in a deterministic order fixed by the source.
struct LabeledDataset {
    std::string name;
    ImageShape shape;  // channels/height/width of every image
    int class_count = 0;
    std::vector<std::uint8_t> pixels;  // size() * shape.size() bytes
    std::vector<int> labels;

    [[nodiscard]] int size() const { return static_cast<int>(labels.size()); }
    [[nodiscard]] const std::uint8_t* image(int i) const {
        return pixels.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(shape.size());
    }

    // Subset in the given index order.
    [[nodiscard]] LabeledDataset subset(const std::vector<int>& indices) const;
    // Per-class sample counts, length class_count.
    [[nodiscard]] std::vector<int> class_histogram() const;
    // Throws ValidationError when an invariant is broken.
    void validate() const;
};

struct DatasetSplits {
    LabeledDataset train;
    LabeledDataset test;
};

// Configuration of the synthetic Gaussian-cluster dataset. Each class has a
// prototype image (mid-gray plus N(0, prototype_scale) per pixel); samples are
// the prototype plus isotropic N(0, noise) pixel noise, clamped to [0,255].
struct SyntheticConfig {
    int classes = 4;
    int train_per_class = 100;
    int test_per_class = 50;
    ImageShape shape{1, 4, 4};
    double prototype_scale = 60.0;  // pixel distance scale between prototypes
    double noise = 20.0;            // per-pixel noise std, in [0,255] units
    std::uint64_t seed = 0;

    static SyntheticConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
};

DatasetSplits make_synthetic_gaussians(const SyntheticConfig& cfg);

// Registry names: cifar10, cifar100, tinyimagenet, synthetic-gaussians.
// `synthetic` is only used for the synthetic dataset.
DatasetSplits load_dataset(const std::string& name, const std::filesystem::path& root,
                           const SyntheticConfig& synthetic = {});

std::vector<std::string> dataset_names();

// Documented class count for a registered name.
int registered_class_count(const std::string& name);

// Loaders for the standard binary distributions.
DatasetSplits load_cifar10(const std::filesystem::path& root);
DatasetSplits load_cifar100(const std::filesystem::path& root);
DatasetSplits load_tinyimagenet(const std::filesystem::path& root);

// Converts selected samples to floats in [0,1], CHW rows.
ImageBatch to_batch(const LabeledDataset& ds, const std::vector<int>& indices);

}  // namespace cromo::data
