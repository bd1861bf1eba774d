#pragma once

#include "cromo/rng.hpp"
#include "cromo/tensor.hpp"

#include <json.hpp>

#include <utility>
#include <vector>

namespace cromo::data {

// One stochastic image transform. Pixel values are floats in [0,1], CHW.
struct AugmentOp {
    enum class Kind { kRandomResizedCrop, kHorizontalFlip, kColorJitter, kGrayscale, kGaussianBlur, kSolarize,
                      kGaussianNoise };
    Kind kind = Kind::kHorizontalFlip;
    double probability = 1.0;
    // Kind-specific parameters (unused ones stay at their defaults).
    double scale_min = 0.08, scale_max = 1.0;          // crop area fraction
    double ratio_min = 3.0 / 4.0, ratio_max = 4.0 / 3.0;
    double brightness = 0.4, contrast = 0.4, saturation = 0.2, hue = 0.1;
    double sigma_min = 0.1, sigma_max = 2.0;           // blur
    double threshold = 0.5;                            // solarize
    double stddev = 0.1;                               // additive noise

    static AugmentOp from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
};

struct AugmentationPolicy {
    std::vector<AugmentOp> train_ops;
    std::vector<AugmentOp> eval_ops;
    std::vector<double> mean;  // per channel; empty means 0
    std::vector<double> stddev;  // per channel; empty means 1

    // SimCLR/BYOL-style recipe for natural images.
    static AugmentationPolicy standard(int channels);
    // Crop-free recipe for small synthetic images: additive noise only.
    static AugmentationPolicy noise_only(double stddev);
    static AugmentationPolicy identity();

    static AugmentationPolicy from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate(int channels) const;
};

// Applies `ops` to every image independently, then normalizes.
ImageBatch apply_ops(const ImageBatch& batch, const std::vector<AugmentOp>& ops, const AugmentationPolicy& policy,
                     Rng& rng);

// Two independently augmented, normalized views of one batch.
std::pair<ImageBatch, ImageBatch> two_views(const ImageBatch& batch, const AugmentationPolicy& policy, Rng& rng);

// Eval transform (eval_ops + normalization).
ImageBatch eval_view(const ImageBatch& batch, const AugmentationPolicy& policy, Rng& rng);

}  // namespace cromo::data
