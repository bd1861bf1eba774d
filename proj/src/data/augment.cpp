#include "cromo/data/augment.hpp"

#include "cromo/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cromo::data {

namespace {

using Kind = AugmentOp::Kind;

const std::map<std::string, Kind>& kind_names() {
    static const std::map<std::string, Kind> names{
        {"random_resized_crop", Kind::kRandomResizedCrop}, {"horizontal_flip", Kind::kHorizontalFlip},
        {"color_jitter", Kind::kColorJitter},              {"grayscale", Kind::kGrayscale},
        {"gaussian_blur", Kind::kGaussianBlur},            {"solarize", Kind::kSolarize},
        {"gaussian_noise", Kind::kGaussianNoise}};
    return names;
}

std::string kind_name(Kind k) {
    for (const auto& [name, kind] : kind_names())
        if (kind == k) return name;
    return "?";
}

// Image view over one CHW row.
struct Img {
    double* p;
    ImageShape s;
    double& at(int c, int y, int x) { return p[(c * s.height + y) * s.width + x]; }
};

double bilinear(const std::vector<double>& src, const ImageShape& s, int c, double y, double x) {
    y = std::clamp(y, 0.0, s.height - 1.0);
    x = std::clamp(x, 0.0, s.width - 1.0);
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, s.height - 1), x1 = std::min(x0 + 1, s.width - 1);
    const double fy = y - y0, fx = x - x0;
    auto v = [&](int yy, int xx) { return src[static_cast<std::size_t>((c * s.height + yy) * s.width + xx)]; };
    return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
}

void random_resized_crop(Img img, const AugmentOp& op, Rng& rng) {
    const ImageShape s = img.s;
    const double area = static_cast<double>(s.height) * s.width;
    double ch = s.height, cw = s.width;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(op.scale_min, op.scale_max);
        const double log_ratio = rng.uniform(std::log(op.ratio_min), std::log(op.ratio_max));
        const double ratio = std::exp(log_ratio);
        const double w = std::sqrt(target * ratio), h = std::sqrt(target / ratio);
        if (w <= s.width && h <= s.height && w >= 1.0 && h >= 1.0) {
            cw = w;
            ch = h;
            break;
        }
    }
    const double top = rng.uniform(0.0, s.height - ch), left = rng.uniform(0.0, s.width - cw);
    std::vector<double> src(img.p, img.p + s.size());
    for (int c = 0; c < s.channels; ++c)
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x) {
                const double sy = top + (y + 0.5) * ch / s.height - 0.5;
                const double sx = left + (x + 0.5) * cw / s.width - 0.5;
                img.at(c, y, x) = bilinear(src, s, c, sy, sx);
            }
}

void horizontal_flip(Img img) {
    for (int c = 0; c < img.s.channels; ++c)
        for (int y = 0; y < img.s.height; ++y)
            for (int x = 0; x < img.s.width / 2; ++x) std::swap(img.at(c, y, x), img.at(c, y, img.s.width - 1 - x));
}

double luma(Img img, int y, int x) {
    if (img.s.channels < 3) return img.at(0, y, x);
    return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
}

void grayscale(Img img) {
    if (img.s.channels < 3) return;
    for (int y = 0; y < img.s.height; ++y)
        for (int x = 0; x < img.s.width; ++x) {
            const double g = luma(img, y, x);
            for (int c = 0; c < img.s.channels; ++c) img.at(c, y, x) = g;
        }
}

void color_jitter(Img img, const AugmentOp& op, Rng& rng) {
    const ImageShape s = img.s;
    const int n = s.size();
    const double b = rng.uniform(std::max(0.0, 1 - op.brightness), 1 + op.brightness);
    const double k = rng.uniform(std::max(0.0, 1 - op.contrast), 1 + op.contrast);
    const double sat = rng.uniform(std::max(0.0, 1 - op.saturation), 1 + op.saturation);
    const double hue = rng.uniform(-op.hue, op.hue);
    for (int i = 0; i < n; ++i) img.p[i] = std::clamp(img.p[i] * b, 0.0, 1.0);
    double mean = 0;
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) mean += luma(img, y, x);
    mean /= s.height * s.width;
    for (int i = 0; i < n; ++i) img.p[i] = std::clamp((img.p[i] - mean) * k + mean, 0.0, 1.0);
    if (s.channels < 3) return;
    const double angle = hue * 2.0 * M_PI;
    const double cs = std::cos(angle), sn = std::sin(angle);
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            const double g = luma(img, y, x);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp((img.at(c, y, x) - g) * sat + g, 0.0, 1.0);
            // Hue rotation in YIQ chroma plane.
            const double r = img.at(0, y, x), gg = img.at(1, y, x), bb = img.at(2, y, x);
            const double Y = 0.299 * r + 0.587 * gg + 0.114 * bb;
            const double I = 0.596 * r - 0.274 * gg - 0.322 * bb;
            const double Q = 0.211 * r - 0.523 * gg + 0.312 * bb;
            const double I2 = I * cs - Q * sn, Q2 = I * sn + Q * cs;
            img.at(0, y, x) = std::clamp(Y + 0.956 * I2 + 0.621 * Q2, 0.0, 1.0);
            img.at(1, y, x) = std::clamp(Y - 0.272 * I2 - 0.647 * Q2, 0.0, 1.0);
            img.at(2, y, x) = std::clamp(Y - 1.106 * I2 + 1.703 * Q2, 0.0, 1.0);
        }
}

void gaussian_blur(Img img, const AugmentOp& op, Rng& rng) {
    const double sigma = rng.uniform(op.sigma_min, op.sigma_max);
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0;
    for (int i = -radius; i <= radius; ++i) total += kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& w : kernel) w /= total;
    const ImageShape s = img.s;
    std::vector<double> tmp(static_cast<std::size_t>(s.size()));
    auto idx = [&](int c, int y, int x) { return static_cast<std::size_t>((c * s.height + y) * s.width + x); };
    for (int c = 0; c < s.channels; ++c)
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] * img.at(c, y, std::clamp(x + i, 0, s.width - 1));
                tmp[idx(c, y, x)] = acc;
            }
    for (int c = 0; c < s.channels; ++c)
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[idx(c, std::clamp(y + i, 0, s.height - 1), x)];
                img.at(c, y, x) = acc;
            }
}

void apply_one(Img img, const AugmentOp& op, Rng& rng) {
    // The probability draw happens for every op so the stream position does
    // not depend on earlier outcomes.
    const bool fire = rng.bernoulli(op.probability);
    if (!fire) return;
    switch (op.kind) {
        case Kind::kRandomResizedCrop: random_resized_crop(img, op, rng); break;
        case Kind::kHorizontalFlip: horizontal_flip(img); break;
        case Kind::kColorJitter: color_jitter(img, op, rng); break;
        case Kind::kGrayscale: grayscale(img); break;
        case Kind::kGaussianBlur: gaussian_blur(img, op, rng); break;
        case Kind::kSolarize:
            for (int i = 0; i < img.s.size(); ++i)
                if (img.p[i] >= op.threshold) img.p[i] = 1.0 - img.p[i];
            break;
        case Kind::kGaussianNoise:
            for (int i = 0; i < img.s.size(); ++i) img.p[i] += rng.normal(0.0, op.stddev);
            break;
    }
}

}  // namespace

AugmentOp AugmentOp::from_json(const nlohmann::json& j) {
    AugmentOp op;
    require(j.is_object() && j.contains("op"), "augmentation op needs an 'op' field");
    const auto name = j.at("op").get<std::string>();
    auto it = kind_names().find(name);
    require(it != kind_names().end(), "unknown augmentation op '" + name + "'");
    op.kind = it->second;
    for (const auto& [key, v] : j.items()) {
        if (key == "op") continue;
        else if (key == "p") op.probability = v.get<double>();
        else if (key == "scale_min") op.scale_min = v.get<double>();
        else if (key == "scale_max") op.scale_max = v.get<double>();
        else if (key == "ratio_min") op.ratio_min = v.get<double>();
        else if (key == "ratio_max") op.ratio_max = v.get<double>();
        else if (key == "brightness") op.brightness = v.get<double>();
        else if (key == "contrast") op.contrast = v.get<double>();
        else if (key == "saturation") op.saturation = v.get<double>();
        else if (key == "hue") op.hue = v.get<double>();
        else if (key == "sigma_min") op.sigma_min = v.get<double>();
        else if (key == "sigma_max") op.sigma_max = v.get<double>();
        else if (key == "threshold") op.threshold = v.get<double>();
        else if (key == "stddev") op.stddev = v.get<double>();
        else throw ValidationError("augmentation op '" + name + "': unknown key '" + key + "'");
    }
    require(op.probability >= 0.0 && op.probability <= 1.0, "augmentation probability must be in [0,1]");
    return op;
}

nlohmann::json AugmentOp::to_json() const {
    nlohmann::json j{{"op", kind_name(kind)}, {"p", probability}};
    switch (kind) {
        case Kind::kRandomResizedCrop:
            j.update({{"scale_min", scale_min}, {"scale_max", scale_max}, {"ratio_min", ratio_min}, {"ratio_max", ratio_max}});
            break;
        case Kind::kColorJitter:
            j.update({{"brightness", brightness}, {"contrast", contrast}, {"saturation", saturation}, {"hue", hue}});
            break;
        case Kind::kGaussianBlur: j.update({{"sigma_min", sigma_min}, {"sigma_max", sigma_max}}); break;
        case Kind::kSolarize: j["threshold"] = threshold; break;
        case Kind::kGaussianNoise: j["stddev"] = stddev; break;
        default: break;
    }
    return j;
}

AugmentationPolicy AugmentationPolicy::standard(int channels) {
    AugmentationPolicy p;
    AugmentOp crop{.kind = Kind::kRandomResizedCrop, .probability = 1.0};
    AugmentOp flip{.kind = Kind::kHorizontalFlip, .probability = 0.5};
    AugmentOp jitter{.kind = Kind::kColorJitter, .probability = 0.8};
    AugmentOp gray{.kind = Kind::kGrayscale, .probability = 0.2};
    AugmentOp solarize{.kind = Kind::kSolarize, .probability = 0.1};
    p.train_ops = {crop, flip, jitter, gray, solarize};
    if (channels == 3) {
        p.mean = {0.4914, 0.4822, 0.4465};
        p.stddev = {0.2470, 0.2435, 0.2616};
    }
    return p;
}

AugmentationPolicy AugmentationPolicy::noise_only(double stddev) {
    AugmentationPolicy p;
    AugmentOp noise{.kind = Kind::kGaussianNoise, .probability = 1.0};
    noise.stddev = stddev;
    p.train_ops = {noise};
    p.mean = {0.5};
    p.stddev = {0.25};
    return p;
}

AugmentationPolicy AugmentationPolicy::identity() { return {}; }

AugmentationPolicy AugmentationPolicy::from_json(const nlohmann::json& j) {
    AugmentationPolicy p;
    for (const auto& [key, v] : j.items()) {
        if (key == "train_ops") {
            for (const auto& op : v) p.train_ops.push_back(AugmentOp::from_json(op));
        } else if (key == "eval_ops") {
            for (const auto& op : v) p.eval_ops.push_back(AugmentOp::from_json(op));
        } else if (key == "mean") {
            p.mean = v.get<std::vector<double>>();
        } else if (key == "std") {
            p.stddev = v.get<std::vector<double>>();
        } else {
            throw ValidationError("augmentation: unknown key '" + key + "'");
        }
    }
    return p;
}

nlohmann::json AugmentationPolicy::to_json() const {
    nlohmann::json j{{"train_ops", nlohmann::json::array()}, {"eval_ops", nlohmann::json::array()},
                     {"mean", mean}, {"std", stddev}};
    for (const auto& op : train_ops) j["train_ops"].push_back(op.to_json());
    for (const auto& op : eval_ops) j["eval_ops"].push_back(op.to_json());
    return j;
}

void AugmentationPolicy::validate(int channels) const {
    require(mean.empty() || static_cast<int>(mean.size()) == channels || mean.size() == 1,
            "augmentation: mean must have one entry per channel");
    require(stddev.empty() || static_cast<int>(stddev.size()) == channels || stddev.size() == 1,
            "augmentation: std must have one entry per channel");
    for (double s : stddev) require(s > 0.0, "augmentation: std entries must be positive");
}

ImageBatch apply_ops(const ImageBatch& batch, const std::vector<AugmentOp>& ops, const AugmentationPolicy& policy,
                     Rng& rng) {
    require(batch.batch_size() > 0, "augmentation: empty batch");
    policy.validate(batch.shape.channels);
    ImageBatch out = batch;
    const ImageShape s = batch.shape;
    const int plane = s.height * s.width;
    for (int i = 0; i < out.batch_size(); ++i) {
        Img img{out.data.row(i).data(), s};
        for (const auto& op : ops) apply_one(img, op, rng);
        for (int c = 0; c < s.channels; ++c) {
            const double m = policy.mean.empty() ? 0.0 : policy.mean[policy.mean.size() == 1 ? 0 : static_cast<std::size_t>(c)];
            const double sd = policy.stddev.empty() ? 1.0 : policy.stddev[policy.stddev.size() == 1 ? 0 : static_cast<std::size_t>(c)];
            for (int k = 0; k < plane; ++k) img.p[c * plane + k] = (img.p[c * plane + k] - m) / sd;
        }
    }
    return out;
}

std::pair<ImageBatch, ImageBatch> two_views(const ImageBatch& batch, const AugmentationPolicy& policy, Rng& rng) {
    ImageBatch v1 = apply_ops(batch, policy.train_ops, policy, rng);
    ImageBatch v2 = apply_ops(batch, policy.train_ops, policy, rng);
    return {std::move(v1), std::move(v2)};
}

ImageBatch eval_view(const ImageBatch& batch, const AugmentationPolicy& policy, Rng& rng) {
    return apply_ops(batch, policy.eval_ops, policy, rng);
}

}  // namespace cromo::data
