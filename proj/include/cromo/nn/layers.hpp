#pragma once

#include "cromo/rng.hpp"
#include "cromo/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace cromo::nn {

// kTrain uses batch statistics in normalization layers and updates running
// estimates; kEval uses the running estimates only.
enum class Mode { kTrain, kEval };

struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    // Biases and normalization affine terms are excluded from weight decay
    // and LARS adaptation.
    bool decay = true;
};

// Non-trainable state (normalization running statistics).
struct StateTensor {
    std::string name;
    Mat* value = nullptr;
};

// Values saved by a forward pass that its backward pass needs. Composite
// layers nest the caches of their children.
struct Cache {
    std::vector<Mat> saved;
    std::vector<Cache> children;
};

class Layer {
public:
    virtual ~Layer() = default;

    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual ImageShape input_shape() const = 0;
    [[nodiscard]] virtual ImageShape output_shape() const = 0;

    // Rows of `x` are samples. `cache` may be null when no backward follows.
    virtual Mat forward(const Mat& x, Mode mode, Cache* cache) = 0;
    // Accumulates parameter gradients and returns d(loss)/d(input).
    virtual Mat backward(const Mat& grad_out, const Cache& cache) = 0;

    virtual void collect(const std::string& prefix, std::vector<Parameter*>& params,
                         std::vector<StateTensor>& state);
    [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

class Linear final : public Layer {
public:
    Linear(int in, int out, bool bias, Rng& rng);

    std::string kind() const override { return "linear"; }
    ImageShape input_shape() const override { return {in_, 1, 1}; }
    ImageShape output_shape() const override { return {out_, 1, 1}; }
    Mat forward(const Mat& x, Mode mode, Cache* cache) override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

private:
    int in_, out_;
    bool has_bias_;
    Parameter weight_;  // [out x in]
    Parameter bias_;    // [1 x out]
};

// Normalizes each channel over the batch (and spatial positions for image
// inputs), followed by a per-channel affine transform.
class BatchNorm final : public Layer {
public:
    explicit BatchNorm(ImageShape shape, double momentum = 0.1, double eps = 1e-5);

    std::string kind() const override { return "batchnorm"; }
    ImageShape input_shape() const override { return shape_; }
    ImageShape output_shape() const override { return shape_; }
    Mat forward(const Mat& x, Mode mode, Cache* cache) override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

private:
    ImageShape shape_;
    double momentum_, eps_;
    Parameter gamma_, beta_;  // [1 x C]
    Mat running_mean_, running_var_;  // [1 x C]
};

class ReLU final : public Layer {
public:
    explicit ReLU(ImageShape shape) : shape_(shape) {}
    std::string kind() const override { return "relu"; }
    ImageShape input_shape() const override { return shape_; }
    ImageShape output_shape() const override { return shape_; }
    Mat forward(const Mat& x, Mode mode, Cache* cache) override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

private:
    ImageShape shape_;
};

class Conv2d final : public Layer {
public:
    Conv2d(ImageShape in, int out_channels, int kernel, int stride, int padding, bool bias, Rng& rng);

    std::string kind() const override { return "conv2d"; }
    ImageShape input_shape() const override { return in_; }
    ImageShape output_shape() const override { return out_; }
    Mat forward(const Mat& x, Mode mode, Cache* cache) override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

private:
    Mat im2col(const Mat& x) const;
    Mat col2im(const Mat& cols, int batch) const;

    ImageShape in_, out_;
    int kernel_, stride_, padding_;
    bool has_bias_;
    Parameter weight_;  // [out_channels x in_channels*k*k]
    Parameter bias_;    // [1 x out_channels]
};

// Mean over spatial positions: [B x C*H*W] -> [B x C].
class GlobalAvgPool final : public Layer {
public:
    explicit GlobalAvgPool(ImageShape in) : in_(in) {}
    std::string kind() const override { return "avgpool"; }
    ImageShape input_shape() const override { return in_; }
    ImageShape output_shape() const override { return {in_.channels, 1, 1}; }
    Mat forward(const Mat& x, Mode mode, Cache* cache) override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

private:
    ImageShape in_;
};

class Sequential final : public Layer {
public:
    explicit Sequential(ImageShape in) : in_(in) {}
    Sequential(const Sequential& other);
    Sequential& operator=(const Sequential& other);
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    // Appends a layer whose input shape must match the current output shape.
    Sequential& add(LayerPtr layer);
    [[nodiscard]] bool empty() const { return layers_.empty(); }
    [[nodiscard]] std::size_t size() const { return layers_.size(); }

    std::string kind() const override { return "sequential"; }
    ImageShape input_shape() const override { return in_; }
    ImageShape output_shape() const override;
    Mat forward(const Mat& x, Mode mode, Cache* cache) override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }

private:
    ImageShape in_;
    std::vector<LayerPtr> layers_;
};

// relu(main(x) + shortcut(x)); an empty shortcut is the identity.
class Residual final : public Layer {
public:
    Residual(Sequential main, Sequential shortcut);

    std::string kind() const override { return "residual"; }
    ImageShape input_shape() const override { return main_.input_shape(); }
    ImageShape output_shape() const override { return main_.output_shape(); }
    Mat forward(const Mat& x, Mode mode, Cache* cache) override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Residual>(*this); }

private:
    Sequential main_, shortcut_;
};

}  // namespace cromo::nn
