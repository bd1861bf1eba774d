#pragma once

#include "cromo/nn/layers.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cromo::nn {

struct ModelConfig {
    std::string arch = "mlp";  // mlp | small_cnn | resnet18 | resnet50
    std::vector<int> encoder_hidden{64};  // mlp hidden widths
    int feature_dim = 32;                 // mlp/small_cnn; fixed by resnet depth
    int projector_layers = 3;
    int projector_hidden = 0;  // 0 means embed_dim
    int embed_dim = 128;
    bool predictor = false;    // BYOL head
    int predictor_hidden = 4096;
    bool distill_head = false;  // temporal predictor for distillation
    int distill_hidden = 0;     // 0 means embed_dim
    bool distill_head_bn = true;
    std::uint64_t init_seed = 0;

    static ModelConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;
};

// Projector/predictor widths per SSL objective for a dataset family
// ("cifar10", "cifar100", "tinyimagenet").
ModelConfig table_dims(const std::string& arch, const std::string& ssl_kind, const std::string& dataset);

struct Embedding {
    Mat h;  // encoder features [B x D_f]
    Mat z;  // projector output [B x D_z], not normalized
};

struct EmbedTrace {
    Cache encoder, projector;
};

// Encoder f, projector g, optional BYOL predictor q and optional temporal
// predictor used for distillation.
class TriNet {
public:
    TriNet(const ModelConfig& cfg, ImageShape input);

    // Throws RuntimeError when outputs are not finite.
    Embedding embed(const ImageBatch& x, Mode mode, EmbedTrace* trace = nullptr);
    Mat features(const ImageBatch& x, Mode mode);
    // Backpropagates d(loss)/dz (and optionally an extra d(loss)/dh)
    // through projector and encoder, accumulating parameter gradients.
    void backward(const EmbedTrace& trace, const Mat& grad_z, const Mat* grad_h = nullptr);

    Sequential& encoder() { return encoder_; }
    Sequential& projector() { return projector_; }
    [[nodiscard]] const Sequential& encoder() const { return encoder_; }
    [[nodiscard]] const Sequential& projector() const { return projector_; }
    [[nodiscard]] bool has_predictor() const { return predictor_.has_value(); }
    [[nodiscard]] bool has_distill_head() const { return distill_head_.has_value(); }
    Sequential& predictor();
    Sequential& distill_head();

    [[nodiscard]] const ModelConfig& config() const { return cfg_; }
    [[nodiscard]] ImageShape input_shape() const { return input_; }
    [[nodiscard]] int feature_dim() const { return encoder_.output_shape().size(); }
    [[nodiscard]] int embed_dim() const { return projector_.output_shape().size(); }

    // Parameters with canonical names ("encoder.3.weight", ...).
    std::vector<Parameter*> parameters();
    std::vector<Parameter*> encoder_projector_parameters();
    std::vector<StateTensor> state();
    void zero_grad();

private:
    ModelConfig cfg_;
    ImageShape input_;
    Sequential encoder_, projector_;
    std::optional<Sequential> predictor_, distill_head_;
};

// Immutable copy of encoder + projector from the previous task. Forward
// passes run in inference mode and never record caches.
class FrozenModel {
public:
    explicit FrozenModel(const TriNet& source);

    Embedding embed(const ImageBatch& x) const;
    [[nodiscard]] int embed_dim() const { return projector_.output_shape().size(); }
    // Hash over every parameter and running-statistic byte.
    [[nodiscard]] std::uint64_t parameter_hash() const;
    [[nodiscard]] std::vector<std::pair<std::string, Mat>> named_tensors() const;

private:
    // Forward needs non-const access for the shared Layer interface; kEval
    // forward passes do not mutate any layer.
    mutable Sequential encoder_, projector_;
};

// Momentum-averaged shadow of encoder + projector (BYOL target).
class EmaTarget {
public:
    explicit EmaTarget(TriNet& online);

    // target <- m * target + (1 - m) * online for every parameter.
    void update(TriNet& online, double m);
    Embedding embed(const ImageBatch& x);
    std::vector<Parameter*> parameters();
    std::vector<StateTensor> state();

private:
    Sequential encoder_, projector_;
};

// Cosine ramp of the EMA momentum from `base` to 1 over a task.
double ema_momentum(double base, long step, long total_steps);

FrozenModel snapshot(const TriNet& net);

std::uint64_t hash_tensors(const std::vector<Parameter*>& params, const std::vector<StateTensor>& state);

// Builders, exposed for tests.
Sequential build_encoder(const ModelConfig& cfg, ImageShape input, Rng& rng);
Sequential build_mlp_head(int in, int hidden, int out, int layers, bool batch_norm, Rng& rng);

}  // namespace cromo::nn
