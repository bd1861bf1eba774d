#include "cromo/nn/trinet.hpp"

#include "cromo/error.hpp"

#include <array>
#include <cmath>

namespace cromo::nn {

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "arch") c.arch = v.get<std::string>();
        else if (key == "encoder_hidden") c.encoder_hidden = v.get<std::vector<int>>();
        else if (key == "feature_dim") c.feature_dim = v.get<int>();
        else if (key == "projector_layers") c.projector_layers = v.get<int>();
        else if (key == "projector_hidden") c.projector_hidden = v.get<int>();
        else if (key == "embed_dim") c.embed_dim = v.get<int>();
        else if (key == "predictor") c.predictor = v.get<bool>();
        else if (key == "predictor_hidden") c.predictor_hidden = v.get<int>();
        else if (key == "distill_head") c.distill_head = v.get<bool>();
        else if (key == "distill_hidden") c.distill_hidden = v.get<int>();
        else if (key == "distill_head_bn") c.distill_head_bn = v.get<bool>();
        else if (key == "init_seed") c.init_seed = v.get<std::uint64_t>();
        else throw ValidationError("model: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

nlohmann::json ModelConfig::to_json() const {
    return {{"arch", arch},
            {"encoder_hidden", encoder_hidden},
            {"feature_dim", feature_dim},
            {"projector_layers", projector_layers},
            {"projector_hidden", projector_hidden},
            {"embed_dim", embed_dim},
            {"predictor", predictor},
            {"predictor_hidden", predictor_hidden},
            {"distill_head", distill_head},
            {"distill_hidden", distill_hidden},
            {"distill_head_bn", distill_head_bn},
            {"init_seed", init_seed}};
}

void ModelConfig::validate() const {
    require(arch == "mlp" || arch == "small_cnn" || arch == "resnet18" || arch == "resnet50",
            "model: unknown arch '" + arch + "' (expected mlp, small_cnn, resnet18 or resnet50)");
    require(embed_dim > 0, "model: embed_dim must be positive");
    require(feature_dim > 0, "model: feature_dim must be positive");
    require(projector_layers >= 1, "model: projector_layers must be >= 1");
    require(projector_hidden >= 0 && distill_hidden >= 0, "model: hidden widths must be >= 0");
    require(!predictor || predictor_hidden > 0, "model: predictor_hidden must be positive");
    for (int w : encoder_hidden) require(w > 0, "model: encoder_hidden widths must be positive");
}

ModelConfig table_dims(const std::string& arch, const std::string& ssl_kind, const std::string& dataset) {
    ModelConfig c;
    c.arch = arch;
    const int family = dataset == "cifar10" ? 0 : dataset == "cifar100" ? 1 : 2;
    if (ssl_kind == "corinfomax") {
        c.embed_dim = std::array<int, 3>{64, 128, 64}[static_cast<std::size_t>(family)];
    } else if (ssl_kind == "simclr") {
        c.embed_dim = std::array<int, 3>{128, 128, 2048}[static_cast<std::size_t>(family)];
    } else if (ssl_kind == "byol") {
        c.embed_dim = 4096;
        c.predictor = true;
        c.predictor_hidden = 4096;
    } else if (ssl_kind == "barlow_twins") {
        c.embed_dim = 2048;
    } else {
        throw ValidationError("unknown ssl kind '" + ssl_kind + "'");
    }
    c.validate();
    return c;
}

namespace {

LayerPtr conv(ImageShape in, int out, int k, int stride, int pad, Rng& rng) {
    return std::make_unique<Conv2d>(in, out, k, stride, pad, false, rng);
}

// Conv-BN(-ReLU) unit appended to `seq`.
void conv_bn(Sequential& seq, int out, int k, int stride, int pad, bool relu, Rng& rng) {
    seq.add(conv(seq.output_shape(), out, k, stride, pad, rng));
    seq.add(std::make_unique<BatchNorm>(seq.output_shape()));
    if (relu) seq.add(std::make_unique<ReLU>(seq.output_shape()));
}

LayerPtr basic_block(ImageShape in, int planes, int stride, Rng& rng) {
    Sequential main(in);
    conv_bn(main, planes, 3, stride, 1, true, rng);
    conv_bn(main, planes, 3, 1, 1, false, rng);
    Sequential shortcut(in);
    if (stride != 1 || in.channels != planes) conv_bn(shortcut, planes, 1, stride, 0, false, rng);
    return std::make_unique<Residual>(std::move(main), std::move(shortcut));
}

LayerPtr bottleneck_block(ImageShape in, int planes, int stride, Rng& rng) {
    constexpr int kExpansion = 4;
    Sequential main(in);
    conv_bn(main, planes, 1, 1, 0, true, rng);
    conv_bn(main, planes, 3, stride, 1, true, rng);
    conv_bn(main, planes * kExpansion, 1, 1, 0, false, rng);
    Sequential shortcut(in);
    if (stride != 1 || in.channels != planes * kExpansion) conv_bn(shortcut, planes * kExpansion, 1, stride, 0, false, rng);
    return std::make_unique<Residual>(std::move(main), std::move(shortcut));
}

// CIFAR-style ResNet: 3x3 stem without max-pooling.
Sequential resnet(ImageShape input, const std::array<int, 4>& blocks, bool bottleneck, Rng& rng) {
    Sequential net(input);
    conv_bn(net, 64, 3, 1, 1, true, rng);
    const std::array<int, 4> planes{64, 128, 256, 512};
    for (std::size_t stage = 0; stage < 4; ++stage)
        for (int b = 0; b < blocks[stage]; ++b) {
            const int stride = (stage > 0 && b == 0) ? 2 : 1;
            net.add(bottleneck ? bottleneck_block(net.output_shape(), planes[stage], stride, rng)
                               : basic_block(net.output_shape(), planes[stage], stride, rng));
        }
    net.add(std::make_unique<GlobalAvgPool>(net.output_shape()));
    return net;
}

}  // namespace

Sequential build_mlp_head(int in, int hidden, int out, int layers, bool batch_norm, Rng& rng) {
    Sequential seq(ImageShape{in, 1, 1});
    for (int l = 0; l < layers - 1; ++l) {
        seq.add(std::make_unique<Linear>(seq.output_shape().size(), hidden, !batch_norm, rng));
        if (batch_norm) seq.add(std::make_unique<BatchNorm>(seq.output_shape()));
        seq.add(std::make_unique<ReLU>(seq.output_shape()));
    }
    seq.add(std::make_unique<Linear>(seq.output_shape().size(), out, true, rng));
    return seq;
}

Sequential build_encoder(const ModelConfig& cfg, ImageShape input, Rng& rng) {
    if (cfg.arch == "mlp") {
        Sequential seq(ImageShape{input.size(), 1, 1});
        std::vector<int> widths = cfg.encoder_hidden;
        widths.push_back(cfg.feature_dim);
        for (int w : widths) {
            seq.add(std::make_unique<Linear>(seq.output_shape().size(), w, false, rng));
            seq.add(std::make_unique<BatchNorm>(seq.output_shape()));
            seq.add(std::make_unique<ReLU>(seq.output_shape()));
        }
        return seq;
    }
    if (cfg.arch == "small_cnn") {
        Sequential seq(input);
        conv_bn(seq, 32, 3, 1, 1, true, rng);
        conv_bn(seq, 64, 3, 2, 1, true, rng);
        conv_bn(seq, cfg.feature_dim, 3, 2, 1, true, rng);
        seq.add(std::make_unique<GlobalAvgPool>(seq.output_shape()));
        return seq;
    }
    if (cfg.arch == "resnet18") return resnet(input, {2, 2, 2, 2}, false, rng);
    if (cfg.arch == "resnet50") return resnet(input, {3, 4, 6, 3}, true, rng);
    throw ValidationError("unknown arch '" + cfg.arch + "'");
}

TriNet::TriNet(const ModelConfig& cfg, ImageShape input)
    : cfg_(cfg), input_(input), encoder_(input), projector_(ImageShape{1, 1, 1}) {
    cfg_.validate();
    require(input.size() > 0, "trinet: empty input shape");
    Rng rng = Rng::derive(cfg.init_seed, 0x1417);
    encoder_ = build_encoder(cfg_, input, rng);
    const int d_f = encoder_.output_shape().size();
    const int d_z = cfg_.embed_dim;
    const int proj_hidden = cfg_.projector_hidden > 0 ? cfg_.projector_hidden : d_z;
    projector_ = build_mlp_head(d_f, proj_hidden, d_z, cfg_.projector_layers, true, rng);
    if (cfg_.predictor) predictor_ = build_mlp_head(d_z, cfg_.predictor_hidden, d_z, 2, true, rng);
    if (cfg_.distill_head) {
        const int hidden = cfg_.distill_hidden > 0 ? cfg_.distill_hidden : d_z;
        distill_head_ = build_mlp_head(d_z, hidden, d_z, 2, cfg_.distill_head_bn, rng);
    }
}

Sequential& TriNet::predictor() {
    if (!predictor_) throw ValidationError("trinet: no predictor head configured");
    return *predictor_;
}

Sequential& TriNet::distill_head() {
    if (!distill_head_) throw ValidationError("trinet: no distillation head configured");
    return *distill_head_;
}

namespace {

void check_finite(const Mat& m, const char* what) {
    if (m.allFinite()) return;
    Eigen::Index bad = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i)
        if (!std::isfinite(m.data()[i])) ++bad;
    throw RuntimeError(std::string("non-finite ") + what + ": " + std::to_string(bad) + " of " +
                       std::to_string(m.size()) + " entries");
}

}  // namespace

Embedding TriNet::embed(const ImageBatch& x, Mode mode, EmbedTrace* trace) {
    require(x.shape.size() == input_.size(), "trinet: input shape " + x.shape.to_string() + " does not match " +
                                                 input_.to_string());
    Embedding e;
    e.h = encoder_.forward(x.data, mode, trace ? &trace->encoder : nullptr);
    check_finite(e.h, "encoder features");
    e.z = projector_.forward(e.h, mode, trace ? &trace->projector : nullptr);
    check_finite(e.z, "embeddings");
    return e;
}

Mat TriNet::features(const ImageBatch& x, Mode mode) {
    require(x.shape.size() == input_.size(), "trinet: input shape mismatch");
    Mat h = encoder_.forward(x.data, mode, nullptr);
    check_finite(h, "encoder features");
    return h;
}

void TriNet::backward(const EmbedTrace& trace, const Mat& grad_z, const Mat* grad_h) {
    Mat gh = projector_.backward(grad_z, trace.projector);
    if (grad_h) gh += *grad_h;
    encoder_.backward(gh, trace.encoder);
}

std::vector<Parameter*> TriNet::encoder_projector_parameters() {
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    encoder_.collect("encoder", params, state);
    projector_.collect("projector", params, state);
    return params;
}

std::vector<Parameter*> TriNet::parameters() {
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    encoder_.collect("encoder", params, state);
    projector_.collect("projector", params, state);
    if (predictor_) predictor_->collect("predictor", params, state);
    if (distill_head_) distill_head_->collect("distill_head", params, state);
    return params;
}

std::vector<StateTensor> TriNet::state() {
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    encoder_.collect("encoder", params, state);
    projector_.collect("projector", params, state);
    if (predictor_) predictor_->collect("predictor", params, state);
    if (distill_head_) distill_head_->collect("distill_head", params, state);
    return state;
}

void TriNet::zero_grad() {
    for (auto* p : parameters()) p->grad.setZero();
}

// ---------------------------------------------------------------------------

FrozenModel::FrozenModel(const TriNet& source)
    : encoder_(source.encoder()), projector_(source.projector()) {}

Embedding FrozenModel::embed(const ImageBatch& x) const {
    require(x.shape.size() == encoder_.input_shape().size(), "frozen model: input shape mismatch");
    Embedding e;
    e.h = encoder_.forward(x.data, Mode::kEval, nullptr);
    e.z = projector_.forward(e.h, Mode::kEval, nullptr);
    if (!e.z.allFinite()) throw RuntimeError("frozen model produced non-finite embeddings");
    return e;
}

std::vector<std::pair<std::string, Mat>> FrozenModel::named_tensors() const {
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    encoder_.collect("encoder", params, state);
    projector_.collect("projector", params, state);
    std::vector<std::pair<std::string, Mat>> out;
    for (auto* p : params) out.emplace_back(p->name, p->value);
    for (auto& s : state) out.emplace_back(s.name, *s.value);
    return out;
}

std::uint64_t FrozenModel::parameter_hash() const {
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    encoder_.collect("encoder", params, state);
    projector_.collect("projector", params, state);
    return hash_tensors(params, state);
}

FrozenModel snapshot(const TriNet& net) { return FrozenModel(net); }

std::uint64_t hash_tensors(const std::vector<Parameter*>& params, const std::vector<StateTensor>& state) {
    std::uint64_t h = fnv1a64(std::string("tensors"));
    for (const auto* p : params) {
        h = fnv1a64(p->name.data(), p->name.size(), h);
        h = fnv1a64(p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()), h);
    }
    for (const auto& s : state) {
        h = fnv1a64(s.name.data(), s.name.size(), h);
        h = fnv1a64(s.value->data(), sizeof(double) * static_cast<std::size_t>(s.value->size()), h);
    }
    return h;
}

// ---------------------------------------------------------------------------

EmaTarget::EmaTarget(TriNet& online) : encoder_(online.encoder()), projector_(online.projector()) {}

std::vector<Parameter*> EmaTarget::parameters() {
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    encoder_.collect("encoder", params, state);
    projector_.collect("projector", params, state);
    return params;
}

std::vector<StateTensor> EmaTarget::state() {
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    encoder_.collect("encoder", params, state);
    projector_.collect("projector", params, state);
    return state;
}

void EmaTarget::update(TriNet& online, double m) {
    require(m >= 0.0 && m <= 1.0, "ema_update: momentum must be in [0,1]");
    auto target = parameters();
    auto source = online.encoder_projector_parameters();
    require(target.size() == source.size(), "ema_update: parameter count mismatch");
    for (std::size_t i = 0; i < target.size(); ++i) {
        require(target[i]->value.rows() == source[i]->value.rows() && target[i]->value.cols() == source[i]->value.cols(),
                "ema_update: shape mismatch at " + source[i]->name);
        if (m == 1.0) continue;
        if (m == 0.0) {
            target[i]->value = source[i]->value;
            continue;
        }
        target[i]->value = m * target[i]->value + (1.0 - m) * source[i]->value;
    }
}

Embedding EmaTarget::embed(const ImageBatch& x) {
    Embedding e;
    e.h = encoder_.forward(x.data, Mode::kTrain, nullptr);
    e.z = projector_.forward(e.h, Mode::kTrain, nullptr);
    if (!e.z.allFinite()) throw RuntimeError("EMA target produced non-finite embeddings");
    return e;
}

double ema_momentum(double base, long step, long total_steps) {
    if (total_steps <= 0) return base;
    const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return 1.0 - (1.0 - base) * (std::cos(M_PI * progress) + 1.0) / 2.0;
}

}  // namespace cromo::nn
