#include "cromo/nn/optim.hpp"

#include "cromo/error.hpp"

#include <cmath>
#include <numbers>

namespace cromo::nn {

OptimConfig OptimConfig::from_json(const nlohmann::json& j) {
    require(j.is_object(), "optimizer: expected an object");
    OptimConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "kind") c.kind = v.get<std::string>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "momentum") c.momentum = v.get<double>();
        else if (key == "lars_eta") c.lars_eta = v.get<double>();
        else if (key == "warmup_epochs") c.warmup_epochs = v.get<double>();
        else throw ValidationError("optimizer: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

nlohmann::json OptimConfig::to_json() const {
    return {{"kind", kind},         {"lr", lr},           {"weight_decay", weight_decay},
            {"momentum", momentum}, {"lars_eta", lars_eta}, {"warmup_epochs", warmup_epochs}};
}

void OptimConfig::validate() const {
    require(kind == "sgd" || kind == "lars", "optimizer: kind must be sgd or lars, got '" + kind + "'");
    require(lr > 0, "optimizer: lr must be > 0");
    require(weight_decay >= 0, "optimizer: weight_decay must be >= 0");
    require(momentum >= 0 && momentum < 1, "optimizer: momentum must be in [0,1)");
    require(lars_eta > 0, "optimizer: lars_eta must be > 0");
    require(warmup_epochs >= 0, "optimizer: warmup_epochs must be >= 0");
}

Optimizer::Optimizer(std::vector<Parameter*> params, const OptimConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    for (const auto* p : params_) velocity_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
}

void Optimizer::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        Mat& v = velocity_[i];
        Mat g = p.grad;
        if (p.decay && cfg_.weight_decay > 0) g += cfg_.weight_decay * p.value;
        if (cfg_.kind == "lars" && p.decay) {
            const double wn = p.value.norm(), gn = g.norm();
            const double trust = wn > 0 && gn > 0 ? cfg_.lars_eta * wn / gn : 1.0;
            v = cfg_.momentum * v + lr * trust * g;
            p.value -= v;
        } else {
            v = cfg_.momentum * v + g;
            p.value -= lr * v;
        }
    }
}

void Optimizer::zero_grad() {
    for (auto* p : params_) p->grad.setZero();
}

double cosine_lr(double base, long step, long total_steps, long warmup_steps) {
    require(total_steps > 0 && step >= 0, "cosine_lr: invalid step range");
    warmup_steps = std::min(warmup_steps, total_steps);
    if (step < warmup_steps) return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const long span = total_steps - warmup_steps;
    if (span <= 0) return base;
    const double t = static_cast<double>(std::min(step - warmup_steps, span)) / static_cast<double>(span);
    return 0.5 * base * (1 + std::cos(std::numbers::pi * t));
}

}  // namespace cromo::nn
