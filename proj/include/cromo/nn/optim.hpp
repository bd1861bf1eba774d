#pragma once

#include "cromo/nn/layers.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace cromo::nn {

struct OptimConfig {
    std::string kind = "sgd";  // sgd | lars
    double lr = 0.1;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    double lars_eta = 0.02;  // trust coefficient
    double warmup_epochs = 10;

    static OptimConfig from_json(const nlohmann::json& j);
    [[nodiscard]] nlohmann::json to_json() const;
    void validate() const;
};

// Momentum SGD with decoupled-from-bias weight decay, or LARS (layer-wise
// trust ratio on parameters with decay enabled; others take plain momentum
// steps without decay).
class Optimizer {
public:
    Optimizer(std::vector<Parameter*> params, const OptimConfig& cfg);

    void step(double lr);
    void zero_grad();
    // Velocity buffers in parameter order, for checkpointing.
    std::vector<Mat>& velocity() { return velocity_; }
    [[nodiscard]] const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Mat> velocity_;
    OptimConfig cfg_;
};

// Linear warmup over `warmup_steps`, then cosine decay to zero at
// `total_steps`. Step indices start at 0.
double cosine_lr(double base, long step, long total_steps, long warmup_steps);

}  // namespace cromo::nn
