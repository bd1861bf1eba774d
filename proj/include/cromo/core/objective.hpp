#pragma once

#include "cromo/losses/ssl_losses.hpp"

#include <array>
#include <map>
#include <string>

namespace cromo::core {

enum class Strategy {
    kFinetune,
    kEr,
    kCassle,
    kCasslePlus,
    kCromoStar,
    kCromo,
    // Ablations: input mixup partner and output embedding source varied.
    kWithinTaskMix,  // partner from the current batch, current-model outputs
    kCrossTaskMix,   // partner from the buffer, current-model outputs
};

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy s);
std::vector<std::string> strategy_names();

struct StrategyTraits {
    bool replay = false;        // buffer views join the task-loss batch
    bool distill = false;       // temporal-predictor distillation term
    bool mixup = false;         // mixed-sample terms
    bool cross_task = false;    // mix partner from the buffer (else within-task)
    bool cross_model = false;   // partner embeddings from the frozen model
    double default_zeta = 0;
    [[nodiscard]] bool needs_buffer() const { return replay || (mixup && cross_task); }
    [[nodiscard]] bool needs_old_model() const { return distill || (mixup && cross_model); }
};

StrategyTraits traits(Strategy s);

// Embeddings of one augmented view for one training step. Members that a
// strategy does not use stay empty.
struct ViewEmbeddings {
    Mat z_t;       // online embedding of the current view
    Mat q_t;       // BYOL: predictor output of z_t
    Mat target_t;  // BYOL: EMA-target embedding of the current view
    Mat h_t;       // distillation head output of z_t
    Mat frozen_t;  // old-model embedding of the current view
    Mat z_mix;     // online embedding of the mixed view
    Mat q_mix;     // BYOL: predictor output of z_mix
    Mat partner;   // embedding of each mix partner (old model or current model)
};

struct ObjectiveInputs {
    std::array<ViewEmbeddings, 2> views;
    Vec lambda;  // per mixed pair
};

// Gradients with the same layout as the inputs. BYOL gradients land on the
// predictor outputs (q_t, q_mix) rather than on z_t / z_mix.
using ObjectiveGrads = std::array<ViewEmbeddings, 2>;

// CorInfoMax running estimates, one per loss call site ("task",
// "distill.v1", "cromo.v1.current", ...). Missing slots start at eps*I.
using LossStates = std::map<std::string, losses::CovarianceState>;

struct LossBundle {
    double task_loss = 0;
    double distill_loss = 0;
    double cromo_loss_v1 = 0;
    double cromo_loss_v2 = 0;
    double total = 0;
    double zeta = 0;
    Vec lambda;
    Strategy strategy = Strategy::kFinetune;
};

// Gradients of one scalar term with respect to its inputs.
struct CromoGrad {
    double value = 0;
    Mat g_mix;      // wrt z_mix (or q_mix for BYOL)
    Mat g_current;  // wrt z_t (or target_t for BYOL)
    Mat g_partner;
};

// Cross-model mixup loss for one view: lambda L(z_mix, z_t) + (1 - lambda) L(z_mix, partner).
// Pairwise kinds weight per sample; batch-statistic kinds use mean(lambda).
// InfoNCE pools the opposite group as extra negatives in each term. For
// BYOL, `q_mix` is the predictor output of z_mix and z_t is the target
// embedding.
CromoGrad cromo_loss(const losses::SslLossSpec& spec, const Mat& z_mix, const Mat* q_mix, const Mat& z_t,
                     const Mat& partner, const Vec& lambda, LossStates* states = nullptr,
                     const std::string& slot = "cromo");

struct DistillGrad {
    double value = 0;
    std::array<Mat, 2> g_h;  // wrt h(z_t^v)
};

// sum_v L(h(z_t^v), frozen_t^v). BYOL compares the head output to the frozen
// embedding directly (no extra predictor).
DistillGrad distill_loss(const losses::SslLossSpec& spec, const std::array<Mat, 2>& h_t,
                         const std::array<Mat, 2>& frozen_t, LossStates* states = nullptr);

// Task term L(z_t^1, z_t^2); BYOL uses L(q_t^1, target_t^2).
losses::LossGrad task_loss(const losses::SslLossSpec& spec, const ObjectiveInputs& in, LossStates* states = nullptr);

// Total objective for a step. `first_task` drops every term that needs an
// old model or a buffer. Replay strategies expect z_t to already contain the
// buffer rows.
LossBundle total_loss(Strategy strategy, const losses::SslLossSpec& spec, const ObjectiveInputs& in, double zeta,
                      bool first_task, ObjectiveGrads* grads = nullptr, LossStates* states = nullptr);

}  // namespace cromo::core
