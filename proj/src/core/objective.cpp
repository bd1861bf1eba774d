#include "cromo/core/objective.hpp"

#include "cromo/error.hpp"

namespace cromo::core {

using losses::LossGrad;
using losses::SslKind;
using losses::SslLossSpec;

namespace {

const std::vector<std::pair<std::string, Strategy>>& strategy_table() {
    static const std::vector<std::pair<std::string, Strategy>> t = {
        {"finetune", Strategy::kFinetune},           {"er", Strategy::kEr},
        {"cassle", Strategy::kCassle},               {"cassle_plus", Strategy::kCasslePlus},
        {"cromo_star", Strategy::kCromoStar},        {"cromo", Strategy::kCromo},
        {"within_task_mix", Strategy::kWithinTaskMix}, {"cross_task_mix", Strategy::kCrossTaskMix},
    };
    return t;
}

// Calls the SSL loss, threading the CorInfoMax state of `slot` when a state
// map is supplied.
LossGrad call_ssl(const SslLossSpec& spec, const Mat& a, const Mat& b, const Mat* predicted, const Mat* negatives,
                  const Vec* weights, LossStates* states, const std::string& slot) {
    losses::SslAux aux;
    aux.predicted = predicted;
    aux.negatives = negatives;
    aux.weights = weights;
    if (spec.kind == SslKind::kCorInfoMax && states) {
        auto it = states->find(slot);
        if (it == states->end())
            it = states->emplace(slot, losses::CovarianceState::initial(static_cast<int>(a.cols()), spec.eps)).first;
        losses::CovarianceState next;
        aux.state = &it->second;
        aux.next_state = &next;
        LossGrad g = losses::ssl_loss(spec, a, b, aux);
        it->second = std::move(next);
        return g;
    }
    return losses::ssl_loss(spec, a, b, aux);
}

void add_to(Mat& dst, const Mat& g) {
    if (g.size() == 0) return;
    if (dst.size() == 0) dst = g;
    else dst += g;
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
    for (const auto& [n, s] : strategy_table())
        if (n == name) return s;
    std::string known;
    for (const auto& [n, s] : strategy_table()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown strategy '" + name + "' (expected one of " + known + ")");
}

std::string to_string(Strategy s) {
    for (const auto& [n, v] : strategy_table())
        if (v == s) return n;
    return "?";
}

std::vector<std::string> strategy_names() {
    std::vector<std::string> out;
    for (const auto& [n, s] : strategy_table()) out.push_back(n);
    return out;
}

StrategyTraits traits(Strategy s) {
    StrategyTraits t;
    switch (s) {
        case Strategy::kFinetune: break;
        case Strategy::kEr: t.replay = true; break;
        case Strategy::kCassle:
            t.distill = true;
            t.default_zeta = 1;
            break;
        case Strategy::kCasslePlus:
            t.replay = t.distill = true;
            t.default_zeta = 1;
            break;
        case Strategy::kCromoStar: t.mixup = t.cross_task = t.cross_model = true; break;
        case Strategy::kCromo:
            t.mixup = t.cross_task = t.cross_model = t.distill = true;
            t.default_zeta = 1;
            break;
        case Strategy::kWithinTaskMix: t.mixup = true; break;
        case Strategy::kCrossTaskMix: t.mixup = t.cross_task = true; break;
    }
    return t;
}

CromoGrad cromo_loss(const SslLossSpec& spec, const Mat& z_mix, const Mat* q_mix, const Mat& z_t, const Mat& partner,
                     const Vec& lambda, LossStates* states, const std::string& slot) {
    require(z_mix.rows() == z_t.rows() && z_mix.rows() == partner.rows() && z_mix.cols() == z_t.cols() &&
                z_mix.cols() == partner.cols(),
            "cromo_loss: z_mix, z_t and partner must share a shape");
    require(lambda.size() == z_mix.rows(), "cromo_loss: one lambda per row required");
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        require(lambda(i) >= 0 && lambda(i) <= 1, "cromo_loss: lambda out of [0,1]");
    if (spec.kind == SslKind::kByol) require(q_mix != nullptr, "cromo_loss: byol requires the predictor output");

    CromoGrad out;
    const std::string slot_a = slot + ".current", slot_b = slot + ".partner";
    if (spec.pairwise()) {
        const Vec w_a = lambda;
        const Vec w_b = (1.0 - lambda.array()).matrix();
        const bool nce = spec.kind == SslKind::kSimclr;
        LossGrad a = call_ssl(spec, z_mix, z_t, q_mix, nce ? &partner : nullptr, &w_a, states, slot_a);
        LossGrad b = call_ssl(spec, z_mix, partner, q_mix, nce ? &z_t : nullptr, &w_b, states, slot_b);
        out.value = a.value + b.value;
        out.g_mix = a.g1 + b.g1;
        out.g_current = a.g2;
        out.g_partner = b.g2;
        if (nce) {
            out.g_current += b.g_extra;
            out.g_partner += a.g_extra;
        }
    } else {
        const double lbar = lambda.mean();
        LossGrad a = call_ssl(spec, z_mix, z_t, nullptr, nullptr, nullptr, states, slot_a);
        LossGrad b = call_ssl(spec, z_mix, partner, nullptr, nullptr, nullptr, states, slot_b);
        out.value = lbar * a.value + (1 - lbar) * b.value;
        out.g_mix = lbar * a.g1 + (1 - lbar) * b.g1;
        out.g_current = lbar * a.g2;
        out.g_partner = (1 - lbar) * b.g2;
    }
    return out;
}

DistillGrad distill_loss(const SslLossSpec& spec, const std::array<Mat, 2>& h_t, const std::array<Mat, 2>& frozen_t,
                         LossStates* states) {
    DistillGrad out;
    for (int v = 0; v < 2; ++v) {
        require(h_t[v].size() > 0 && frozen_t[v].size() > 0, "distill_loss: missing head output or frozen embedding");
        const std::string slot = "distill.v" + std::to_string(v + 1);
        LossGrad g = spec.kind == SslKind::kByol ? losses::byol_mse(h_t[v], frozen_t[v])
                                                 : call_ssl(spec, h_t[v], frozen_t[v], nullptr, nullptr, nullptr,
                                                            states, slot);
        out.value += g.value;
        out.g_h[v] = std::move(g.g1);
    }
    return out;
}

LossGrad task_loss(const SslLossSpec& spec, const ObjectiveInputs& in, LossStates* states) {
    const auto& v1 = in.views[0];
    const auto& v2 = in.views[1];
    if (spec.kind == SslKind::kByol) {
        require(v1.q_t.size() > 0 && v2.target_t.size() > 0, "task_loss: byol requires q_t and target_t");
        return call_ssl(spec, v1.z_t, v2.target_t, &v1.q_t, nullptr, nullptr, states, "task");
    }
    return call_ssl(spec, v1.z_t, v2.z_t, nullptr, nullptr, nullptr, states, "task");
}

LossBundle total_loss(Strategy strategy, const SslLossSpec& spec, const ObjectiveInputs& in, double zeta,
                      bool first_task, ObjectiveGrads* grads, LossStates* states) {
    const StrategyTraits tr = traits(strategy);
    require(zeta >= 0, "total_loss: zeta must be >= 0");
    LossBundle bundle;
    bundle.strategy = strategy;
    bundle.zeta = tr.distill ? zeta : 0.0;
    if (grads) *grads = ObjectiveGrads{};

    const LossGrad task = task_loss(spec, in, states);
    bundle.task_loss = task.value;
    if (grads) {
        if (spec.kind == SslKind::kByol) {
            (*grads)[0].q_t = task.g1;
            (*grads)[1].target_t = task.g2;
        } else {
            (*grads)[0].z_t = task.g1;
            (*grads)[1].z_t = task.g2;
        }
    }

    if (!first_task && tr.distill && bundle.zeta > 0) {
        const std::array<Mat, 2> h{in.views[0].h_t, in.views[1].h_t};
        const std::array<Mat, 2> fz{in.views[0].frozen_t, in.views[1].frozen_t};
        DistillGrad d = distill_loss(spec, h, fz, states);
        bundle.distill_loss = d.value;
        if (grads)
            for (int v = 0; v < 2; ++v) add_to((*grads)[v].h_t, bundle.zeta * d.g_h[v]);
    }

    if (!first_task && tr.mixup) {
        require(in.lambda.size() > 0, "total_loss: mixup strategies need lambda after the first task");
        bundle.lambda = in.lambda;
        for (int v = 0; v < 2; ++v) {
            const ViewEmbeddings& e = in.views[v];
            require(e.z_mix.size() > 0 && e.partner.size() > 0, "total_loss: missing mixed or partner embeddings");
            const bool byol = spec.kind == SslKind::kByol;
            const Mat& current = byol ? e.target_t : e.z_t;
            // Replay strategies never mix, so z_t holds exactly the current rows.
            CromoGrad c = cromo_loss(spec, e.z_mix, byol ? &e.q_mix : nullptr, current, e.partner, in.lambda, states,
                                     "cromo.v" + std::to_string(v + 1));
            (v == 0 ? bundle.cromo_loss_v1 : bundle.cromo_loss_v2) = c.value;
            if (grads) {
                ViewEmbeddings& g = (*grads)[v];
                add_to(byol ? g.q_mix : g.z_mix, c.g_mix);
                add_to(byol ? g.target_t : g.z_t, c.g_current);
                add_to(g.partner, c.g_partner);
            }
        }
    }

    bundle.total = bundle.task_loss + bundle.zeta * bundle.distill_loss + bundle.cromo_loss_v1 + bundle.cromo_loss_v2;
    return bundle;
}

}  // namespace cromo::core
