#include "cromo/core/trainer.hpp"

#include "cromo/core/mixup.hpp"
#include "cromo/error.hpp"

#include <cmath>
#include <sstream>

namespace cromo::core {

namespace fs = std::filesystem;
using losses::SslKind;

double TrainConfig::effective_zeta() const {
    const StrategyTraits t = traits(strategy);
    if (!t.distill) return 0.0;
    return zeta.value_or(t.default_zeta);
}

int TrainConfig::epochs_for(int task_index) const {
    if (epochs.size() == 1) return epochs.front();
    require(task_index >= 0 && task_index < static_cast<int>(epochs.size()), "trainer: no epoch count for task " +
                                                                                 std::to_string(task_index));
    return epochs[static_cast<std::size_t>(task_index)];
}

void TrainConfig::validate(int num_tasks) const {
    ssl.validate();
    model.validate();
    optim.validate();
    const StrategyTraits t = traits(strategy);
    require(!epochs.empty(), "trainer: epochs must not be empty");
    require(epochs.size() == 1 || static_cast<int>(epochs.size()) == num_tasks,
            "trainer: epochs list has " + std::to_string(epochs.size()) + " entries for " + std::to_string(num_tasks) +
                " tasks");
    for (int e : epochs) require(e >= 1, "trainer: epochs must be >= 1");
    require(batch_size >= 2, "trainer: batch_size must be >= 2");
    require(buffer_batch >= 1, "trainer: buffer_batch must be >= 1");
    require(buffer_budget >= 0, "trainer: buffer_budget must be >= 0");
    require(alpha > 0, "trainer: alpha must be > 0");
    require(ema_base >= 0 && ema_base <= 1, "trainer: ema_base must be in [0,1]");
    if (zeta) {
        require(*zeta >= 0, "trainer: zeta must be >= 0");
        if (!t.distill && *zeta != 0)
            throw ValidationError("trainer: strategy " + to_string(strategy) + " has no distillation term; zeta must be 0");
    }
    if (ssl.kind == SslKind::kByol) require(model.predictor, "trainer: byol needs model.predictor = true");
    if (t.distill && effective_zeta() > 0)
        require(model.distill_head, "trainer: strategy " + to_string(strategy) + " needs model.distill_head = true");
    if (t.mixup && t.cross_task)
        require(buffer_budget > 0, "trainer: strategy " + to_string(strategy) + " needs buffer_budget > 0");
}

nlohmann::json StepRecord::to_json() const {
    return {{"step", step},
            {"task", task},
            {"epoch", epoch},
            {"lr", lr},
            {"task_loss", bundle.task_loss},
            {"distill_loss", bundle.distill_loss},
            {"cromo_loss_v1", bundle.cromo_loss_v1},
            {"cromo_loss_v2", bundle.cromo_loss_v2},
            {"total", bundle.total}};
}

Trainer::Trainer(TrainConfig cfg, ImageShape input, std::string config_hash)
    : cfg_(std::move(cfg)), traits_(traits(cfg_.strategy)), input_(input), hash_(std::move(config_hash)) {
    cfg_.augmentation.validate(input.channels);
    nn::ModelConfig m = cfg_.model;
    if (m.init_seed == 0) m.init_seed = cfg_.seed;
    state_.net = std::make_unique<nn::TriNet>(m, input);
    if (cfg_.ssl.kind == SslKind::kByol) state_.target.emplace(*state_.net);
    state_.buffer = MemoryBuffer(cfg_.buffer_budget, input);
    state_.data_rng = Rng::derive(cfg_.seed, 1);
    state_.aug_rng = Rng::derive(cfg_.seed, 2);
    state_.buffer_rng = Rng::derive(cfg_.seed, 3);
    state_.mix_rng = Rng::derive(cfg_.seed, 4);
    state_.select_rng = Rng::derive(cfg_.seed, 5);
}

namespace {

ImageBatch view_of(const Views& v, int i) { return i == 0 ? v.first : v.second; }

ImageBatch concat_all(const std::vector<const ImageBatch*>& parts) {
    ImageBatch out = *parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) out = concat_rows(out, *parts[i]);
    return out;
}

void add_rows(Mat& dst, Eigen::Index begin, const Mat& g) {
    if (g.size() == 0) return;
    dst.middleRows(begin, g.rows()) += g;
}

}  // namespace

LossBundle Trainer::train_batch(const data::LabeledDataset& ds, const std::vector<int>& indices, double lr,
                                nn::Optimizer& opt, long task_step, long task_steps) {
    RunState& st = state_;
    nn::TriNet& net = *st.net;
    const bool first = st.task_index == 0;
    const bool byol = cfg_.ssl.kind == SslKind::kByol;
    const double zeta = cfg_.effective_zeta();

    const Views cur = data::two_views(data::to_batch(ds, indices), cfg_.augmentation, st.aug_rng);
    const int b = cur.first.batch_size();

    std::optional<Views> replay;
    if (!first && traits_.replay && !st.buffer.empty()) {
        const BufferSample s = st.buffer.sample_batch(cfg_.buffer_batch, st.buffer_rng);
        replay = data::two_views(s.images, cfg_.augmentation, st.aug_rng);
    }
    std::optional<MixBatch> mb;
    if (!first && traits_.mixup) {
        if (traits_.cross_task) {
            if (st.buffer.empty()) throw RuntimeError("trainer: cross-task mixup needs a non-empty buffer");
            const BufferSample s = st.buffer.sample_batch(cfg_.buffer_batch, st.buffer_rng);
            const Views bv = data::two_views(s.images, cfg_.augmentation, st.aug_rng);
            mb = build_mix_batch(cur, bv, cfg_.alpha, st.mix_rng);
        } else {
            mb = build_within_task_mix(cur, cfg_.alpha, st.mix_rng);
        }
    }
    const bool distill = !first && traits_.distill && zeta > 0;
    if ((distill || (mb && traits_.cross_model)) && !st.frozen)
        throw RuntimeError("trainer: strategy " + to_string(cfg_.strategy) + " needs the previous-task model");
    const bool online_partner = mb && traits_.cross_task && !traits_.cross_model && !byol;

    const int r = replay ? replay->first.batch_size() : 0;
    const int m = mb ? b : 0;
    const int p = online_partner ? b : 0;

    struct ViewWork {
        nn::EmbedTrace trace;
        nn::Cache pred_cache, head_cache;
        Mat z;
        bool has_pred = false, has_head = false;
    };
    std::array<ViewWork, 2> work;
    ObjectiveInputs in;
    if (mb) in.lambda = mb->lambda;

    for (int v = 0; v < 2; ++v) {
        ViewWork& w = work[static_cast<std::size_t>(v)];
        ViewEmbeddings& e = in.views[static_cast<std::size_t>(v)];
        const ImageBatch xt = view_of(cur, v);
        std::optional<ImageBatch> xr, xm, xp;
        std::vector<const ImageBatch*> parts{&xt};
        if (replay) parts.push_back(&xr.emplace(view_of(*replay, v)));
        if (mb) parts.push_back(&xm.emplace(v == 0 ? mb->x_mix1 : mb->x_mix2));
        if (online_partner) parts.push_back(&xp.emplace(v == 0 ? mb->partner1 : mb->partner2));
        const ImageBatch online_in = concat_all(parts);
        const ImageBatch task_in = replay ? concat_rows(xt, *xr) : xt;

        w.z = net.embed(online_in, nn::Mode::kTrain, &w.trace).z;
        e.z_t = w.z.topRows(b + r);
        if (mb) e.z_mix = w.z.middleRows(b + r, m);

        if (byol) {
            // The task term only reads the view-1 prediction.
            if (v == 0 || mb) {
                const Mat q = net.predictor().forward(w.z.topRows(b + r + m), nn::Mode::kTrain, &w.pred_cache);
                w.has_pred = true;
                e.q_t = q.topRows(b + r);
                if (mb) e.q_mix = q.middleRows(b + r, m);
            }
            e.target_t = st.target->embed(task_in).z;
        }
        if (distill) {
            e.h_t = net.distill_head().forward(e.z_t, nn::Mode::kTrain, &w.head_cache);
            w.has_head = true;
            e.frozen_t = st.frozen->embed(task_in).z;
        }
        if (mb) {
            const ImageBatch& partner = v == 0 ? mb->partner1 : mb->partner2;
            if (traits_.cross_model) e.partner = st.frozen->embed(partner).z;
            else if (traits_.cross_task) e.partner = byol ? st.target->embed(partner).z : w.z.middleRows(b + r + m, p);
            else e.partner = gather_rows(byol ? e.target_t : e.z_t, mb->pairing);
        }
    }

    ObjectiveGrads grads;
    const LossBundle bundle = total_loss(cfg_.strategy, cfg_.ssl, in, zeta, first, &grads, &st.cov_states);
    if (!std::isfinite(bundle.total)) {
        std::ostringstream msg;
        msg << "trainer: non-finite loss at step " << st.step << " (task " << st.task_index + 1 << "): task "
            << bundle.task_loss << ", distill " << bundle.distill_loss << ", cromo " << bundle.cromo_loss_v1 << " / "
            << bundle.cromo_loss_v2;
        throw RuntimeError(msg.str());
    }

    net.zero_grad();
    for (int v = 0; v < 2; ++v) {
        ViewWork& w = work[static_cast<std::size_t>(v)];
        const ViewEmbeddings& g = grads[static_cast<std::size_t>(v)];
        Mat gz = Mat::Zero(w.z.rows(), w.z.cols());
        add_rows(gz, 0, g.z_t);
        if (w.has_head && g.h_t.size() > 0) add_rows(gz, 0, net.distill_head().backward(g.h_t, w.head_cache));
        if (w.has_pred && (g.q_t.size() > 0 || g.q_mix.size() > 0)) {
            Mat gq = Mat::Zero(b + r + m, w.z.cols());
            add_rows(gq, 0, g.q_t);
            add_rows(gq, b + r, g.q_mix);
            add_rows(gz, 0, net.predictor().backward(gq, w.pred_cache));
        }
        add_rows(gz, b + r, g.z_mix);
        if (mb && g.partner.size() > 0 && !traits_.cross_model && !byol) {
            if (traits_.cross_task) {
                add_rows(gz, b + r + m, g.partner);
            } else {
                for (int i = 0; i < b; ++i) gz.row(mb->pairing[static_cast<std::size_t>(i)]) += g.partner.row(i);
            }
        }
        net.backward(w.trace, gz);
    }
    opt.step(lr);
    if (st.target) st.target->update(net, nn::ema_momentum(cfg_.ema_base, task_step, task_steps));
    return bundle;
}

std::vector<LossBundle> Trainer::train_task(const data::Task& task) {
    RunState& st = state_;
    const int n = task.dataset.size();
    require(n >= 2, "trainer: task " + std::to_string(task.task_id) + " has fewer than two samples");
    const int bs = std::min(cfg_.batch_size, n);
    const long per_epoch = (n + bs - 1) / bs;
    const int epochs = cfg_.epochs_for(st.task_index);
    const long total = per_epoch * epochs;
    const auto warmup = static_cast<long>(std::llround(cfg_.optim.warmup_epochs * static_cast<double>(per_epoch)));
    nn::Optimizer opt(st.net->parameters(), cfg_.optim);

    std::vector<LossBundle> out;
    out.reserve(static_cast<std::size_t>(total));
    long k = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const std::vector<int> perm = st.data_rng.permutation(n);
        for (long s = 0; s < per_epoch; ++s, ++k) {
            const auto begin = static_cast<std::size_t>(s * bs);
            const std::size_t end = std::min(begin + static_cast<std::size_t>(bs), perm.size());
            std::vector<int> idx(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                                 perm.begin() + static_cast<std::ptrdiff_t>(end));
            // A lone trailing sample cannot form batch statistics; pair it
            // with a random partner from the task.
            if (idx.size() == 1) idx.push_back(perm[static_cast<std::size_t>(st.data_rng.index(n - 1))]);
            const double lr = nn::cosine_lr(cfg_.optim.lr, k, total, warmup);
            LossBundle bundle = train_batch(task.dataset, idx, lr, opt, k, total);
            if (on_step_) on_step_(StepRecord{st.step, st.task_index, epoch, lr, bundle});
            ++st.step;
            out.push_back(std::move(bundle));
        }
    }
    return out;
}

void Trainer::end_task(const data::Task& task) {
    RunState& st = state_;
    st.frozen.emplace(*st.net);
    if (cfg_.buffer_budget > 0 && traits_.needs_buffer())
        st.buffer.update_after_task(task.dataset, task.task_id, st.select_rng);
    st.cov_states.clear();
    ++st.task_index;
    if (ckpt_dir_) nn::save_container(*ckpt_dir_ / ("task_" + std::to_string(st.task_index)), checkpoint());
}

void Trainer::run(const data::TaskSequence& seq) {
    cfg_.validate(seq.size());
    for (int t = state_.task_index; t < seq.size(); ++t) {
        const data::Task& task = seq.tasks[static_cast<std::size_t>(t)];
        train_task(task);
        end_task(task);
    }
}

nn::Container Trainer::checkpoint() {
    RunState& st = state_;
    nn::Container c;
    c.config_hash = hash_;
    c.meta["task_index"] = std::to_string(st.task_index);
    c.meta["step"] = std::to_string(st.step);
    c.meta["strategy"] = to_string(cfg_.strategy);
    c.meta["ssl"] = losses::to_string(cfg_.ssl.kind);
    c.meta["rng.data"] = st.data_rng.save_state();
    c.meta["rng.aug"] = st.aug_rng.save_state();
    c.meta["rng.buffer"] = st.buffer_rng.save_state();
    c.meta["rng.mix"] = st.mix_rng.save_state();
    c.meta["rng.select"] = st.select_rng.save_state();
    nn::append_network(c, *st.net, "net.");
    if (st.target) nn::append_tensors(c, st.target->parameters(), st.target->state(), "target.");
    st.buffer.save(c);
    return c;
}

void Trainer::resume(const fs::path& path) {
    const nn::Container c = nn::load_container(path);
    if (!hash_.empty() && c.config_hash != hash_)
        throw ValidationError("resume: checkpoint config hash " + c.config_hash + " differs from current " + hash_);
    auto meta = [&](const std::string& k) {
        auto it = c.meta.find(k);
        if (it == c.meta.end()) throw RuntimeError("resume: checkpoint lacks '" + k + "'");
        return it->second;
    };
    RunState& st = state_;
    nn::load_network(c, *st.net, "net.");
    if (st.target) nn::load_tensors(c, st.target->parameters(), st.target->state(), "target.");
    st.buffer = MemoryBuffer::load(c);
    st.task_index = std::stoi(meta("task_index"));
    st.step = std::stol(meta("step"));
    st.data_rng.load_state(meta("rng.data"));
    st.aug_rng.load_state(meta("rng.aug"));
    st.buffer_rng.load_state(meta("rng.buffer"));
    st.mix_rng.load_state(meta("rng.mix"));
    st.select_rng.load_state(meta("rng.select"));
    st.cov_states.clear();
    if (st.task_index > 0) st.frozen.emplace(*st.net);
    else st.frozen.reset();
}

}  // namespace cromo::core
