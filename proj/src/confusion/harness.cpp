#include "cromo/confusion/harness.hpp"

#include "cromo/core/trainer.hpp"
#include "cromo/data/schedule.hpp"
#include "cromo/error.hpp"
#include "cromo/plot.hpp"

#include <cmath>
#include <fstream>

namespace cromo::confusion {

namespace fs = std::filesystem;

ScheduleKind parse_schedule(const std::string& name) {
    if (name == "cil_minibatch") return ScheduleKind::kCilMinibatch;
    if (name == "dil_minibatch") return ScheduleKind::kDilMinibatch;
    if (name == "single_pool") return ScheduleKind::kSinglePool;
    throw ValidationError("confusion: unknown schedule '" + name +
                          "' (expected cil_minibatch, dil_minibatch or single_pool)");
}

std::string to_string(ScheduleKind s) {
    switch (s) {
        case ScheduleKind::kCilMinibatch: return "cil_minibatch";
        case ScheduleKind::kDilMinibatch: return "dil_minibatch";
        case ScheduleKind::kSinglePool: return "single_pool";
    }
    return "?";
}

ConfusionExperiment ConfusionExperiment::from_json(const nlohmann::json& j) {
    require(j.is_object(), "confusion: expected an object");
    ConfusionExperiment e;
    for (const auto& [key, v] : j.items()) {
        if (key == "schedule") e.schedule = parse_schedule(v.get<std::string>());
        else if (key == "learner") e.learner = v.get<std::string>();
        else if (key == "tasks") e.tasks = v.get<int>();
        else if (key == "iterations") e.iterations = v.get<int>();
        else if (key == "batch_size") e.batch_size = v.get<int>();
        else if (key == "probe_every") e.probe_every = v.get<int>();
        else if (key == "probe") e.probe = eval::ProbeConfig::from_json(v);
        else if (key == "ssl") e.ssl = losses::SslLossSpec::from_json(v);
        else if (key == "model") e.model = nn::ModelConfig::from_json(v);
        else if (key == "optim") e.optim = nn::OptimConfig::from_json(v);
        else if (key == "augmentation") e.augmentation = data::AugmentationPolicy::from_json(v);
        else if (key == "seed") e.seed = v.get<std::uint64_t>();
        else throw ValidationError("confusion: unknown key '" + key + "'");
    }
    e.validate();
    return e;
}

nlohmann::json ConfusionExperiment::to_json() const {
    return {{"schedule", to_string(schedule)},
            {"learner", learner},
            {"tasks", tasks},
            {"iterations", iterations},
            {"batch_size", batch_size},
            {"probe_every", probe_every},
            {"probe", probe.to_json()},
            {"ssl", ssl.to_json()},
            {"model", model.to_json()},
            {"optim", optim.to_json()},
            {"augmentation", augmentation.to_json()},
            {"seed", seed}};
}

void ConfusionExperiment::validate() const {
    if (!supervised()) losses::parse_ssl_kind(learner);
    require(tasks >= 2, "confusion: tasks must be >= 2");
    require(iterations >= 1, "confusion: iterations must be >= 1");
    require(batch_size >= 2, "confusion: batch_size must be >= 2");
    require(probe_every >= 1, "confusion: probe_every must be >= 1");
    probe.validate();
    model.validate();
    optim.validate();
    ssl.validate();
    if (learner == "byol") require(model.predictor, "confusion: byol learner needs model.predictor = true");
}

namespace {

// Encoder plus a linear classifier trained with cross-entropy; the control
// condition for the SSL learners.
class SupervisedLearner {
public:
    SupervisedLearner(const nn::ModelConfig& cfg, ImageShape input, int classes, const nn::OptimConfig& optim)
        : net_(cfg, input), rng_(Rng::derive(cfg.init_seed, 17)),
          head_(net_.feature_dim(), classes, true, rng_) {
        params_ = net_.parameters();
        std::vector<nn::StateTensor> unused;
        head_.collect("classifier", params_, unused);
        opt_.emplace(params_, optim);
    }

    void step(const ImageBatch& x, const std::vector<int>& labels, double lr) {
        nn::EmbedTrace trace;
        const nn::Embedding e = net_.embed(x, nn::Mode::kTrain, &trace);
        nn::Cache cache;
        const Mat logits = head_.forward(e.h, nn::Mode::kTrain, &cache);
        Mat p = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
        p.array().colwise() /= p.rowwise().sum().array();
        if (!all_finite(p)) throw RuntimeError("supervised learner: non-finite logits");
        for (std::size_t i = 0; i < labels.size(); ++i) p(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
        p /= static_cast<double>(labels.size());
        for (auto* q : params_) q->grad.setZero();
        const Mat gh = head_.backward(p, cache);
        net_.backward(trace, Mat::Zero(e.z.rows(), e.z.cols()), &gh);
        opt_->step(lr);
    }

    nn::TriNet& net() { return net_; }

private:
    nn::TriNet net_;
    Rng rng_;
    nn::Linear head_;
    std::vector<nn::Parameter*> params_;
    std::optional<nn::Optimizer> opt_;
};

}  // namespace

CurveSeries run_confusion_experiment(const ConfusionExperiment& exp, const data::LabeledDataset& train) {
    exp.validate();
    train.validate();
    exp.augmentation.validate(train.shape.channels);
    // The grouping used for TP/WP; the same for every schedule.
    const data::TaskSequence cil = data::split_class_incremental(train, exp.tasks, exp.seed);
    const std::vector<int> class_to_task = cil.class_to_task();
    const data::TaskSequence seq =
        exp.schedule == ScheduleKind::kDilMinibatch ? data::split_data_incremental(train, exp.tasks, exp.seed) : cil;
    const data::ScheduleMode mode =
        exp.schedule == ScheduleKind::kSinglePool ? data::ScheduleMode::kSinglePool : data::ScheduleMode::kRoundRobin;
    const data::IterationSchedule schedule =
        data::make_minibatch_schedule(seq, exp.batch_size, exp.iterations, mode, exp.seed);

    nn::ModelConfig model = exp.model;
    if (model.init_seed == 0) model.init_seed = exp.seed + 1;
    const long per_epoch = (train.size() + exp.batch_size - 1) / exp.batch_size;
    const auto warmup = static_cast<long>(std::llround(exp.optim.warmup_epochs * static_cast<double>(per_epoch)));

    std::optional<core::Trainer> ssl;
    std::optional<SupervisedLearner> sup;
    std::optional<nn::Optimizer> ssl_opt;
    Rng aug = Rng::derive(exp.seed, 2);
    if (exp.supervised()) {
        sup.emplace(model, train.shape, train.class_count, exp.optim);
    } else {
        core::TrainConfig tc;
        tc.strategy = core::Strategy::kFinetune;
        tc.ssl = exp.ssl;
        tc.ssl.kind = losses::parse_ssl_kind(exp.learner);
        tc.model = model;
        tc.optim = exp.optim;
        tc.augmentation = exp.augmentation;
        tc.batch_size = exp.batch_size;
        tc.buffer_budget = 0;
        tc.seed = exp.seed;
        tc.validate(exp.tasks);
        ssl.emplace(tc, train.shape);
        ssl_opt.emplace(ssl->state().net->parameters(), exp.optim);
    }
    nn::TriNet& net = sup ? sup->net() : *ssl->state().net;

    CurveSeries out;
    out.learner = exp.learner;
    out.schedule = to_string(exp.schedule);
    eval::ProbeConfig probe = exp.probe;
    if (probe.seed == 0) probe.seed = exp.seed;
    auto record = [&](int iteration) {
        const Mat f = eval::encode_dataset(eval::encoder_features(net), train, exp.augmentation);
        const eval::LinearProbe p = eval::fit_linear_probe(f, train.labels, train.class_count, probe);
        const eval::MetricsReport r = eval::compute_la_wp_tp(p.predict(f), train.labels, class_to_task);
        out.points.push_back({iteration, r.la, r.wp, r.tp});
    };

    for (int it = 0; it < exp.iterations; ++it) {
        const auto& batch = schedule.order[static_cast<std::size_t>(it)];
        const double lr = nn::cosine_lr(exp.optim.lr, it, exp.iterations, warmup);
        if (sup) {
            std::vector<int> labels;
            for (int i : batch.indices) labels.push_back(train.labels[static_cast<std::size_t>(i)]);
            const ImageBatch x = data::apply_ops(data::to_batch(train, batch.indices), exp.augmentation.train_ops,
                                                 exp.augmentation, aug);
            sup->step(x, labels, lr);
        } else {
            ssl->train_batch(train, batch.indices, lr, *ssl_opt, it, exp.iterations);
        }
        if ((it + 1) % exp.probe_every == 0 || it + 1 == exp.iterations) record(it + 1);
    }
    return out;
}

void emit_curves(const std::vector<CurveSeries>& series, const fs::path& out) {
    require(!series.empty(), "emit_curves: no series");
    for (const auto& s : series) require(!s.points.empty(), "emit_curves: series '" + s.label() + "' has no points");
    fs::create_directories(out);

    const auto csv = out / "curves.csv";
    {
        std::ofstream f(csv.string() + ".tmp");
        if (!f) throw RuntimeError("emit_curves: cannot write '" + csv.string() + "'");
        f << "learner,schedule,metric,iteration,value\n";
        for (const char* metric : {"LA", "TP", "WP"})
            for (const auto& s : series)
                for (const auto& p : s.points) {
                    const double v = metric[0] == 'L' ? p.la : metric[0] == 'T' ? p.tp : p.wp;
                    f << s.learner << ',' << s.schedule << ',' << metric << ',' << p.iteration << ',' << v << '\n';
                }
        if (!f) throw RuntimeError("emit_curves: write failure on '" + csv.string() + "'");
    }
    fs::rename(csv.string() + ".tmp", csv);

    for (const char* metric : {"LA", "TP", "WP"}) {
        std::vector<plot::Series> lines;
        for (const auto& s : series) {
            plot::Series l{s.label(), {}, {}};
            for (const auto& p : s.points) {
                l.x.push_back(p.iteration);
                l.y.push_back(100.0 * (metric[0] == 'L' ? p.la : metric[0] == 'T' ? p.tp : p.wp));
            }
            lines.push_back(std::move(l));
        }
        plot::PlotSpec spec;
        spec.title = std::string("train ") + metric;
        spec.x_label = "iteration";
        spec.y_label = std::string(metric) + " (%)";
        spec.y_min = 0;
        spec.y_max = 100;
        std::string name(metric);
        for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        plot::write_line_plot(out / (name + ".png"), spec, lines);
    }
}

}  // namespace cromo::confusion
