#include "cromo/eval/evaluation.hpp"

#include "cromo/error.hpp"
#include "cromo/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace cromo::eval {

ProbeConfig ProbeConfig::transfer() {
    ProbeConfig c;
    c.lr = 0.2;
    c.epochs = 200;
    return c;
}

ProbeConfig ProbeConfig::from_json(const nlohmann::json& j) {
    require(j.is_object(), "probe: expected an object");
    ProbeConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "epochs") c.epochs = v.get<int>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "momentum") c.momentum = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "batch_size") c.batch_size = v.get<int>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else throw ValidationError("probe: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

nlohmann::json ProbeConfig::to_json() const {
    return {{"epochs", epochs},         {"lr", lr},         {"momentum", momentum},
            {"weight_decay", weight_decay}, {"batch_size", batch_size}, {"seed", seed}};
}

void ProbeConfig::validate() const {
    require(epochs >= 1, "probe: epochs must be >= 1");
    require(lr > 0, "probe: lr must be > 0");
    require(momentum >= 0 && momentum < 1, "probe: momentum must be in [0,1)");
    require(weight_decay >= 0, "probe: weight_decay must be >= 0");
    require(batch_size >= 1, "probe: batch_size must be >= 1");
}

Mat LinearProbe::logits(const Mat& features) const {
    require(features.cols() == weight.cols(), "probe: feature width mismatch");
    Mat x = features.rowwise() - feature_mean;
    x.array().rowwise() /= feature_scale.array();
    Mat out = x * weight.transpose();
    out.rowwise() += bias;
    return out;
}

std::vector<int> LinearProbe::predict(const Mat& features) const {
    const Mat l = logits(features);
    std::vector<int> out(static_cast<std::size_t>(l.rows()));
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        Eigen::Index arg = 0;
        l.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

LinearProbe fit_linear_probe(const Mat& features, const std::vector<int>& labels, int class_count,
                             const ProbeConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = features.rows(), d = features.cols();
    require(n > 0 && d > 0, "probe: empty feature matrix");
    require(static_cast<Eigen::Index>(labels.size()) == n, "probe: one label per feature row required");
    require(class_count >= 1, "probe: class_count must be >= 1");
    if (!all_finite(features)) throw RuntimeError("probe: non-finite encoder features");
    for (int y : labels) require(y >= 0 && y < class_count, "probe: label out of range");

    LinearProbe p;
    p.feature_mean = features.colwise().mean();
    const Mat centered = features.rowwise() - p.feature_mean;
    p.feature_scale = (centered.colwise().squaredNorm() / static_cast<double>(n)).array().sqrt().matrix();
    for (Eigen::Index k = 0; k < d; ++k)
        if (!(p.feature_scale(k) > 1e-12)) p.feature_scale(k) = 1.0;
    Mat x = centered;
    x.array().rowwise() /= p.feature_scale.array();

    p.weight = Mat::Zero(class_count, d);
    p.bias = RowVec::Zero(class_count);
    Mat vw = Mat::Zero(class_count, d);
    RowVec vb = RowVec::Zero(class_count);

    Rng rng = Rng::derive(cfg.seed, 0x9e0be);
    const int bs = std::min<int>(cfg.batch_size, static_cast<int>(n));
    const long steps_per_epoch = (n + bs - 1) / bs;
    const long total = steps_per_epoch * cfg.epochs;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int> perm = rng.permutation(static_cast<int>(n));
        for (long s = 0; s < steps_per_epoch; ++s, ++step) {
            const int begin = static_cast<int>(s) * bs;
            const int count = std::min<int>(bs, static_cast<int>(n) - begin);
            std::vector<int> idx(perm.begin() + begin, perm.begin() + begin + count);
            const Mat xb = gather_rows(x, idx);
            Mat logits = xb * p.weight.transpose();
            logits.rowwise() += p.bias;
            Mat prob(logits.rows(), logits.cols());
            for (Eigen::Index i = 0; i < logits.rows(); ++i) {
                const double mx = logits.row(i).maxCoeff();
                prob.row(i) = (logits.row(i).array() - mx).exp().matrix();
                prob.row(i) /= prob.row(i).sum();
                prob(i, labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]) -= 1.0;
            }
            prob /= static_cast<double>(count);
            const Mat gw = prob.transpose() * xb + cfg.weight_decay * p.weight;
            const RowVec gb = prob.colwise().sum();
            const double lr = nn::cosine_lr(cfg.lr, step, total, 0);
            vw = cfg.momentum * vw + gw;
            vb = cfg.momentum * vb + gb;
            p.weight -= lr * vw;
            p.bias -= lr * vb;
        }
    }
    return p;
}

Mat encode_dataset(const FeatureFn& encoder, const data::LabeledDataset& ds, const data::AugmentationPolicy& policy,
                   int batch_size) {
    require(batch_size >= 1, "encode_dataset: batch_size must be >= 1");
    require(ds.size() > 0, "encode_dataset: empty dataset");
    Rng rng = Rng::derive(0, 0xe7a1);
    Mat out;
    for (int begin = 0; begin < ds.size(); begin += batch_size) {
        const int count = std::min(batch_size, ds.size() - begin);
        std::vector<int> idx(static_cast<std::size_t>(count));
        std::iota(idx.begin(), idx.end(), begin);
        const ImageBatch x = data::eval_view(data::to_batch(ds, idx), policy, rng);
        const Mat f = encoder(x);
        if (out.size() == 0) out.resize(ds.size(), f.cols());
        out.middleRows(begin, count) = f;
    }
    if (!all_finite(out)) throw RuntimeError("encode_dataset: non-finite encoder features");
    return out;
}

FeatureFn encoder_features(nn::TriNet& net) {
    return [&net](const ImageBatch& x) { return net.features(x, nn::Mode::kEval); };
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j = {{"n_total", n_total},
                        {"n_class_correct", n_class_correct},
                        {"n_task_correct", n_task_correct},
                        {"LA", la},
                        {"TP", tp},
                        {"WP", wp},
                        {"wp_defined", wp_defined},
                        {"per_task_accuracy", per_task_accuracy},
                        {"confusion", confusion}};
    if (knn_accuracy) j["knn_accuracy"] = *knn_accuracy;
    return j;
}

MetricsReport compute_la_wp_tp(const std::vector<int>& predictions, const std::vector<int>& labels,
                               const std::vector<int>& class_to_task) {
    require(predictions.size() == labels.size(), "metrics: predictions and labels differ in length");
    require(!labels.empty(), "metrics: empty prediction set");
    const int classes = static_cast<int>(class_to_task.size());
    int tasks = 0;
    for (int t : class_to_task) {
        require(t >= 0, "metrics: negative task id in class map");
        tasks = std::max(tasks, t + 1);
    }
    MetricsReport r;
    r.confusion.assign(static_cast<std::size_t>(classes), std::vector<long>(static_cast<std::size_t>(classes), 0));
    std::vector<long> task_total(static_cast<std::size_t>(tasks), 0), task_correct(static_cast<std::size_t>(tasks), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i], p = predictions[i];
        if (y < 0 || y >= classes) throw ValidationError("metrics: class " + std::to_string(y) + " has no task");
        if (p < 0 || p >= classes) throw ValidationError("metrics: predicted class " + std::to_string(p) + " has no task");
        ++r.n_total;
        const auto ty = static_cast<std::size_t>(class_to_task[static_cast<std::size_t>(y)]);
        ++task_total[ty];
        if (class_to_task[static_cast<std::size_t>(p)] == static_cast<int>(ty)) ++r.n_task_correct;
        if (p == y) {
            ++r.n_class_correct;
            ++task_correct[ty];
        }
        ++r.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
    }
    const auto n = static_cast<double>(r.n_total);
    r.la = static_cast<double>(r.n_class_correct) / n;
    r.tp = static_cast<double>(r.n_task_correct) / n;
    r.wp_defined = r.n_task_correct > 0;
    r.wp = r.wp_defined ? static_cast<double>(r.n_class_correct) / static_cast<double>(r.n_task_correct) : 0.0;
    for (int t = 0; t < tasks; ++t) {
        const auto tt = static_cast<std::size_t>(t);
        r.per_task_accuracy.push_back(task_total[tt] > 0 ? static_cast<double>(task_correct[tt]) /
                                                              static_cast<double>(task_total[tt])
                                                        : 0.0);
    }
    return r;
}

std::vector<int> knn_predict(const Mat& train_features, const std::vector<int>& train_labels,
                             const Mat& test_features, int k, int class_count) {
    require(k >= 1, "knn: k must be >= 1");
    require(train_features.rows() > 0 && k <= train_features.rows(), "knn: k exceeds the train bank size");
    require(static_cast<Eigen::Index>(train_labels.size()) == train_features.rows(), "knn: one label per train row");
    require(train_features.cols() == test_features.cols(), "knn: feature width mismatch");
    auto normalized = [](const Mat& m) {
        Mat u = m;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double nrm = m.row(i).norm();
            if (nrm > 0) u.row(i) /= nrm;
        }
        return u;
    };
    const Mat a = normalized(train_features), b = normalized(test_features);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(b.rows()));
    std::vector<int> order(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        const Vec sim = a * b.row(i).transpose();
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int x, int y) {
            return sim(x) > sim(y) || (sim(x) == sim(y) && x < y);
        });
        std::vector<double> votes(static_cast<std::size_t>(class_count), 0.0);
        for (int r = 0; r < k; ++r) {
            const int j = order[static_cast<std::size_t>(r)];
            votes[static_cast<std::size_t>(train_labels[static_cast<std::size_t>(j)])] += sim(j);
        }
        out.push_back(static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
    }
    return out;
}

double knn_eval(const Mat& train_features, const std::vector<int>& train_labels, const Mat& test_features,
                const std::vector<int>& test_labels, int k, int class_count) {
    require(static_cast<Eigen::Index>(test_labels.size()) == test_features.rows(), "knn: one label per test row");
    const std::vector<int> pred = knn_predict(train_features, train_labels, test_features, k, class_count);
    long hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == test_labels[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

std::vector<double> TaskMatrix::forgetting() const {
    const Eigen::Index t = value.rows();
    std::vector<double> out(static_cast<std::size_t>(value.cols()), 0.0);
    for (Eigen::Index j = 0; j < value.cols(); ++j) {
        double best = -1;
        for (Eigen::Index i = 0; i < t; ++i)
            if (present[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) best = std::max(best, value(i, j));
        if (best >= 0 && present[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)])
            out[static_cast<std::size_t>(j)] = best - value(t - 1, j);
    }
    return out;
}

nlohmann::json TaskMatrix::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < value.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < value.cols(); ++j)
            row.push_back(present[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ? nlohmann::json(value(i, j))
                                                                                           : nlohmann::json(nullptr));
        rows.push_back(row);
    }
    return {{"matrix", rows}, {"forgetting", forgetting()}};
}

TaskMatrix per_task_knn_matrix(const std::vector<FeatureFn>& checkpoints, const data::TaskSequence& train,
                               const data::TaskSequence& test, const data::AugmentationPolicy& policy, int k) {
    const int t = train.size();
    require(test.size() == t, "knn matrix: train and test sequences differ in task count");
    if (static_cast<int>(checkpoints.size()) != t)
        throw ValidationError("knn matrix: expected " + std::to_string(t) + " checkpoints, got " +
                              std::to_string(checkpoints.size()));
    TaskMatrix m;
    m.value = Mat::Zero(t, t);
    m.present.assign(static_cast<std::size_t>(t), std::vector<bool>(static_cast<std::size_t>(t), false));
    for (int i = 0; i < t; ++i)
        for (int j = 0; j <= i; ++j) {
            const auto& tr = train.tasks[static_cast<std::size_t>(j)].dataset;
            const auto& te = test.tasks[static_cast<std::size_t>(j)].dataset;
            const Mat ftr = encode_dataset(checkpoints[static_cast<std::size_t>(i)], tr, policy);
            const Mat fte = encode_dataset(checkpoints[static_cast<std::size_t>(i)], te, policy);
            m.value(i, j) = knn_eval(ftr, tr.labels, fte, te.labels, std::min(k, tr.size()), tr.class_count);
            m.present[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
        }
    return m;
}

std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::ostringstream os;
    std::size_t w = 8;
    for (const auto& [name, r] : rows) w = std::max(w, name.size());
    os << std::left << std::setw(static_cast<int>(w)) << "run" << "  " << std::right << std::setw(7) << "LA"
       << std::setw(7) << "WP" << std::setw(7) << "TP" << "\n";
    os << std::fixed << std::setprecision(2);
    for (const auto& [name, r] : rows) {
        os << std::left << std::setw(static_cast<int>(w)) << name << "  " << std::right << std::setw(7) << 100 * r.la;
        if (r.wp_defined) os << std::setw(7) << 100 * r.wp;
        else os << std::setw(7) << "n/a";
        os << std::setw(7) << 100 * r.tp << "\n";
    }
    return os.str();
}

void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& report) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write '" + path.string() + "'");
    out << "true\\pred";
    for (std::size_t c = 0; c < report.confusion.size(); ++c) out << "," << c;
    out << "\n";
    for (std::size_t r = 0; r < report.confusion.size(); ++r) {
        out << r;
        for (long v : report.confusion[r]) out << "," << v;
        out << "\n";
    }
    if (!out) throw RuntimeError("write failure on '" + path.string() + "'");
}

}  // namespace cromo::eval
