#include "cromo/error.hpp"
#include "cromo/eval/evaluation.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

using namespace cromo;
using namespace cromo::eval;
using testing::random_mat;
using testing::to_grid;

TEST_CASE("hand-enumerated four-sample metrics") {
    // Tasks {0,1} and {2,3}; true -> predicted: 0->0, 1->3, 2->2, 3->2.
    const MetricsReport r = compute_la_wp_tp({0, 3, 2, 2}, {0, 1, 2, 3}, {0, 0, 1, 1});
    CHECK(r.la == 0.5);
    CHECK(r.tp == 0.75);
    CHECK(r.wp == 2.0 / 3.0);
    CHECK(r.n_total == 4);
    CHECK(r.n_class_correct == 2);
    CHECK(r.n_task_correct == 3);
    CHECK(r.wp_defined);
    CHECK(r.confusion[1][3] == 1);
    CHECK(r.per_task_accuracy == std::vector<double>{0.5, 0.5});
}

TEST_CASE("degenerate metric cases") {
    const MetricsReport all = compute_la_wp_tp({0, 1, 2}, {0, 1, 2}, {0, 1, 1});
    CHECK(all.la == 1.0);
    CHECK(all.tp == 1.0);
    CHECK(all.wp == 1.0);
    const MetricsReport wrong = compute_la_wp_tp({2, 2, 0}, {0, 1, 2}, {0, 0, 1});
    CHECK(wrong.tp == 0.0);
    CHECK(wrong.la == 0.0);
    CHECK(wrong.wp == 0.0);
    CHECK_FALSE(wrong.wp_defined);
    CHECK_THROWS_AS(compute_la_wp_tp({0}, {5}, {0, 0}), ValidationError);
}

TEST_CASE("la equals wp times tp on randomized fixtures") {
    Rng rng(40);
    for (int trial = 0; trial < 1000; ++trial) {
        const int classes = 2 + rng.index(12), tasks = 1 + rng.index(classes);
        std::vector<int> c2t(static_cast<std::size_t>(classes));
        for (int c = 0; c < classes; ++c) c2t[static_cast<std::size_t>(c)] = c < tasks ? c : rng.index(tasks);
        const int n = 1 + rng.index(200);
        std::vector<int> pred, truth;
        for (int i = 0; i < n; ++i) {
            truth.push_back(rng.index(classes));
            pred.push_back(rng.bernoulli(0.4) ? truth.back() : rng.index(classes));
        }
        const MetricsReport r = compute_la_wp_tp(pred, truth, c2t);
        std::map<int, int> m;
        for (int c = 0; c < classes; ++c) m[c] = c2t[static_cast<std::size_t>(c)];
        const oracle::Counts o = oracle::la_wp_tp(pred, truth, m);
        CHECK(r.n_class_correct == o.class_correct);
        CHECK(r.n_task_correct == o.task_correct);
        CHECK(r.n_class_correct <= r.n_task_correct);
        long row_total = 0;
        for (const auto& row : r.confusion)
            for (long v : row) row_total += v;
        CHECK(row_total == n);
        if (r.n_task_correct > 0) CHECK(std::fabs(r.la - r.wp * r.tp) < 1e-12);
    }
}

TEST_CASE("knn matches the oracle and separates clusters") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat train = random_mat(30, 4, rng), test = random_mat(10, 4, rng);
        std::vector<int> labels;
        for (int i = 0; i < 30; ++i) labels.push_back(rng.index(3));
        const int k = 1 + rng.index(10);
        CHECK(knn_predict(train, labels, test, k, 3) == oracle::knn(to_grid(train), labels, to_grid(test), k, 3));
    }
    const Mat bank = random_mat(20, 5, rng);
    std::vector<int> lab;
    for (int i = 0; i < 20; ++i) lab.push_back(i % 4);
    CHECK(knn_eval(bank, lab, bank, lab, 1, 4) == 1.0);

    Mat a(200, 3), b(200, 3);
    std::vector<int> la, lb;
    for (int i = 0; i < 200; ++i) {
        const int c = i % 2;
        for (int j = 0; j < 3; ++j) {
            a(i, j) = (c ? -1 : 1) * (j == 0 ? 5.0 : 0.0) + rng.normal();
            b(i, j) = (c ? -1 : 1) * (j == 0 ? 5.0 : 0.0) + rng.normal();
        }
        la.push_back(c);
        lb.push_back(c);
    }
    CHECK(knn_eval(a, la, b, lb, 5, 2) > 0.99);
    CHECK_THROWS_AS(knn_eval(a, la, b, lb, 0, 2), ValidationError);
    CHECK_THROWS_AS(knn_eval(a, la, b, lb, 201, 2), ValidationError);
}

TEST_CASE("linear probe separates a separable problem and leaves the encoder alone") {
    data::SyntheticConfig sc;
    sc.classes = 4;
    sc.train_per_class = 60;
    sc.noise = 10;
    sc.seed = 3;
    const auto ds = data::make_synthetic_gaussians(sc);
    nn::ModelConfig mc;
    mc.encoder_hidden = {32};
    mc.feature_dim = 16;
    mc.embed_dim = 8;
    mc.init_seed = 5;
    nn::TriNet net(mc, ds.train.shape);
    const auto hash = nn::hash_tensors(net.parameters(), net.state());
    const auto policy = data::AugmentationPolicy::identity();
    const Mat f = encode_dataset(encoder_features(net), ds.train, policy, 50);
    ProbeConfig pc;
    pc.epochs = 50;
    const LinearProbe probe = fit_linear_probe(f, ds.train.labels, 4, pc);
    const auto pred = probe.predict(f);
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.train.labels[i];
    CHECK(correct > 0.95 * static_cast<double>(pred.size()));
    CHECK(nn::hash_tensors(net.parameters(), net.state()) == hash);
    CHECK(ProbeConfig::transfer().lr == 0.2);
    CHECK(ProbeConfig::transfer().epochs == 200);
    Mat bad = f;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(fit_linear_probe(bad, ds.train.labels, 4, pc), RuntimeError);
}

TEST_CASE("per-task knn matrix is lower triangular") {
    data::SyntheticConfig sc;
    sc.classes = 6;
    sc.train_per_class = 10;
    sc.test_per_class = 5;
    const auto ds = data::make_synthetic_gaussians(sc);
    const auto train = data::split_class_incremental(ds.train, 3, 0);
    const auto test = data::apply_class_split(train, ds.test);
    const FeatureFn raw = [](const ImageBatch& x) { return x.data; };
    const TaskMatrix m = per_task_knn_matrix({raw, raw, raw}, train, test, data::AugmentationPolicy::identity(), 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(m.present[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] == (j <= i));
    const auto f = m.forgetting();
    REQUIRE(f.size() == 3);
    for (double v : f) CHECK(v == 0.0);  // identical checkpoints forget nothing
    CHECK_THROWS_AS(per_task_knn_matrix({raw}, train, test, data::AugmentationPolicy::identity(), 3), ValidationError);

    TaskMatrix hand;
    hand.value = Mat::Zero(2, 2);
    hand.value << 0.9, 0, 0.6, 0.8;
    hand.present = {{true, false}, {true, true}};
    CHECK(hand.forgetting()[0] == doctest::Approx(0.3));
    CHECK(hand.forgetting()[1] == 0.0);
}

TEST_CASE("report serialization") {
    const MetricsReport r = compute_la_wp_tp({0, 3, 2, 2}, {0, 1, 2, 3}, {0, 0, 1, 1});
    const auto j = r.to_json();
    CHECK(j.at("LA") == 0.5);
    CHECK(format_table({{"cromo", r}}).find("cromo") != std::string::npos);
    const auto path = std::filesystem::temp_directory_path() / "cromo_confusion.csv";
    write_confusion_csv(path, r);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK_FALSE(header.empty());
    std::filesystem::remove(path);
}
