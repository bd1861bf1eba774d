#include "cromo/error.hpp"
#include "cromo/nn/checkpoint.hpp"
#include "cromo/nn/optim.hpp"
#include "cromo/nn/trinet.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace cromo;
using namespace cromo::nn;
using testing::numeric_grad;
using testing::random_mat;
using testing::rel_error;

namespace {

// Checks d(sum(probe .* f(x)))/dx and every parameter gradient against
// central differences, in training mode.
void check_layer(Layer& layer, const Mat& x, Rng& rng, double tol = 1e-5) {
    Cache cache;
    const Mat y = layer.forward(x, Mode::kTrain, &cache);
    const Mat probe = random_mat(static_cast<int>(y.rows()), static_cast<int>(y.cols()), rng);
    std::vector<Parameter*> params;
    std::vector<StateTensor> state;
    layer.collect("l", params, state);
    for (auto* p : params) p->grad.setZero();
    const Mat gx = layer.backward(probe, cache);

    auto loss_at = [&](const Mat& input) { return layer.forward(input, Mode::kTrain, nullptr).cwiseProduct(probe).sum(); };
    CHECK(rel_error(gx, numeric_grad(loss_at, x)) < tol);
    for (auto* p : params) {
        const Mat analytic = p->grad;
        Mat& w = p->value;
        const Mat saved = w;
        const Mat numeric = numeric_grad(
            [&](const Mat& wv) {
                w = wv;
                return loss_at(x);
            },
            saved);
        w = saved;
        INFO(p->name);
        CHECK(rel_error(analytic, numeric) < tol);
    }
}

ModelConfig tiny_mlp() {
    ModelConfig c;
    c.encoder_hidden = {6};
    c.feature_dim = 5;
    c.embed_dim = 4;
    c.init_seed = 3;
    return c;
}

}  // namespace

TEST_CASE("layer gradients match finite differences") {
    Rng rng(1);
    SUBCASE("linear") {
        Linear l(4, 3, true, rng);
        check_layer(l, random_mat(5, 4, rng), rng);
    }
    SUBCASE("batchnorm over features") {
        BatchNorm bn(ImageShape{3, 1, 1});
        check_layer(bn, random_mat(6, 3, rng), rng);
    }
    SUBCASE("batchnorm over channels and positions") {
        BatchNorm bn(ImageShape{2, 3, 3});
        check_layer(bn, random_mat(3, 18, rng), rng);
    }
    SUBCASE("relu") {
        ReLU r(ImageShape{7, 1, 1});
        check_layer(r, random_mat(4, 7, rng), rng);
    }
    SUBCASE("conv2d with stride and padding") {
        Conv2d c(ImageShape{2, 5, 5}, 3, 3, 2, 1, true, rng);
        check_layer(c, random_mat(2, 50, rng), rng);
    }
    SUBCASE("conv2d 1x1") {
        Conv2d c(ImageShape{3, 4, 4}, 2, 1, 1, 0, false, rng);
        check_layer(c, random_mat(2, 48, rng), rng);
    }
    SUBCASE("global average pool") {
        GlobalAvgPool g(ImageShape{3, 2, 2});
        check_layer(g, random_mat(3, 12, rng), rng);
    }
    SUBCASE("residual block with projection shortcut") {
        const ImageShape in{2, 4, 4};
        Sequential main(in);
        main.add(std::make_unique<Conv2d>(in, 3, 3, 2, 1, false, rng));
        main.add(std::make_unique<BatchNorm>(ImageShape{3, 2, 2}));
        Sequential shortcut(in);
        shortcut.add(std::make_unique<Conv2d>(in, 3, 1, 2, 0, false, rng));
        Residual r(std::move(main), std::move(shortcut));
        check_layer(r, random_mat(3, 32, rng), rng);
    }
}

TEST_CASE("batchnorm eval mode uses running statistics") {
    BatchNorm bn(ImageShape{2, 1, 1}, 1.0);
    Rng rng(2);
    const Mat x = random_mat(8, 2, rng, 3.0);
    bn.forward(x, Mode::kTrain, nullptr);
    // Momentum 1 copies the batch statistics; eval output then equals the
    // train output up to the biased/unbiased variance factor.
    const Mat y = bn.forward(x, Mode::kEval, nullptr);
    const Mat c = x.rowwise() - x.colwise().mean();
    const RowVec var_unbiased = c.colwise().squaredNorm() / 7.0;
    for (int j = 0; j < 2; ++j)
        CHECK(y(0, j) == doctest::Approx(c(0, j) / std::sqrt(var_unbiased(j) + 1e-5)).epsilon(1e-10));
    Cache cache;
    bn.forward(x, Mode::kEval, &cache);
    const Mat probe = random_mat(8, 2, rng);
    const Mat gx = bn.backward(probe, cache);
    CHECK(rel_error(gx, numeric_grad([&](const Mat& in) { return bn.forward(in, Mode::kEval, nullptr).cwiseProduct(probe).sum(); }, x)) < 1e-6);
}

TEST_CASE("trinet end-to-end gradient") {
    ModelConfig cfg = tiny_mlp();
    TriNet net(cfg, ImageShape{1, 2, 2});
    Rng rng(4);
    const ImageBatch x{random_mat(6, 4, rng), ImageShape{1, 2, 2}};
    EmbedTrace trace;
    const Embedding e = net.embed(x, Mode::kTrain, &trace);
    CHECK(e.h.cols() == 5);
    CHECK(e.z.cols() == 4);
    const Mat probe = random_mat(6, 4, rng);
    net.zero_grad();
    net.backward(trace, probe);
    auto params = net.parameters();
    for (auto* p : params) {
        const Mat analytic = p->grad;
        const Mat saved = p->value;
        const Mat numeric = numeric_grad(
            [&](const Mat& w) {
                p->value = w;
                return net.embed(x, Mode::kTrain).z.cwiseProduct(probe).sum();
            },
            saved);
        p->value = saved;
        INFO(p->name);
        CHECK(rel_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("trinet architectures build with expected widths") {
    ModelConfig cnn;
    cnn.arch = "small_cnn";
    cnn.feature_dim = 16;
    cnn.embed_dim = 8;
    TriNet a(cnn, ImageShape{3, 8, 8});
    CHECK(a.feature_dim() == 16);
    CHECK(a.embed_dim() == 8);

    ModelConfig r18 = table_dims("resnet18", "barlow_twins", "cifar100");
    CHECK(r18.embed_dim == 2048);
    r18.embed_dim = 16;
    r18.projector_hidden = 16;
    TriNet b(r18, ImageShape{3, 8, 8});
    CHECK(b.feature_dim() == 512);
    Rng rng(5);
    const ImageBatch x{random_mat(2, 3 * 64, rng, 0.5), ImageShape{3, 8, 8}};
    CHECK(b.embed(x, Mode::kTrain).z.cols() == 16);

    CHECK(table_dims("resnet18", "corinfomax", "cifar10").embed_dim == 64);
    CHECK(table_dims("resnet18", "corinfomax", "cifar100").embed_dim == 128);
    CHECK(table_dims("resnet50", "simclr", "tinyimagenet").embed_dim == 2048);
    CHECK(table_dims("resnet18", "byol", "cifar10").predictor);
    CHECK_THROWS_AS(TriNet(tiny_mlp(), ImageShape{1, 2, 2}).predictor(), ValidationError);
}

TEST_CASE("frozen model copies the network and ignores later updates") {
    TriNet net(tiny_mlp(), ImageShape{1, 2, 2});
    Rng rng(6);
    const ImageBatch x{random_mat(5, 4, rng), ImageShape{1, 2, 2}};
    net.embed(x, Mode::kTrain);  // populate running statistics
    const FrozenModel frozen(net);
    CHECK((frozen.embed(x).z - net.embed(x, Mode::kEval).z).norm() == 0.0);
    const std::uint64_t h = frozen.parameter_hash();
    for (auto* p : net.parameters()) p->value.array() += 0.5;
    CHECK(frozen.parameter_hash() == h);
    CHECK((frozen.embed(x).z - net.embed(x, Mode::kEval).z).norm() > 0.0);
}

TEST_CASE("ema target update") {
    ModelConfig cfg = tiny_mlp();
    TriNet net(cfg, ImageShape{1, 2, 2});
    EmaTarget target(net);
    auto before = target.parameters();
    std::vector<Mat> old;
    for (auto* p : before) old.push_back(p->value);
    for (auto* p : net.encoder_projector_parameters()) p->value.array() += 1.0;
    target.update(net, 0.9);
    auto online = net.encoder_projector_parameters();
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK((before[i]->value - (0.9 * old[i] + 0.1 * online[i]->value)).norm() < 1e-12);
    CHECK_THROWS_AS(target.update(net, 1.5), ValidationError);
    CHECK(ema_momentum(0.99, 0, 100) == doctest::Approx(0.99));
    CHECK(ema_momentum(0.99, 100, 100) == doctest::Approx(1.0));
}

TEST_CASE("checkpoint container round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "cromo_test_nn";
    std::filesystem::create_directories(dir);
    TriNet net(tiny_mlp(), ImageShape{1, 2, 2});
    Container c;
    c.config_hash = "abc123";
    c.meta["task"] = "2";
    append_network(c, net, "net.");
    save_container(dir / "ck", c);
    const Container back = load_container(dir / "ck");
    CHECK(back.config_hash == "abc123");
    CHECK(back.meta.at("task") == "2");
    ModelConfig other = tiny_mlp();
    other.init_seed = 99;
    TriNet net2(other, ImageShape{1, 2, 2});
    load_network(back, net2, "net.");
    auto p1 = net.parameters();
    auto p2 = net2.parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK((p1[i]->value - p2[i]->value).norm() == 0.0);

    ModelConfig wider = tiny_mlp();
    wider.embed_dim = 7;
    TriNet net3(wider, ImageShape{1, 2, 2});
    CHECK_THROWS_AS(load_network(back, net3, "net."), ValidationError);

    std::ofstream(dir / "junk") << "not a checkpoint";
    CHECK_THROWS_AS(load_container(dir / "junk"), RuntimeError);

    Mat f(3, 2);
    f << 1, 2, 3, 4, 5, 6;
    write_embedding_dump(dir / "emb", f, {0, 1, 2}, {0, 0, 1});
    const EmbeddingDump d = read_embedding_dump(dir / "emb");
    CHECK((d.features - f).norm() == 0.0);
    CHECK(d.labels == std::vector<int>{0, 1, 2});
    CHECK(d.task_ids == std::vector<int>{0, 0, 1});
    std::filesystem::remove_all(dir);
}

TEST_CASE("optimizers and schedule") {
    Parameter w{"w", Mat::Constant(1, 2, 1.0), Mat::Constant(1, 2, 0.5), true};
    Parameter b{"b", Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 0.5), false};
    OptimConfig sgd;
    sgd.lr = 0.1;
    sgd.weight_decay = 0.1;
    sgd.momentum = 0.9;
    Optimizer opt({&w, &b}, sgd);
    opt.step(0.1);
    CHECK(w.value(0, 0) == doctest::Approx(1.0 - 0.1 * (0.5 + 0.1)));
    CHECK(b.value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5));
    opt.step(0.1);
    CHECK(w.value(0, 0) == doctest::Approx(0.94 - 0.1 * (0.9 * 0.6 + 0.5 + 0.1 * 0.94)));

    Parameter l{"l", Mat::Constant(1, 4, 2.0), Mat::Constant(1, 4, 1.0), true};
    OptimConfig lars = sgd;
    lars.kind = "lars";
    lars.weight_decay = 0;
    lars.lars_eta = 0.02;
    Optimizer lo({&l}, lars);
    lo.step(1.0);
    // trust = eta * |w| / |g| = 0.02 * 4 / 2.
    CHECK(l.value(0, 0) == doctest::Approx(2.0 - 0.04));

    CHECK(cosine_lr(1.0, 0, 100, 10) == doctest::Approx(0.1));
    CHECK(cosine_lr(1.0, 9, 100, 10) == doctest::Approx(1.0));
    CHECK(cosine_lr(1.0, 55, 100, 10) == doctest::Approx(0.5));
    CHECK(cosine_lr(1.0, 0, 100, 0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(OptimConfig::from_json({{"kind", "adam"}}), ValidationError);
}
