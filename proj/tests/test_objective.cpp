#include "cromo/core/objective.hpp"
#include "cromo/error.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace cromo;
using namespace cromo::core;
using losses::SslKind;
using losses::SslLossSpec;
using testing::numeric_grad;
using testing::random_mat;
using testing::rel_error;

namespace {

SslLossSpec spec_of(SslKind kind) {
    SslLossSpec s;
    s.kind = kind;
    s.temperature = 0.4;
    s.lambda_bt = 0.05;
    s.eps = 0.2;
    s.lambda_cov = 0.3;
    return s;
}

const SslKind kAllKinds[] = {SslKind::kSimclr, SslKind::kBarlowTwins, SslKind::kByol, SslKind::kCorInfoMax};

Vec random_lambda(int n, Rng& rng) {
    Vec l(n);
    for (int i = 0; i < n; ++i) l(i) = rng.uniform();
    return l;
}

ObjectiveInputs random_inputs(int b, int d, Rng& rng) {
    ObjectiveInputs in;
    for (auto& v : in.views) {
        v.z_t = random_mat(b, d, rng);
        v.q_t = random_mat(b, d, rng);
        v.target_t = random_mat(b, d, rng);
        v.h_t = random_mat(b, d, rng);
        v.frozen_t = random_mat(b, d, rng);
        v.z_mix = random_mat(b, d, rng);
        v.q_mix = random_mat(b, d, rng);
        v.partner = random_mat(b, d, rng);
    }
    in.lambda = random_lambda(b, rng);
    return in;
}

}  // namespace

TEST_CASE("cromo_loss gradients match finite differences for every ssl kind") {
    Rng rng(21);
    for (SslKind kind : kAllKinds) {
        INFO(losses::to_string(kind));
        const SslLossSpec spec = spec_of(kind);
        const int b = 5, d = 3;
        const Mat zm = random_mat(b, d, rng), q = random_mat(b, d, rng), zt = random_mat(b, d, rng),
                  pa = random_mat(b, d, rng);
        const Vec lam = random_lambda(b, rng);
        const bool byol = kind == SslKind::kByol;
        const CromoGrad g = cromo_loss(spec, zm, byol ? &q : nullptr, zt, pa, lam);

        auto value = [&](const Mat& m, const Mat& qq, const Mat& t, const Mat& p) {
            return cromo_loss(spec, m, byol ? &qq : nullptr, t, p, lam).value;
        };
        if (byol) CHECK(rel_error(g.g_mix, numeric_grad([&](const Mat& x) { return value(zm, x, zt, pa); }, q)) < 1e-6);
        else CHECK(rel_error(g.g_mix, numeric_grad([&](const Mat& x) { return value(x, q, zt, pa); }, zm)) < 1e-6);
        CHECK(rel_error(g.g_current, numeric_grad([&](const Mat& x) { return value(zm, q, x, pa); }, zt)) < 1e-6);
        CHECK(rel_error(g.g_partner, numeric_grad([&](const Mat& x) { return value(zm, q, zt, x); }, pa)) < 1e-6);
    }
}

TEST_CASE("cromo_loss endpoints reduce to a single term exactly") {
    Rng rng(22);
    for (SslKind kind : kAllKinds) {
        INFO(losses::to_string(kind));
        const SslLossSpec spec = spec_of(kind);
        const int b = 6, d = 4;
        const Mat zm = random_mat(b, d, rng), q = random_mat(b, d, rng), zt = random_mat(b, d, rng),
                  pa = random_mat(b, d, rng);
        const bool byol = kind == SslKind::kByol;
        const Mat* qp = byol ? &q : nullptr;
        const Vec ones = Vec::Ones(b), zeros = Vec::Zero(b);
        const double at_one = cromo_loss(spec, zm, qp, zt, pa, ones).value;
        const double at_zero = cromo_loss(spec, zm, qp, zt, pa, zeros).value;

        losses::SslAux aux;
        aux.predicted = qp;
        if (kind == SslKind::kSimclr) {
            // The other group stays in the pool as negatives at both endpoints.
            aux.negatives = &pa;
            CHECK(at_one == losses::ssl_loss(spec, zm, zt, aux).value);
            aux.negatives = &zt;
            CHECK(at_zero == losses::ssl_loss(spec, zm, pa, aux).value);
        } else {
            CHECK(at_one == losses::ssl_loss(spec, zm, zt, aux).value);
            CHECK(at_zero == losses::ssl_loss(spec, zm, pa, aux).value);
        }
        // The gradient of the inactive group vanishes apart from the
        // negative-pool contribution.
        const CromoGrad g1 = cromo_loss(spec, zm, qp, zt, pa, ones);
        if (kind != SslKind::kSimclr) CHECK(g1.g_partner.norm() == 0.0);
    }
}

TEST_CASE("cromo_loss is linear in lambda for batch-statistic kinds") {
    Rng rng(23);
    for (SslKind kind : {SslKind::kBarlowTwins, SslKind::kCorInfoMax}) {
        const SslLossSpec spec = spec_of(kind);
        const Mat zm = random_mat(6, 3, rng), zt = random_mat(6, 3, rng), pa = random_mat(6, 3, rng);
        const double a = cromo_loss(spec, zm, nullptr, zt, pa, Vec::Ones(6)).value;
        const double b = cromo_loss(spec, zm, nullptr, zt, pa, Vec::Zero(6)).value;
        const Vec lam = random_lambda(6, rng);
        const double m = lam.mean();
        CHECK(cromo_loss(spec, zm, nullptr, zt, pa, lam).value == doctest::Approx(m * a + (1 - m) * b).epsilon(1e-12));
    }
}

TEST_CASE("cromo_loss rejects malformed inputs") {
    const SslLossSpec spec = spec_of(SslKind::kSimclr);
    Rng rng(24);
    const Mat a = random_mat(4, 3, rng), b = random_mat(3, 3, rng);
    CHECK_THROWS_AS(cromo_loss(spec, a, nullptr, a, b, Vec::Ones(4)), ValidationError);
    CHECK_THROWS_AS(cromo_loss(spec, a, nullptr, a, a, Vec::Ones(3)), ValidationError);
    Vec bad = Vec::Ones(4);
    bad(1) = 1.5;
    CHECK_THROWS_AS(cromo_loss(spec, a, nullptr, a, a, bad), ValidationError);
    CHECK_THROWS_AS(cromo_loss(spec_of(SslKind::kByol), a, nullptr, a, a, Vec::Ones(4)), ValidationError);
}

TEST_CASE("distill_loss gradient and byol form") {
    Rng rng(25);
    for (SslKind kind : kAllKinds) {
        INFO(losses::to_string(kind));
        const SslLossSpec spec = spec_of(kind);
        const std::array<Mat, 2> h{random_mat(5, 3, rng), random_mat(5, 3, rng)};
        const std::array<Mat, 2> f{random_mat(5, 3, rng), random_mat(5, 3, rng)};
        const DistillGrad g = distill_loss(spec, h, f);
        for (int v = 0; v < 2; ++v) {
            const Mat num = numeric_grad(
                [&](const Mat& x) {
                    auto hh = h;
                    hh[v] = x;
                    return distill_loss(spec, hh, f).value;
                },
                h[v]);
            CHECK(rel_error(g.g_h[v], num) < 1e-6);
        }
        if (kind == SslKind::kByol)
            CHECK(g.value == doctest::Approx(losses::byol_mse(h[0], f[0]).value + losses::byol_mse(h[1], f[1]).value));
    }
}

TEST_CASE("total_loss composes the strategy terms") {
    Rng rng(26);
    for (SslKind kind : kAllKinds) {
        INFO(losses::to_string(kind));
        const SslLossSpec spec = spec_of(kind);
        const ObjectiveInputs in = random_inputs(6, 3, rng);
        const double task = task_loss(spec, in).value;

        const LossBundle ft = total_loss(Strategy::kFinetune, spec, in, 0.7, false);
        CHECK(ft.total == task);
        CHECK(ft.zeta == 0);

        // First task: every strategy reduces to the task term.
        for (const auto& name : strategy_names()) {
            const LossBundle b = total_loss(parse_strategy(name), spec, in, 1.0, true);
            CHECK(b.total == task);
        }

        const LossBundle star = total_loss(Strategy::kCromoStar, spec, in, 1.0, false);
        const LossBundle full = total_loss(Strategy::kCromo, spec, in, 1.0, false);
        const LossBundle cassle = total_loss(Strategy::kCassle, spec, in, 1.0, false);
        CHECK(star.zeta == 0);
        CHECK(star.total == doctest::Approx(task + star.cromo_loss_v1 + star.cromo_loss_v2).epsilon(1e-12));
        CHECK(full.total == doctest::Approx(star.total + cassle.distill_loss).epsilon(1e-12));
        CHECK(full.cromo_loss_v1 == star.cromo_loss_v1);

        // With zeta = 0 cromo and cromo_star coincide.
        const LossBundle full0 = total_loss(Strategy::kCromo, spec, in, 0.0, false);
        CHECK(full0.total == star.total);
    }
}

TEST_CASE("total_loss gradients match finite differences") {
    Rng rng(27);
    for (SslKind kind : kAllKinds) {
        INFO(losses::to_string(kind));
        const SslLossSpec spec = spec_of(kind);
        const ObjectiveInputs in = random_inputs(4, 3, rng);
        ObjectiveGrads g;
        total_loss(Strategy::kCromo, spec, in, 0.6, false, &g);
        auto check_member = [&](Mat ViewEmbeddings::*member, int v) {
            const Mat& analytic = g[v].*member;
            if (analytic.size() == 0) return;
            const Mat num = numeric_grad(
                [&](const Mat& x) {
                    ObjectiveInputs c = in;
                    c.views[v].*member = x;
                    return total_loss(Strategy::kCromo, spec, c, 0.6, false).total;
                },
                in.views[v].*member);
            CHECK(rel_error(analytic, num) < 1e-6);
        };
        for (int v = 0; v < 2; ++v) {
            check_member(&ViewEmbeddings::z_t, v);
            check_member(&ViewEmbeddings::q_t, v);
            check_member(&ViewEmbeddings::target_t, v);
            check_member(&ViewEmbeddings::h_t, v);
            check_member(&ViewEmbeddings::z_mix, v);
            check_member(&ViewEmbeddings::q_mix, v);
            check_member(&ViewEmbeddings::partner, v);
        }
    }
}

TEST_CASE("strategy table") {
    CHECK(strategy_names().size() == 8);
    for (const auto& n : strategy_names()) CHECK(to_string(parse_strategy(n)) == n);
    CHECK_THROWS_AS(parse_strategy("cromo_mixup"), ValidationError);
    CHECK(traits(Strategy::kCromo).needs_buffer());
    CHECK(traits(Strategy::kCromo).needs_old_model());
    CHECK_FALSE(traits(Strategy::kCrossTaskMix).needs_old_model());
    CHECK_FALSE(traits(Strategy::kWithinTaskMix).needs_buffer());
    CHECK_FALSE(traits(Strategy::kFinetune).needs_buffer());
    CHECK(traits(Strategy::kCassle).default_zeta == 1);
}
