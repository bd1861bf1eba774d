#include "cromo/core/objective.hpp"
#include "cromo/eval/evaluation.hpp"
#include "cromo/losses/ssl_losses.hpp"
#include "fixture_cases.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace cromo;
using nlohmann::json;

namespace {

json load(const std::string& name) {
    std::ifstream in("tests/fixtures/" + name);
    REQUIRE_MESSAGE(in.good(), "missing fixture " << name << " (run fixture_builder)");
    return json::parse(in);
}

Mat to_mat(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
    return m;
}

bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b)); }

}  // namespace

TEST_CASE("stored fixtures equal a fresh build") {
    for (const auto& [name, doc] : fixtures::build_all()) {
        INFO(name);
        const json stored = load(name);
        CHECK(stored.at("origin").get<std::string>().size() > 0);
        CHECK(stored.dump() == json::parse(doc.dump()).dump());
    }
}

TEST_CASE("info_nce matches its fixture") {
    const json f = load("info_nce.json");
    const double tol = f.at("tolerance");
    CHECK(f.at("cases").size() == 20);
    for (const auto& c : f.at("cases"))
        CHECK(close(losses::info_nce(to_mat(c.at("z1")), to_mat(c.at("z2")), c.at("tau")).value,
                    c.at("expected").get<double>(), tol));
}

TEST_CASE("metrics match the four-sample fixture exactly") {
    const json f = load("metrics_four_sample.json");
    for (const auto& c : f.at("cases")) {
        const eval::MetricsReport r =
            eval::compute_la_wp_tp(c.at("predictions").get<std::vector<int>>(), c.at("labels").get<std::vector<int>>(),
                                   c.at("class_to_task").get<std::vector<int>>());
        CHECK(r.la == c.at("LA").get<double>());
        CHECK(r.tp == c.at("TP").get<double>());
        CHECK(r.wp == c.at("WP").get<double>());
        CHECK(r.n_class_correct == c.at("n_class_correct").get<long>());
        CHECK(r.n_task_correct == c.at("n_task_correct").get<long>());
    }
}

TEST_CASE("cromo loss endpoints match their fixture") {
    const json f = load("cromo_endpoints.json");
    const double tol = f.at("tolerance");
    const json& s = f.at("spec");
    for (const auto& c : f.at("cases")) {
        INFO(c.at("kind").get<std::string>() << " lambda " << c.at("lambda").get<int>());
        losses::SslLossSpec spec;
        spec.kind = losses::parse_ssl_kind(c.at("kind"));
        spec.temperature = s.at("temperature");
        spec.lambda_bt = s.at("lambda_bt");
        spec.eps = s.at("eps");
        spec.lambda_cov = s.at("lambda_cov");
        const Mat zm = to_mat(c.at("z_mix")), q = to_mat(c.at("q_mix")), zt = to_mat(c.at("z_t")),
                  pa = to_mat(c.at("partner"));
        const Vec lam = Vec::Constant(zm.rows(), c.at("lambda").get<double>());
        const double v =
            core::cromo_loss(spec, zm, spec.kind == losses::SslKind::kByol ? &q : nullptr, zt, pa, lam).value;
        CHECK(close(v, c.at("expected").get<double>(), tol));
    }
}
