#include "cromo/error.hpp"
#include "cromo/experiment/run.hpp"
#include "cromo/log.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace cromo;
using namespace cromo::experiment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cromo_test_experiment_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

json smoke(const fs::path& root) {
    json doc = preset("toy_smoke");
    doc["output_root"] = root.string();
    return doc;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config hash ignores key order and spelled-out defaults") {
    const json doc = preset("toy_simclr_cromo");
    // Round-trip through a string with keys reversed at the top level.
    json reversed = json::object();
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) keys.push_back(k);
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) reversed[*it] = doc.at(*it);
    CHECK(ExperimentConfig::from_json(doc).hash() == ExperimentConfig::from_json(reversed).hash());

    json sparse = doc;
    sparse["strategy"].erase("zeta");  // cromo default
    CHECK(ExperimentConfig::from_json(sparse).hash() == ExperimentConfig::from_json(doc).hash());

    json moved = doc;
    moved["output_root"] = "elsewhere";
    CHECK(ExperimentConfig::from_json(moved).hash() == ExperimentConfig::from_json(doc).hash());
}

TEST_CASE("overrides change the hash and validate") {
    json doc = preset("toy_smoke");
    const std::string base = ExperimentConfig::from_json(doc).hash();
    apply_override(doc, "trainer.seed=7");
    const ExperimentConfig seeded = ExperimentConfig::from_json(doc);
    CHECK(seeded.train_seed() == 7);
    CHECK(seeded.hash() != base);

    json bad = preset("toy_smoke");
    apply_override(bad, "strategy.name=bogus");
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ValidationError);

    json unknown = preset("toy_smoke");
    apply_override(unknown, "trainer.epochz=3");
    CHECK_THROWS_AS(ExperimentConfig::from_json(unknown), ValidationError);

    json wrong_type = preset("toy_smoke");
    apply_override(wrong_type, "trainer.batch_size=\"big\"");
    CHECK_THROWS_AS(ExperimentConfig::from_json(wrong_type), ValidationError);

    json plain = json::object();
    CHECK_THROWS_AS(apply_override(plain, "no-equals-sign"), ValidationError);
    apply_override(plain, "a.b.c=[1,2]");
    CHECK(plain["a"]["b"]["c"] == json::array({1, 2}));
    apply_override(plain, "a.name=word");
    CHECK(plain["a"]["name"] == "word");
}

TEST_CASE("every preset parses and round-trips") {
    const auto names = preset_names();
    CHECK(names.size() > 100);
    for (const auto& name : names) {
        CAPTURE(name);
        const json doc = preset(name);
        if (name.rfind("confusion_", 0) == 0) {
            const ConfusionStudy s = ConfusionStudy::from_json(doc);
            CHECK(ConfusionStudy::from_json(s.to_json()).hash() == s.hash());
        } else {
            const ExperimentConfig c = ExperimentConfig::from_json(doc);
            CHECK(ExperimentConfig::from_json(c.to_json()).hash() == c.hash());
        }
    }
    CHECK_THROWS_AS(preset("nope"), ValidationError);
    CHECK_THROWS_AS(load_document("no/such/file.json"), ValidationError);

    const ExperimentConfig c = ExperimentConfig::from_json(preset("cifar100_split5_barlow_cromo"));
    CHECK(c.data.tasks == 5);
    CHECK(c.strategy.buffer_budget == 500);
    CHECK(c.model.distill_head);
    const ExperimentConfig ft = ExperimentConfig::from_json(preset("cifar10_split2_simclr_finetune"));
    CHECK(ft.strategy.buffer_budget == 0);
    CHECK_FALSE(ft.model.distill_head);
}

TEST_CASE("a smoke run writes a self-describing directory") {
    const fs::path root = scratch("run");
    const ExperimentConfig cfg = ExperimentConfig::from_json(smoke(root));
    const RunSummary s = run_experiment(cfg);
    CHECK(s.dir == root / s.hash);
    for (const char* f : {"config.snapshot", "manifest.json", "metrics.log", "checkpoints/task_1", "checkpoints/task_2",
                          "buffer.snapshot", "report.json", "tables.csv", "confusion.csv", "loss.png", "knn.png"})
        CHECK_MESSAGE(fs::is_regular_file(s.dir / f), f);
    for (const auto& e : fs::directory_iterator(root))
        CHECK(e.path().filename().string().find(".partial") == std::string::npos);

    std::ifstream log(s.dir / "metrics.log");
    std::string line;
    int records = 0;
    while (std::getline(log, line)) {
        const json r = json::parse(line);
        for (const char* k : {"step", "task", "epoch", "lr", "task_loss", "total"}) CHECK(r.contains(k));
        ++records;
    }
    CHECK(records > 0);

    const json report = json::parse(slurp(s.dir / "report.json"));
    CHECK(report.at("metrics").contains("LA"));
    CHECK(report.at("metrics").contains("knn_accuracy"));
    CHECK(report.at("per_task_knn").at("matrix").size() == 2);

    CHECK_THROWS_AS(run_experiment(cfg), ValidationError);  // exists, not forced
    RunOptions force;
    force.force = true;
    CHECK(run_experiment(cfg, force).hash == s.hash);

    SUBCASE("evaluation needs only the run directory") {
        EvalRequest req;
        req.checkpoint = s.dir / "checkpoints" / "task_2";
        const json linear = evaluate_checkpoint(req);
        CHECK(linear.at("metrics").at("LA").get<double>() == doctest::Approx(s.report.la));
        CHECK(fs::is_regular_file(s.dir / "eval_linear_task_2.json"));

        req.mode = EvalMode::kKnn;
        req.k = 3;
        const json knn = evaluate_checkpoint(req);
        CHECK(knn.at("metrics").contains("knn_accuracy"));
        CHECK(knn.at("k") == 3);

        req.mode = EvalMode::kTransfer;
        req.target = "synthetic-gaussians";
        const json transfer = evaluate_checkpoint(req);
        CHECK(transfer.at("accuracy").get<double>() >= 0.0);
        CHECK(transfer.at("probe").at("epochs") == 200);
    }

    SUBCASE("a checkpoint from another configuration is rejected") {
        json other = smoke(root);
        other["trainer"]["seed"] = 9;
        const RunSummary o = run_experiment(ExperimentConfig::from_json(other));
        fs::copy_file(o.dir / "checkpoints" / "task_1", s.dir / "checkpoints" / "foreign",
                      fs::copy_options::overwrite_existing);
        EvalRequest req;
        req.checkpoint = s.dir / "checkpoints" / "foreign";
        CHECK_THROWS_AS(evaluate_checkpoint(req), ValidationError);
        CHECK_THROWS_AS(parse_eval_mode("probe"), ValidationError);
    }

    SUBCASE("resuming from a boundary reproduces the run") {
        const fs::path keep = fs::temp_directory_path() / "cromo_test_experiment_resume_src";
        fs::remove_all(keep);
        fs::copy(s.dir, keep, fs::copy_options::recursive);
        RunOptions opt;
        opt.force = true;
        opt.resume = keep / "checkpoints" / "task_1";
        const RunSummary r = run_experiment(cfg, opt);
        CHECK(slurp(r.dir / "report.json") == slurp(keep / "report.json"));
        CHECK(slurp(r.dir / "metrics.log") == slurp(keep / "metrics.log"));
        fs::remove_all(keep);
    }

    SUBCASE("replot regenerates the images") {
        fs::remove(s.dir / "loss.png");
        CHECK(replot(s.dir).size() == 2);
        CHECK(fs::is_regular_file(s.dir / "loss.png"));
        CHECK_THROWS_AS(replot(root / "missing"), ValidationError);
    }
}

TEST_CASE("sweeps record failing cells and keep going") {
    set_warnings_enabled(false);
    const fs::path root = scratch("sweep");
    const json base = smoke(root);
    CHECK_THROWS_AS(run_sweep(base, "buffer_budget", {}), ValidationError);
    CHECK_THROWS_AS(run_sweep(base, "learning_rate", {"1"}), ValidationError);

    const SweepResult r = run_sweep(base, "buffer_budget", {"2", "-1", "4"});
    REQUIRE(r.cells.size() == 3);
    CHECK(r.cells[0].ok);
    CHECK_FALSE(r.cells[1].ok);
    CHECK(r.cells[1].error.find("buffer_budget") != std::string::npos);
    CHECK(r.cells[2].ok);
    for (const char* f : {"sweep.csv", "sweep.json", "sweep.png"}) CHECK(fs::is_regular_file(r.dir / f));

    std::ifstream csv(r.dir / "sweep.csv");
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 3);

    // Finished cells are reused rather than retrained.
    const auto stamp = fs::last_write_time(root / r.cells[0].hash / "report.json");
    const SweepResult again = run_sweep(base, "buffer_budget", {"2"});
    CHECK(again.cells[0].ok);
    CHECK(fs::last_write_time(root / r.cells[0].hash / "report.json") == stamp);

    const SweepResult strategies = run_sweep(base, "strategy", {"within_task_mix", "cross_task_mix", "cromo"});
    for (const auto& c : strategies.cells) CHECK_MESSAGE(c.ok, c.error);
    set_warnings_enabled(true);
}

TEST_CASE("confusion studies parse and run") {
    json doc = preset("confusion_toy");
    const fs::path root = scratch("confusion");
    doc["output_root"] = root.string();
    doc["seeds"] = {0};
    doc["learners"] = {"simclr", "supervised"};
    doc["experiment"]["iterations"] = 20;
    doc["experiment"]["probe_every"] = 10;
    doc["experiment"]["probe"]["epochs"] = 3;
    const ConfusionStudy study = ConfusionStudy::from_json(doc);
    CHECK(study.cell("byol", confusion::ScheduleKind::kSinglePool, 1).model.predictor);
    const ConfusionResult r = run_confusion_study(study);
    CHECK(r.curves.size() == 6);
    for (const auto& c : r.curves) CHECK(c.points.size() == 2);
    CHECK(r.summary.at("gaps_vs_single_pool").at("simclr").contains("cil_minibatch"));
    for (const char* f : {"summary.json", "curves.csv", "la.png", "tp.png", "wp.png"})
        CHECK(fs::is_regular_file(r.dir / f));
    CHECK(replot(r.dir).size() == 3);

    json bad = doc;
    bad["schedules"] = {"sometimes"};
    CHECK_THROWS_AS(ConfusionStudy::from_json(bad), ValidationError);
}
