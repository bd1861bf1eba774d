#include "cromo/error.hpp"
#include "cromo/experiment/run.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace ex = cromo::experiment;
using nlohmann::json;

namespace {

constexpr int kValidationExit = 2;
constexpr int kRuntimeExit = 3;

void progress(const std::string& line) { std::cerr << "[cromo] " << line << '\n'; }

json resolve(const std::string& config, const std::vector<std::string>& overrides) {
    json doc = ex::load_document(config);
    for (const auto& o : overrides) ex::apply_override(doc, o);
    return doc;
}

void print_report(const cromo::eval::MetricsReport& r) {
    std::cout << std::fixed << std::setprecision(2) << "LA " << 100 * r.la << "  WP " << 100 * r.wp
              << (r.wp_defined ? "" : " (undefined)") << "  TP " << 100 * r.tp;
    if (r.knn_accuracy) std::cout << "  kNN " << 100 * *r.knn_accuracy;
    std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual self-supervised learning experiments"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;
    bool force = false;
    std::string resume;

    auto* train = app.add_subcommand("train", "train one continual run and evaluate it");
    train->add_option("--config", config, "JSON file or preset name")->required();
    train->add_option("--override", overrides, "dotted assignment, e.g. trainer.seed=7")->take_all();
    train->add_flag("--force", force, "replace an existing run directory");
    train->add_option("--resume", resume, "task-boundary checkpoint to continue from");

    ex::EvalRequest req;
    std::string mode = "linear";
    int k = 0;
    auto* eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
    eval->add_option("--checkpoint", req.checkpoint, "<run>/checkpoints/task_<k>")->required();
    eval->add_option("--mode", mode, "linear, knn or transfer");
    eval->add_option("--k", k, "neighbours for knn mode");
    eval->add_option("--target", req.target, "transfer dataset");
    eval->add_option("--target-root", req.target_root, "transfer dataset directory");

    std::string axis;
    std::vector<std::string> values;
    auto* sweep = app.add_subcommand("sweep", "one run per value of an axis");
    sweep->add_option("--config", config, "JSON file or preset name")->required();
    sweep->add_option("--override", overrides, "dotted assignment applied to the base")->take_all();
    sweep->add_option("--axis", axis, "buffer_budget, alpha, zeta or strategy")->required();
    sweep->add_option("--values", values, "comma-separated values")->delimiter(',');
    sweep->add_flag("--force", force, "rerun cells that already have a run directory");

    auto* confusion = app.add_subcommand("confusion", "task-confusion study");
    confusion->add_option("--config", config, "JSON file or preset name")->required();
    confusion->add_option("--override", overrides, "dotted assignment")->take_all();

    std::string plot_dir;
    auto* plot = app.add_subcommand("plot", "regenerate the images of a run, sweep or study");
    plot->add_option("dir", plot_dir, "directory")->required();

    std::string show;
    auto* presets = app.add_subcommand("presets", "list preset names or print one");
    presets->add_option("--show", show, "print this preset as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kValidationExit;
    }

    try {
        ex::RunOptions opt;
        opt.force = force;
        opt.progress = progress;
        if (*train) {
            const ex::ExperimentConfig cfg = ex::ExperimentConfig::from_json(resolve(config, overrides));
            if (!resume.empty()) opt.resume = resume;
            const ex::RunSummary s = ex::run_experiment(cfg, opt);
            std::cout << "run " << s.hash << " -> " << s.dir.string() << '\n';
            print_report(s.report);
        } else if (*eval) {
            req.mode = ex::parse_eval_mode(mode);
            if (eval->count("--k") > 0) req.k = k;
            const json rec = ex::evaluate_checkpoint(req);
            std::cout << "wrote " << rec.at("path").get<std::string>() << '\n';
            if (rec.contains("metrics")) {
                const json& m = rec.at("metrics");
                std::cout << std::fixed << std::setprecision(2) << "LA " << 100 * m.at("LA").get<double>() << "  WP "
                          << 100 * m.at("WP").get<double>() << "  TP " << 100 * m.at("TP").get<double>() << '\n';
            } else {
                std::cout << std::fixed << std::setprecision(2) << rec.at("target").get<std::string>()
                          << " accuracy " << 100 * rec.at("accuracy").get<double>() << '\n';
            }
        } else if (*sweep) {
            const ex::SweepResult r = ex::run_sweep(resolve(config, overrides), axis, values, opt);
            std::cout << "sweep -> " << r.dir.string() << '\n';
            int failed = 0;
            for (const auto& c : r.cells) {
                std::cout << axis << '=' << c.value << "  ";
                if (c.ok) {
                    print_report(*c.report);
                } else {
                    ++failed;
                    std::cout << "FAILED: " << c.error << '\n';
                }
            }
            if (failed == static_cast<int>(r.cells.size())) return kRuntimeExit;
        } else if (*confusion) {
            const ex::ConfusionStudy study = ex::ConfusionStudy::from_json(resolve(config, overrides));
            const ex::ConfusionResult r = ex::run_confusion_study(study, opt);
            std::cout << "confusion -> " << r.dir.string() << '\n'
                      << r.summary.at("gaps_vs_single_pool").dump(2) << '\n';
        } else if (*plot) {
            for (const auto& p : ex::replot(plot_dir)) std::cout << p.string() << '\n';
        } else if (*presets) {
            if (!show.empty()) std::cout << ex::preset(show).dump(2) << '\n';
            else
                for (const auto& n : ex::preset_names()) std::cout << n << '\n';
        }
    } catch (const cromo::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidationExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeExit;
    }
    return 0;
}
