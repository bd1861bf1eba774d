#include "cromo/experiment/run.hpp"

#include "cromo/error.hpp"
#include "cromo/log.hpp"
#include "cromo/nn/checkpoint.hpp"
#include "cromo/plot.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace cromo::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const RunOptions& opt, const std::string& line) {
    if (opt.progress) opt.progress(line);
}

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw RuntimeError("cannot write '" + path.string() + "'");
        out << text;
        if (!out) throw RuntimeError("write failure on '" + path.string() + "'");
    }
    fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeError("cannot read '" + path.string() + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw RuntimeError("'" + path.string() + "' is not valid JSON");
    return j;
}

// Picks a staging directory next to final_dir. An existing finished
// directory is only replaced (at finish time) when forced. `keep` names a
// path that must survive, e.g. the checkpoint a run resumes from.
fs::path begin_directory(const fs::path& final_dir, bool force, const fs::path& keep = {}) {
    if (fs::exists(final_dir))
        require(force, "'" + final_dir.string() + "' already exists (use --force to replace it)");
    const fs::path base = final_dir.parent_path() / ("." + final_dir.filename().string() + ".partial");
    const auto inside = [&keep](const fs::path& dir) {
        if (keep.empty()) return false;
        const std::string d = fs::weakly_canonical(dir).string() + "/";
        return fs::weakly_canonical(keep).string().rfind(d, 0) == 0;
    };
    fs::path staging = base;
    for (int i = 1; inside(staging); ++i) staging = base.string() + "." + std::to_string(i);
    fs::remove_all(staging);
    fs::create_directories(staging);
    return staging;
}

void finish_directory(const fs::path& staging, const fs::path& final_dir) {
    fs::remove_all(final_dir);
    fs::rename(staging, final_dir);
}

data::DatasetSplits load_data(const std::string& name, const std::string& root, const data::SyntheticConfig& syn) {
    return data::load_dataset(name, root, syn);
}

data::TaskSequence make_split(const ExperimentConfig& cfg, const data::LabeledDataset& train) {
    return cfg.data.split == "data_incremental" ? data::split_data_incremental(train, cfg.data.tasks, cfg.seed)
                                                : data::split_class_incremental(train, cfg.data.tasks, cfg.seed);
}

// TP/WP need disjoint class groups; data-incremental runs use the
// class-incremental grouping of the same seed.
std::vector<int> metric_class_map(const ExperimentConfig& cfg, const data::LabeledDataset& train) {
    return data::split_class_incremental(train, cfg.data.tasks, cfg.seed).class_to_task();
}

nn::ModelConfig resolved_model(const ExperimentConfig& cfg) {
    nn::ModelConfig m = cfg.model;
    if (m.init_seed == 0) m.init_seed = cfg.train_seed();
    return m;
}

std::unique_ptr<nn::TriNet> load_net(const ExperimentConfig& cfg, ImageShape shape, const nn::Container& c) {
    auto net = std::make_unique<nn::TriNet>(resolved_model(cfg), shape);
    nn::load_network(c, *net, "net.");
    return net;
}

int clip_k(int k, int bank, const std::string& where) {
    if (k > bank) {
        log_warn(where + ": k=" + std::to_string(k) + " exceeds the " + std::to_string(bank) +
                 " stored samples; using k=" + std::to_string(bank));
        return bank;
    }
    return k;
}

std::vector<int> sorted_task_checkpoints(const fs::path& dir) {
    std::vector<int> ks;
    if (!fs::is_directory(dir)) return ks;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (n.rfind("task_", 0) == 0 && n.find('.') == std::string::npos) ks.push_back(std::stoi(n.substr(5)));
    }
    std::sort(ks.begin(), ks.end());
    return ks;
}

void plot_losses(const fs::path& metrics_log, const fs::path& out) {
    std::ifstream in(metrics_log);
    if (!in) throw RuntimeError("cannot read '" + metrics_log.string() + "'");
    // Mean total loss per (task, epoch), drawn at the epoch's last step.
    std::map<int, std::map<int, std::pair<double, std::pair<double, long>>>> acc;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json r = json::parse(line, nullptr, false);
        if (r.is_discarded()) throw RuntimeError("'" + metrics_log.string() + "': malformed record");
        auto& cell = acc[r.at("task").get<int>()][r.at("epoch").get<int>()];
        cell.first = r.at("step").get<double>();
        cell.second.first += r.at("total").get<double>();
        cell.second.second += 1;
    }
    require(!acc.empty(), "'" + metrics_log.string() + "' has no records");
    std::vector<plot::Series> series;
    for (const auto& [task, epochs] : acc) {
        plot::Series s{"task " + std::to_string(task + 1), {}, {}};
        for (const auto& [epoch, cell] : epochs) {
            s.x.push_back(cell.first);
            s.y.push_back(cell.second.first / static_cast<double>(cell.second.second));
        }
        series.push_back(std::move(s));
    }
    plot::PlotSpec spec;
    spec.title = "training loss";
    spec.x_label = "step";
    spec.y_label = "mean total loss per epoch";
    plot::write_line_plot(out, spec, series);
}

void plot_knn_matrix(const json& matrix, const fs::path& out) {
    const auto& rows = matrix.at("matrix");
    require(!rows.empty(), "knn matrix is empty");
    std::vector<plot::Series> series;
    const std::size_t tasks = rows.front().size();
    for (std::size_t j = 0; j < tasks; ++j) {
        plot::Series s{"task " + std::to_string(j + 1), {}, {}};
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!rows[i][j].is_null()) {
                s.x.push_back(static_cast<double>(i + 1));
                s.y.push_back(100.0 * rows[i][j].get<double>());
            }
        series.push_back(std::move(s));
    }
    plot::PlotSpec spec;
    spec.title = "knn accuracy per task";
    spec.x_label = "after task";
    spec.y_label = "accuracy (%)";
    spec.y_min = 0;
    spec.y_max = 100;
    plot::write_line_plot(out, spec, series);
}

bool numeric_axis(const std::string& axis) { return axis != "strategy"; }

void plot_sweep(const json& sweep, const fs::path& out) {
    const std::string axis = sweep.at("axis").get<std::string>();
    std::vector<plot::Series> series;
    plot::Series line{"LA", {}, {}};
    int index = 0;
    for (const auto& c : sweep.at("cells")) {
        ++index;
        if (!c.at("ok").get<bool>()) continue;
        const double la = 100.0 * c.at("LA").get<double>();
        if (numeric_axis(axis)) {
            line.x.push_back(std::stod(c.at("value").get<std::string>()));
            line.y.push_back(la);
        } else {
            series.push_back({c.at("value").get<std::string>(), {static_cast<double>(index)}, {la}});
        }
    }
    if (numeric_axis(axis)) {
        require(!line.x.empty(), "sweep: no successful cell to plot");
        series.push_back(std::move(line));
    }
    require(!series.empty(), "sweep: no successful cell to plot");
    plot::PlotSpec spec;
    spec.title = "final LA by " + axis;
    spec.x_label = numeric_axis(axis) ? axis : axis + " (index)";
    spec.y_label = "LA (%)";
    plot::write_line_plot(out, spec, series);
}

std::vector<confusion::CurveSeries> read_curves(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw RuntimeError("cannot read '" + csv.string() + "'");
    std::string line;
    std::getline(in, line);
    std::map<std::pair<std::string, std::string>, std::map<int, confusion::CurvePoint>> acc;
    std::vector<std::pair<std::string, std::string>> order;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string learner, schedule, metric, it, value;
        std::getline(ss, learner, ',');
        std::getline(ss, schedule, ',');
        std::getline(ss, metric, ',');
        std::getline(ss, it, ',');
        std::getline(ss, value, ',');
        const auto key = std::make_pair(learner, schedule);
        if (!acc.count(key)) order.push_back(key);
        auto& p = acc[key][std::stoi(it)];
        p.iteration = std::stoi(it);
        const double v = std::stod(value);
        if (metric == "LA") p.la = v;
        else if (metric == "TP") p.tp = v;
        else if (metric == "WP") p.wp = v;
        else throw RuntimeError("'" + csv.string() + "': unknown metric '" + metric + "'");
    }
    std::vector<confusion::CurveSeries> out;
    for (const auto& key : order) {
        confusion::CurveSeries s{key.first, key.second, {}};
        for (const auto& [it, p] : acc[key]) s.points.push_back(p);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
    cfg.validate();
    const std::string hash = cfg.hash();
    const fs::path final_dir = fs::path(cfg.output_root) / hash;
    const data::DatasetSplits ds = load_data(cfg.data.dataset, cfg.data.root, cfg.data.synthetic);
    const data::TaskSequence seq = make_split(cfg, ds.train);
    const std::vector<int> class_map = metric_class_map(cfg, ds.train);

    core::Trainer trainer(cfg.train_config(), ds.train.shape, hash);
    std::optional<fs::path> resume_src;
    if (opt.resume) {
        resume_src = fs::absolute(*opt.resume);
        trainer.resume(*resume_src);
    }
    const fs::path staging = begin_directory(final_dir, opt.force, resume_src.value_or(fs::path{}));
    say(opt, "run " + hash + " (" + cfg.name + ") in " + final_dir.string());

    write_text(staging / "config.snapshot", cfg.to_json().dump(2) + "\n");
    json manifest{{"hash", hash}, {"name", cfg.name}, {"dataset", cfg.data.dataset}, {"split", seq.manifest()}};
    write_text(staging / "manifest.json", manifest.dump(2) + "\n");

    const fs::path ckpt_dir = staging / "checkpoints";
    fs::create_directories(ckpt_dir);
    if (resume_src) {
        // Earlier boundaries come from the source run so the directory stays
        // complete.
        const fs::path src_dir = resume_src->parent_path();
        for (int k : sorted_task_checkpoints(src_dir))
            if (k <= trainer.state().task_index)
                fs::copy_file(src_dir / ("task_" + std::to_string(k)), ckpt_dir / ("task_" + std::to_string(k)));
    }
    trainer.set_checkpoint_dir(ckpt_dir);

    {
        std::ofstream log(staging / "metrics.log", std::ios::binary);
        if (!log) throw RuntimeError("cannot write metrics.log");
        if (resume_src) {
            std::ifstream earlier(resume_src->parent_path().parent_path() / "metrics.log");
            std::string line;
            while (std::getline(earlier, line)) {
                const json r = json::parse(line, nullptr, false);
                if (!r.is_discarded() && r.value("task", 0) < trainer.state().task_index) log << line << '\n';
            }
        }
        trainer.set_step_callback([&log](const core::StepRecord& r) { log << r.to_json().dump() << '\n'; });
        for (int t = trainer.state().task_index; t < seq.size(); ++t) {
            const data::Task& task = seq.tasks[static_cast<std::size_t>(t)];
            say(opt, "task " + std::to_string(t + 1) + "/" + std::to_string(seq.size()) + ": " +
                         std::to_string(task.dataset.size()) + " samples, " +
                         std::to_string(cfg.train_config().epochs_for(t)) + " epochs");
            trainer.train_task(task);
            trainer.end_task(task);
        }
        trainer.set_step_callback({});
        if (!log) throw RuntimeError("write failure on metrics.log");
    }

    nn::Container buffer;
    buffer.config_hash = hash;
    trainer.state().buffer.save(buffer);
    nn::save_container(staging / "buffer.snapshot", buffer);

    say(opt, "evaluating");
    nn::TriNet& net = *trainer.state().net;
    const data::AugmentationPolicy& policy = cfg.trainer.augmentation;
    const Mat f_train = eval::encode_dataset(eval::encoder_features(net), ds.train, policy);
    const Mat f_test = eval::encode_dataset(eval::encoder_features(net), ds.test, policy);
    eval::ProbeConfig probe = cfg.eval.probe;
    if (probe.seed == 0) probe.seed = cfg.train_seed();
    const eval::LinearProbe phi = eval::fit_linear_probe(f_train, ds.train.labels, ds.train.class_count, probe);
    eval::MetricsReport report = eval::compute_la_wp_tp(phi.predict(f_test), ds.test.labels, class_map);
    const int k = clip_k(cfg.eval.knn_k, ds.train.size(), "eval");
    report.knn_accuracy = eval::knn_eval(f_train, ds.train.labels, f_test, ds.test.labels, k, ds.train.class_count);

    json rec{{"name", cfg.name},
             {"hash", hash},
             {"strategy", core::to_string(cfg.strategy.name)},
             {"ssl", losses::to_string(cfg.ssl.kind)},
             {"knn_k", k},
             {"metrics", report.to_json()}};
    if (cfg.eval.per_task_knn && cfg.data.split == "class_incremental") {
        const data::TaskSequence test_seq = data::apply_class_split(seq, ds.test);
        std::vector<std::unique_ptr<nn::TriNet>> nets;
        std::vector<eval::FeatureFn> fns;
        for (int t = 1; t <= seq.size(); ++t) {
            nets.push_back(load_net(cfg, ds.train.shape, nn::load_container(ckpt_dir / ("task_" + std::to_string(t)))));
            fns.push_back(eval::encoder_features(*nets.back()));
        }
        int smallest = ds.train.size();
        for (const auto& task : seq.tasks) smallest = std::min(smallest, task.dataset.size());
        const eval::TaskMatrix m =
            eval::per_task_knn_matrix(fns, seq, test_seq, policy, std::min(cfg.eval.knn_k, smallest));
        rec["per_task_knn"] = m.to_json();
        plot_knn_matrix(rec["per_task_knn"], staging / "knn.png");
    }
    write_text(staging / "report.json", rec.dump(2) + "\n");

    std::ostringstream table;
    table << "name,hash,strategy,ssl,LA,WP,TP,knn\n"
          << cfg.name << ',' << hash << ',' << core::to_string(cfg.strategy.name) << ','
          << losses::to_string(cfg.ssl.kind) << ',' << report.la << ',' << report.wp << ',' << report.tp << ','
          << *report.knn_accuracy << '\n';
    write_text(staging / "tables.csv", table.str());
    eval::write_confusion_csv(staging / "confusion.csv", report);
    plot_losses(staging / "metrics.log", staging / "loss.png");

    finish_directory(staging, final_dir);
    return {final_dir, hash, report};
}

EvalMode parse_eval_mode(const std::string& name) {
    if (name == "linear") return EvalMode::kLinear;
    if (name == "knn") return EvalMode::kKnn;
    if (name == "transfer") return EvalMode::kTransfer;
    throw ValidationError("unknown eval mode '" + name + "' (expected linear, knn or transfer)");
}

std::string to_string(EvalMode mode) {
    switch (mode) {
        case EvalMode::kLinear: return "linear";
        case EvalMode::kKnn: return "knn";
        case EvalMode::kTransfer: return "transfer";
    }
    return "?";
}

json evaluate_checkpoint(const EvalRequest& req) {
    require(fs::is_regular_file(req.checkpoint), "checkpoint '" + req.checkpoint.string() + "' does not exist");
    const fs::path run_dir = fs::absolute(req.checkpoint).parent_path().parent_path();
    require(fs::is_regular_file(run_dir / "config.snapshot"),
            "'" + run_dir.string() + "' is not a run directory (no config.snapshot)");
    const ExperimentConfig cfg = ExperimentConfig::from_json(read_json(run_dir / "config.snapshot"));
    const nn::Container c = nn::load_container(req.checkpoint);
    if (c.config_hash != cfg.hash())
        throw ValidationError("checkpoint hash " + c.config_hash + " does not match the run configuration " +
                              cfg.hash());

    const data::DatasetSplits ds = load_data(cfg.data.dataset, cfg.data.root, cfg.data.synthetic);
    const auto net = load_net(cfg, ds.train.shape, c);
    const eval::FeatureFn enc = eval::encoder_features(*net);
    const data::AugmentationPolicy& policy = cfg.trainer.augmentation;
    eval::ProbeConfig probe = cfg.eval.probe;
    if (probe.seed == 0) probe.seed = cfg.train_seed();

    json rec{{"checkpoint", req.checkpoint.filename().string()}, {"hash", cfg.hash()}, {"mode", to_string(req.mode)}};
    if (req.mode == EvalMode::kTransfer) {
        data::SyntheticConfig syn = cfg.data.synthetic;
        syn.seed += 1;
        const data::DatasetSplits target = load_data(req.target, req.target_root, syn);
        require(target.train.shape == ds.train.shape, "transfer: target images are " + target.train.shape.to_string() +
                                                          ", the model expects " + ds.train.shape.to_string());
        eval::ProbeConfig tp = eval::ProbeConfig::transfer();
        tp.seed = probe.seed;
        const Mat ftr = eval::encode_dataset(enc, target.train, policy);
        const Mat fte = eval::encode_dataset(enc, target.test, policy);
        const eval::LinearProbe phi = eval::fit_linear_probe(ftr, target.train.labels, target.train.class_count, tp);
        const auto pred = phi.predict(fte);
        long correct = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == target.test.labels[i];
        rec["target"] = req.target;
        rec["probe"] = tp.to_json();
        rec["accuracy"] = static_cast<double>(correct) / static_cast<double>(pred.size());
    } else {
        const std::vector<int> class_map = metric_class_map(cfg, ds.train);
        const Mat ftr = eval::encode_dataset(enc, ds.train, policy);
        const Mat fte = eval::encode_dataset(enc, ds.test, policy);
        eval::MetricsReport r;
        if (req.mode == EvalMode::kLinear) {
            const eval::LinearProbe phi = eval::fit_linear_probe(ftr, ds.train.labels, ds.train.class_count, probe);
            r = eval::compute_la_wp_tp(phi.predict(fte), ds.test.labels, class_map);
        } else {
            const int k = req.k.value_or(cfg.eval.knn_k);
            require(k >= 1, "knn: k must be >= 1");
            const int kk = clip_k(k, ds.train.size(), "knn");
            r = eval::compute_la_wp_tp(eval::knn_predict(ftr, ds.train.labels, fte, kk, ds.train.class_count),
                                       ds.test.labels, class_map);
            r.knn_accuracy = r.la;
            rec["k"] = kk;
        }
        rec["metrics"] = r.to_json();
    }
    const fs::path out = run_dir / ("eval_" + to_string(req.mode) + "_" + req.checkpoint.filename().string() + ".json");
    write_text(out, rec.dump(2) + "\n");
    rec["path"] = out.string();
    return rec;
}

std::vector<std::string> sweep_axes() { return {"buffer_budget", "alpha", "zeta", "strategy"}; }

SweepResult run_sweep(const json& base, const std::string& axis, const std::vector<std::string>& values,
                      const RunOptions& opt) {
    std::string path;
    if (axis == "buffer_budget") path = "strategy.buffer_budget";
    else if (axis == "alpha") path = "strategy.alpha";
    else if (axis == "zeta") path = "strategy.zeta";
    else if (axis == "strategy") path = "strategy.name";
    else throw ValidationError("unknown sweep axis '" + axis + "' (expected buffer_budget, alpha, zeta or strategy)");
    require(!values.empty(), "sweep: the values list is empty");
    for (const auto& v : values) require(!v.empty(), "sweep: empty value in the values list");
    const ExperimentConfig base_cfg = ExperimentConfig::from_json(base);

    json id{{"base", base_cfg.to_json()}, {"axis", axis}, {"values", values}};
    id["base"].erase("output_root");
    const std::string hash = hash_document(id);
    const fs::path final_dir = fs::path(base_cfg.output_root) / "sweep" / hash;
    fs::create_directories(final_dir.parent_path());
    const fs::path staging = begin_directory(final_dir, true);

    SweepResult result;
    for (const auto& value : values) {
        SweepCell cell;
        cell.value = value;
        try {
            json doc = base;
            apply_override(doc, path + "=" + value);
            if (axis == "strategy") {
                // Heads and buffer follow the strategy being swept.
                const core::StrategyTraits t = core::traits(core::parse_strategy(value));
                apply_override(doc, std::string("model.distill_head=") + (t.distill ? "true" : "false"));
                if (!doc["strategy"].contains("zeta") || doc["strategy"]["zeta"].is_null() || !t.distill)
                    doc["strategy"]["zeta"] = t.default_zeta;
                if (t.needs_buffer() && doc["strategy"].value("buffer_budget", 500) == 0)
                    doc["strategy"]["buffer_budget"] = base_cfg.strategy.buffer_budget > 0 ? base_cfg.strategy.buffer_budget : 500;
            }
            doc["name"] = base_cfg.name + "-" + axis + "=" + value;
            const ExperimentConfig cfg = ExperimentConfig::from_json(doc);
            cell.hash = cfg.hash();
            const fs::path run_dir = fs::path(cfg.output_root) / cell.hash;
            if (fs::is_regular_file(run_dir / "report.json") && !opt.force) {
                say(opt, "cell " + axis + "=" + value + ": reusing " + run_dir.string());
                const json r = read_json(run_dir / "report.json").at("metrics");
                eval::MetricsReport m;
                m.la = r.at("LA").get<double>();
                m.tp = r.at("TP").get<double>();
                m.wp = r.at("WP").get<double>();
                if (r.contains("knn_accuracy")) m.knn_accuracy = r.at("knn_accuracy").get<double>();
                cell.report = m;
            } else {
                say(opt, "cell " + axis + "=" + value);
                RunOptions cell_opt = opt;
                cell_opt.resume.reset();
                cell.report = run_experiment(cfg, cell_opt).report;
            }
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
            say(opt, "cell " + axis + "=" + value + " failed: " + cell.error);
        }
        result.cells.push_back(std::move(cell));
    }

    json cells = json::array();
    std::ostringstream csv;
    csv << "axis,value,status,LA,WP,TP,knn,hash,error\n";
    for (const auto& c : result.cells) {
        json j{{"value", c.value}, {"ok", c.ok}, {"hash", c.hash}, {"error", c.error}};
        csv << axis << ',' << c.value << ',' << (c.ok ? "ok" : "failed") << ',';
        if (c.report) {
            j["LA"] = c.report->la;
            j["WP"] = c.report->wp;
            j["TP"] = c.report->tp;
            csv << c.report->la << ',' << c.report->wp << ',' << c.report->tp << ','
                << c.report->knn_accuracy.value_or(0.0);
        } else {
            csv << ",,,";
        }
        std::string err = c.error;
        for (char& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        csv << ',' << c.hash << ',' << err << '\n';
        cells.push_back(j);
    }
    const json sweep{{"axis", axis}, {"base", base_cfg.name}, {"hash", hash}, {"cells", cells}};
    write_text(staging / "sweep.json", sweep.dump(2) + "\n");
    write_text(staging / "sweep.csv", csv.str());
    bool any = false;
    for (const auto& c : result.cells) any = any || c.ok;
    if (any) plot_sweep(sweep, staging / "sweep.png");
    finish_directory(staging, final_dir);
    result.dir = final_dir;
    return result;
}

ConfusionResult run_confusion_study(const ConfusionStudy& study, const RunOptions& opt) {
    study.validate();
    const std::string hash = study.hash();
    const fs::path final_dir = fs::path(study.output_root) / "confusion" / hash;
    const data::DatasetSplits ds = load_data(study.dataset, study.root, study.synthetic);
    fs::create_directories(final_dir.parent_path());

    ConfusionResult result;
    json cells = json::array();
    std::map<std::pair<std::string, std::string>, std::array<double, 3>> finals;
    for (const auto& learner : study.learners)
        for (auto schedule : study.schedules) {
            std::vector<confusion::CurveSeries> runs;
            json per_seed = json::array();
            for (auto seed : study.seeds) {
                say(opt, learner + " / " + confusion::to_string(schedule) + " / seed " + std::to_string(seed));
                runs.push_back(confusion::run_confusion_experiment(study.cell(learner, schedule, seed), ds.train));
                const auto& p = runs.back().points.back();
                per_seed.push_back({{"seed", seed}, {"LA", p.la}, {"TP", p.tp}, {"WP", p.wp}});
            }
            confusion::CurveSeries mean{learner, confusion::to_string(schedule), runs.front().points};
            for (std::size_t i = 0; i < mean.points.size(); ++i) {
                double la = 0, tp = 0, wp = 0;
                for (const auto& r : runs) {
                    la += r.points[i].la;
                    tp += r.points[i].tp;
                    wp += r.points[i].wp;
                }
                const auto n = static_cast<double>(runs.size());
                mean.points[i] = {mean.points[i].iteration, la / n, wp / n, tp / n};
            }
            const auto& last = mean.points.back();
            finals[{learner, mean.schedule}] = {last.la, last.tp, last.wp};
            cells.push_back({{"learner", learner},
                             {"schedule", mean.schedule},
                             {"seeds", per_seed},
                             {"mean", {{"LA", last.la}, {"TP", last.tp}, {"WP", last.wp}}}});
            result.curves.push_back(std::move(mean));
        }

    // Gaps in points relative to single-pool training.
    json gaps = json::object();
    for (const auto& learner : study.learners) {
        const auto pool = finals.find({learner, "single_pool"});
        if (pool == finals.end()) continue;
        for (const char* other : {"cil_minibatch", "dil_minibatch"}) {
            const auto it = finals.find({learner, other});
            if (it == finals.end()) continue;
            gaps[learner][other] = {{"LA", 100 * (pool->second[0] - it->second[0])},
                                    {"TP", 100 * (pool->second[1] - it->second[1])},
                                    {"WP", 100 * (pool->second[2] - it->second[2])}};
        }
    }
    result.summary = {{"name", study.name}, {"hash", hash}, {"cells", cells}, {"gaps_vs_single_pool", gaps}};

    const fs::path staging = begin_directory(final_dir, true);
    write_text(staging / "study.json", study.to_json().dump(2) + "\n");
    write_text(staging / "summary.json", result.summary.dump(2) + "\n");
    confusion::emit_curves(result.curves, staging);
    finish_directory(staging, final_dir);
    result.dir = final_dir;
    return result;
}

std::vector<fs::path> replot(const fs::path& dir) {
    require(fs::is_directory(dir), "'" + dir.string() + "' is not a directory");
    std::vector<fs::path> out;
    if (fs::is_regular_file(dir / "metrics.log")) {
        plot_losses(dir / "metrics.log", dir / "loss.png");
        out.push_back(dir / "loss.png");
    }
    if (fs::is_regular_file(dir / "report.json")) {
        const json r = read_json(dir / "report.json");
        if (r.contains("per_task_knn")) {
            plot_knn_matrix(r.at("per_task_knn"), dir / "knn.png");
            out.push_back(dir / "knn.png");
        }
    }
    if (fs::is_regular_file(dir / "sweep.json")) {
        plot_sweep(read_json(dir / "sweep.json"), dir / "sweep.png");
        out.push_back(dir / "sweep.png");
    }
    if (fs::is_regular_file(dir / "curves.csv")) {
        confusion::emit_curves(read_curves(dir / "curves.csv"), dir);
        for (const char* n : {"la.png", "tp.png", "wp.png"}) out.push_back(dir / n);
    }
    require(!out.empty(), "'" + dir.string() + "' holds no run, sweep or confusion records");
    return out;
}

}  // namespace cromo::experiment
