#include "cromo/experiment/config.hpp"

#include "cromo/error.hpp"
#include "cromo/rng.hpp"

#include <cstdio>
#include <fstream>
#include <map>

namespace cromo::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void expect_object(const json& j, const std::string& where) {
    require(j.is_object(), where + ": expected an object");
}

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
    throw ValidationError(where + ": unknown key '" + key + "'");
}

// nlohmann type errors carry no context; rethrow them as validation
// failures naming the section.
template <class F>
auto parse_section(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

std::vector<int> epochs_from_json(const json& v) {
    if (v.is_number_integer()) return {v.get<int>()};
    require(v.is_array() && !v.empty(), "trainer.epochs: expected an integer or a non-empty list");
    return v.get<std::vector<int>>();
}

}  // namespace

DataConfig DataConfig::from_json(const json& j) {
    expect_object(j, "data");
    DataConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "dataset") c.dataset = v.get<std::string>();
        else if (key == "root") c.root = v.get<std::string>();
        else if (key == "split") c.split = v.get<std::string>();
        else if (key == "tasks") c.tasks = v.get<int>();
        else if (key == "synthetic") {
            expect_object(v, "data.synthetic");
            c.synthetic = data::SyntheticConfig::from_json(v);
        } else unknown_key("data", key);
    }
    return c;
}

json DataConfig::to_json() const {
    json j{{"dataset", dataset}, {"root", root}, {"split", split}, {"tasks", tasks}};
    if (dataset == "synthetic-gaussians") j["synthetic"] = synthetic.to_json();
    return j;
}

void DataConfig::validate() const {
    bool known = false;
    for (const auto& n : data::dataset_names()) known = known || n == dataset;
    require(known, "data: unknown dataset '" + dataset + "'");
    require(split == "class_incremental" || split == "data_incremental",
            "data: split must be class_incremental or data_incremental");
    require(tasks >= 1, "data: tasks must be >= 1");
}

StrategyConfig StrategyConfig::from_json(const json& j) {
    expect_object(j, "strategy");
    StrategyConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "name") c.name = core::parse_strategy(v.get<std::string>());
        else if (key == "zeta") {
            if (!v.is_null()) c.zeta = v.get<double>();
        } else if (key == "alpha") c.alpha = v.get<double>();
        else if (key == "buffer_budget") c.buffer_budget = v.get<int>();
        else if (key == "buffer_batch") c.buffer_batch = v.get<int>();
        else unknown_key("strategy", key);
    }
    return c;
}

json StrategyConfig::to_json() const {
    json j{{"name", core::to_string(name)},
           {"alpha", alpha},
           {"buffer_budget", buffer_budget},
           {"buffer_batch", buffer_batch}};
    // The effective value, so an explicit default and an omitted key agree.
    j["zeta"] = zeta.value_or(core::traits(name).default_zeta);
    return j;
}

TrainerSection TrainerSection::from_json(const json& j) {
    expect_object(j, "trainer");
    TrainerSection c;
    for (const auto& [key, v] : j.items()) {
        if (key == "epochs") c.epochs = epochs_from_json(v);
        else if (key == "batch_size") c.batch_size = v.get<int>();
        else if (key == "optim") c.optim = nn::OptimConfig::from_json(v);
        else if (key == "augmentation") {
            expect_object(v, "trainer.augmentation");
            c.augmentation = data::AugmentationPolicy::from_json(v);
        } else if (key == "ema_base") c.ema_base = v.get<double>();
        else if (key == "seed") {
            if (!v.is_null()) c.seed = v.get<std::uint64_t>();
        } else unknown_key("trainer", key);
    }
    return c;
}

json TrainerSection::to_json() const {
    json j{{"epochs", epochs},
           {"batch_size", batch_size},
           {"optim", optim.to_json()},
           {"augmentation", augmentation.to_json()},
           {"ema_base", ema_base}};
    if (seed) j["seed"] = *seed;
    return j;
}

EvalConfig EvalConfig::from_json(const json& j) {
    expect_object(j, "eval");
    EvalConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "probe") c.probe = eval::ProbeConfig::from_json(v);
        else if (key == "knn_k") c.knn_k = v.get<int>();
        else if (key == "per_task_knn") c.per_task_knn = v.get<bool>();
        else unknown_key("eval", key);
    }
    return c;
}

json EvalConfig::to_json() const {
    return {{"probe", probe.to_json()}, {"knn_k", knn_k}, {"per_task_knn", per_task_knn}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    return parse_section("config", [&] {
        expect_object(j, "config");
        ExperimentConfig c;
        for (const auto& [key, v] : j.items()) {
            if (key == "name") c.name = v.get<std::string>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "output_root") c.output_root = v.get<std::string>();
            else if (key == "data") c.data = DataConfig::from_json(v);
            else if (key == "model") c.model = nn::ModelConfig::from_json(v);
            else if (key == "ssl") c.ssl = losses::SslLossSpec::from_json(v);
            else if (key == "strategy") c.strategy = StrategyConfig::from_json(v);
            else if (key == "trainer") c.trainer = TrainerSection::from_json(v);
            else if (key == "eval") c.eval = EvalConfig::from_json(v);
            else unknown_key("config", key);
        }
        c.validate();
        return c;
    });
}

json ExperimentConfig::to_json() const {
    return {{"name", name},
            {"seed", seed},
            {"output_root", output_root},
            {"data", data.to_json()},
            {"model", model.to_json()},
            {"ssl", ssl.to_json()},
            {"strategy", strategy.to_json()},
            {"trainer", trainer.to_json()},
            {"eval", eval.to_json()}};
}

void ExperimentConfig::validate() const {
    require(!name.empty(), "config: name must not be empty");
    data.validate();
    model.validate();
    ssl.validate();
    trainer.optim.validate();
    eval.probe.validate();
    require(eval.knn_k >= 1, "eval: knn_k must be >= 1");
    require(trainer.batch_size >= 2, "trainer: batch_size must be >= 2");
    require(strategy.buffer_batch >= 1, "strategy: buffer_batch must be >= 1");
    require(strategy.buffer_budget >= 0, "strategy: buffer_budget must be >= 0");
    train_config().validate(data.tasks);
}

core::TrainConfig ExperimentConfig::train_config() const {
    core::TrainConfig t;
    t.strategy = strategy.name;
    t.zeta = strategy.zeta;
    t.alpha = strategy.alpha;
    t.buffer_budget = strategy.buffer_budget;
    t.buffer_batch = strategy.buffer_batch;
    t.ssl = ssl;
    t.model = model;
    t.optim = trainer.optim;
    t.augmentation = trainer.augmentation;
    t.epochs = trainer.epochs;
    t.batch_size = trainer.batch_size;
    t.ema_base = trainer.ema_base;
    t.seed = train_seed();
    return t;
}

std::string ExperimentConfig::hash() const {
    json j = to_json();
    j.erase("output_root");
    return hash_document(j);
}

confusion::ConfusionExperiment ConfusionStudy::cell(const std::string& learner, confusion::ScheduleKind schedule,
                                                    std::uint64_t seed) const {
    json j = base.to_json();
    if (learner_overrides.contains(learner)) j.merge_patch(learner_overrides.at(learner));
    j["learner"] = learner;
    j["schedule"] = confusion::to_string(schedule);
    j["seed"] = seed;
    if (learner == "byol") j["model"]["predictor"] = true;
    return parse_section("confusion cell " + learner, [&] { return confusion::ConfusionExperiment::from_json(j); });
}

ConfusionStudy ConfusionStudy::from_json(const json& j) {
    return parse_section("confusion", [&] {
        expect_object(j, "confusion");
        ConfusionStudy c;
        for (const auto& [key, v] : j.items()) {
            if (key == "name") c.name = v.get<std::string>();
            else if (key == "output_root") c.output_root = v.get<std::string>();
            else if (key == "dataset") c.dataset = v.get<std::string>();
            else if (key == "root") c.root = v.get<std::string>();
            else if (key == "synthetic") {
                expect_object(v, "confusion.synthetic");
                c.synthetic = data::SyntheticConfig::from_json(v);
            } else if (key == "learners") c.learners = v.get<std::vector<std::string>>();
            else if (key == "schedules") {
                c.schedules.clear();
                for (const auto& s : v) c.schedules.push_back(confusion::parse_schedule(s.get<std::string>()));
            } else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
            else if (key == "experiment") c.base = confusion::ConfusionExperiment::from_json(v);
            else if (key == "learner_overrides") {
                expect_object(v, "confusion.learner_overrides");
                c.learner_overrides = v;
            } else unknown_key("confusion", key);
        }
        c.validate();
        return c;
    });
}

json ConfusionStudy::to_json() const {
    json schedule_names = json::array();
    for (auto s : schedules) schedule_names.push_back(confusion::to_string(s));
    json j{{"name", name},
           {"output_root", output_root},
           {"dataset", dataset},
           {"root", root},
           {"learners", learners},
           {"schedules", schedule_names},
           {"seeds", seeds},
           {"experiment", base.to_json()},
           {"learner_overrides", learner_overrides}};
    if (dataset == "synthetic-gaussians") j["synthetic"] = synthetic.to_json();
    return j;
}

void ConfusionStudy::validate() const {
    require(!learners.empty(), "confusion: learners must not be empty");
    require(!schedules.empty(), "confusion: schedules must not be empty");
    require(!seeds.empty(), "confusion: seeds must not be empty");
    for (const auto& [learner, patch] : learner_overrides.items()) {
        bool listed = false;
        for (const auto& l : learners) listed = listed || l == learner;
        require(listed, "confusion: learner_overrides names '" + learner + "', which is not in learners");
        require(patch.is_object(), "confusion: learner_overrides." + learner + " must be an object");
    }
    for (const auto& l : learners)
        for (auto s : schedules) cell(l, s, seeds.front()).validate();
}

std::string ConfusionStudy::hash() const {
    json j = to_json();
    j.erase("output_root");
    return hash_document(j);
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, "override '" + assignment + "' is not of the form key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        require(!key.empty(), "override '" + assignment + "' has an empty path component");
        if (!node->is_object()) {
            require(node->is_null(), "override '" + assignment + "': '" + key + "' is below a non-object value");
            *node = json::object();
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

std::string hash_document(const json& doc) {
    // nlohmann::json keeps object keys sorted, so dump() is canonical.
    const std::uint64_t h = fnv1a64(doc.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

struct FullScaleDataset {
    const char* preset;
    const char* dataset;  // registry name
    const char* family;   // table_dims family
    const char* arch;
    int tasks;
    int first_epochs, later_epochs;
    int buffer;  // samples saved per task
    int column;  // column in the per-dataset hyperparameter triples
};

constexpr FullScaleDataset kFullScaleDatasets[] = {
    {"cifar10_split2", "cifar10", "cifar10", "resnet18", 2, 500, 500, 500, 0},
    {"cifar100_split5", "cifar100", "cifar100", "resnet18", 5, 750, 750, 500, 1},
    {"cifar100_split10", "cifar100", "cifar100", "resnet18", 10, 600, 350, 100, 1},
    {"tinyimagenet_split10", "tinyimagenet", "tinyimagenet", "resnet50", 10, 500, 350, 100, 2},
};

struct SslRecipe {
    const char* preset;
    const char* kind;
    int batch[3];
    double lr[3];
    const char* optimizer;
    double weight_decay;
};

constexpr SslRecipe kSslRecipes[] = {
    {"corinfomax", "corinfomax", {512, 512, 256}, {0.1, 0.1, 0.5}, "sgd", 1e-4},
    {"simclr", "simclr", {512, 512, 256}, {0.6, 0.6, 0.3}, "sgd", 5e-4},
    {"byol", "byol", {256, 256, 256}, {1.0, 1.0, 0.3}, "lars", 1e-5},
    {"barlow", "barlow_twins", {256, 256, 256}, {0.3, 0.3, 0.3}, "lars", 1e-4},
};

json full_scale_preset(const FullScaleDataset& d, const SslRecipe& r, core::Strategy strategy) {
    const auto col = static_cast<std::size_t>(d.column);
    nn::ModelConfig model = nn::table_dims(d.arch, r.kind, d.family);
    const core::StrategyTraits t = core::traits(strategy);
    model.distill_head = t.distill;

    ExperimentConfig c;
    c.name = std::string(d.preset) + "_" + r.preset + "_" + core::to_string(strategy);
    c.data.dataset = d.dataset;
    c.data.root = std::string("data/") + d.dataset;
    c.data.tasks = d.tasks;
    c.model = model;
    c.ssl.kind = losses::parse_ssl_kind(r.kind);
    c.strategy.name = strategy;
    c.strategy.buffer_budget = t.needs_buffer() ? d.buffer : 0;
    c.strategy.buffer_batch = 64;
    c.trainer.epochs = {d.first_epochs};
    if (d.later_epochs != d.first_epochs) {
        c.trainer.epochs.assign(static_cast<std::size_t>(d.tasks), d.later_epochs);
        c.trainer.epochs.front() = d.first_epochs;
    }
    c.trainer.batch_size = r.batch[col];
    c.trainer.optim.kind = r.optimizer;
    c.trainer.optim.lr = r.lr[col];
    c.trainer.optim.weight_decay = r.weight_decay;
    c.trainer.augmentation = data::AugmentationPolicy::standard(3);
    return c.to_json();
}

// Desk-scale continual setup: two tasks over four synthetic classes.
json toy_preset(const std::string& ssl, core::Strategy strategy) {
    const core::StrategyTraits t = core::traits(strategy);
    ExperimentConfig c;
    c.name = "toy_" + ssl + "_" + core::to_string(strategy);
    c.data.dataset = "synthetic-gaussians";
    c.data.tasks = 2;
    c.data.synthetic.classes = 4;
    c.data.synthetic.train_per_class = 100;
    c.data.synthetic.test_per_class = 100;
    c.data.synthetic.shape = {1, 8, 8};
    c.data.synthetic.noise = 80;
    c.data.synthetic.prototype_scale = 30;
    c.data.synthetic.seed = 100;
    c.model.arch = "mlp";
    c.model.encoder_hidden = {64};
    c.model.feature_dim = 32;
    c.model.embed_dim = 32;
    c.model.projector_layers = 2;
    c.model.predictor = ssl == "byol";
    c.model.predictor_hidden = 32;
    c.model.distill_head = t.distill;
    c.ssl.kind = losses::parse_ssl_kind(ssl == "barlow" ? "barlow_twins" : ssl);
    c.strategy.name = strategy;
    c.strategy.buffer_budget = t.needs_buffer() ? 50 : 0;
    c.strategy.buffer_batch = 32;
    c.trainer.epochs = {60};
    c.trainer.batch_size = 32;
    c.trainer.optim.lr = 0.1;
    c.trainer.optim.weight_decay = 1e-4;
    c.trainer.optim.warmup_epochs = 0;
    c.trainer.augmentation = data::AugmentationPolicy::noise_only(0.8);
    c.eval.probe.epochs = 100;
    return c.to_json();
}

// Seconds-long smoke run for the command-line surface.
json smoke_preset() {
    json j = toy_preset("simclr", core::Strategy::kCromo);
    ExperimentConfig c = ExperimentConfig::from_json(j);
    c.name = "toy_smoke";
    c.data.synthetic.train_per_class = 12;
    c.data.synthetic.test_per_class = 8;
    c.data.synthetic.shape = {1, 4, 4};
    c.model.encoder_hidden = {16};
    c.model.feature_dim = 8;
    c.model.embed_dim = 8;
    c.model.predictor_hidden = 8;
    c.strategy.buffer_budget = 6;
    c.strategy.buffer_batch = 6;
    c.trainer.epochs = {2};
    c.trainer.batch_size = 8;
    c.eval.probe.epochs = 20;
    c.eval.knn_k = 5;
    return c.to_json();
}

// Train-set task-confusion study on the toy data.
json confusion_toy_preset() {
    ConfusionStudy s;
    s.name = "confusion_toy";
    s.synthetic.classes = 4;
    s.synthetic.train_per_class = 100;
    s.synthetic.test_per_class = 0;
    s.synthetic.shape = {1, 8, 8};
    s.synthetic.noise = 80;
    s.synthetic.prototype_scale = 30;
    s.synthetic.seed = 1;
    s.seeds = {0, 1, 2};
    auto& e = s.base;
    e.tasks = 2;
    e.iterations = 1000;
    e.batch_size = 32;
    e.probe_every = 100;
    e.probe.epochs = 100;
    e.model.arch = "mlp";
    e.model.encoder_hidden = {64};
    e.model.feature_dim = 32;
    e.model.embed_dim = 32;
    e.model.projector_layers = 2;
    e.model.predictor_hidden = 32;
    e.optim.lr = 0.1;
    e.optim.weight_decay = 1e-4;
    e.optim.warmup_epochs = 0;
    e.augmentation = data::AugmentationPolicy::noise_only(0.1);
    return s.to_json();
}

// The CIFAR100 10x10 study with the per-learner optimizer settings.
json confusion_cifar100_preset() {
    ConfusionStudy s;
    s.name = "confusion_cifar100";
    s.dataset = "cifar100";
    s.root = "data/cifar100";
    auto& e = s.base;
    e.tasks = 10;
    e.batch_size = 256;
    e.iterations = 1000 * 50000 / 256;
    e.probe_every = 20000;
    e.model = nn::table_dims("resnet18", "barlow_twins", "cifar100");
    e.augmentation = data::AugmentationPolicy::standard(3);
    const std::map<std::string, std::tuple<const char*, double, int, int>> rows{
        {"corinfomax", {"sgd", 0.5, 1000, 512}}, {"barlow_twins", {"lars", 0.3, 1000, 256}},
        {"simclr", {"lars", 0.6, 1000, 512}},    {"byol", {"lars", 1.0, 1000, 256}},
        {"supervised", {"sgd", 0.075, 200, 128}}};
    for (const auto& [learner, row] : rows) {
        const auto& [opt, lr, epochs, batch] = row;
        json patch{{"optim", {{"kind", opt}, {"lr", lr}}},
                   {"batch_size", batch},
                   {"iterations", epochs * (50000 / batch)}};
        if (learner != "supervised" && learner != "barlow_twins") {
            const nn::ModelConfig m = nn::table_dims("resnet18", learner, "cifar100");
            patch["model"] = {{"embed_dim", m.embed_dim}, {"predictor", m.predictor}};
        }
        s.learner_overrides[learner] = patch;
    }
    return s.to_json();
}

const std::vector<std::string>& toy_ssl_names() {
    static const std::vector<std::string> names{"barlow", "simclr", "byol", "corinfomax"};
    return names;
}

}  // namespace

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& d : kFullScaleDatasets)
        for (const auto& r : kSslRecipes)
            for (const auto& s : core::strategy_names()) out.push_back(std::string(d.preset) + "_" + r.preset + "_" + s);
    for (const auto& ssl : toy_ssl_names())
        for (const auto& s : core::strategy_names()) out.push_back("toy_" + ssl + "_" + s);
    out.emplace_back("toy_smoke");
    out.emplace_back("confusion_toy");
    out.emplace_back("confusion_cifar100");
    return out;
}

json preset(const std::string& name) {
    if (name == "toy_smoke") return smoke_preset();
    if (name == "confusion_toy") return confusion_toy_preset();
    if (name == "confusion_cifar100") return confusion_cifar100_preset();
    for (const auto& s : core::strategy_names()) {
        const std::string suffix = "_" + s;
        if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
            continue;
        const std::string head = name.substr(0, name.size() - suffix.size());
        const core::Strategy strategy = core::parse_strategy(s);
        for (const auto& ssl : toy_ssl_names())
            if (head == "toy_" + ssl) return toy_preset(ssl, strategy);
        for (const auto& d : kFullScaleDatasets)
            for (const auto& r : kSslRecipes)
                if (head == std::string(d.preset) + "_" + r.preset) return full_scale_preset(d, r, strategy);
    }
    throw ValidationError("unknown preset '" + name + "' (see `cromo presets`)");
}

json load_document(const std::string& path_or_preset) {
    if (fs::is_regular_file(path_or_preset)) {
        std::ifstream in(path_or_preset);
        if (!in) throw RuntimeError("cannot read '" + path_or_preset + "'");
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ValidationError("'" + path_or_preset + "' is not valid JSON");
        return j;
    }
    require(path_or_preset.find('/') == std::string::npos && path_or_preset.find(".json") == std::string::npos,
            "config file '" + path_or_preset + "' does not exist");
    return preset(path_or_preset);
}

}  // namespace cromo::experiment
