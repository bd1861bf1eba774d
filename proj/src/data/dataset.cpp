#include "cromo/data/dataset.hpp"

#include "cromo/error.hpp"
#include "cromo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace cromo::data {

namespace fs = std::filesystem;

LabeledDataset LabeledDataset::subset(const std::vector<int>& indices) const {
    LabeledDataset out;
    out.name = name;
    out.shape = shape;
    out.class_count = class_count;
    const auto stride = static_cast<std::size_t>(shape.size());
    out.pixels.resize(indices.size() * stride);
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const int i = indices[k];
        require(i >= 0 && i < size(), "subset: index out of range");
        std::copy_n(image(i), stride, out.pixels.begin() + static_cast<std::ptrdiff_t>(k * stride));
        out.labels.push_back(labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<int> LabeledDataset::class_histogram() const {
    std::vector<int> h(static_cast<std::size_t>(class_count), 0);
    for (int y : labels) ++h[static_cast<std::size_t>(y)];
    return h;
}

void LabeledDataset::validate() const {
    require(class_count > 0, name + ": class_count must be positive");
    require(pixels.size() == labels.size() * static_cast<std::size_t>(shape.size()),
            name + ": image/label count mismatch");
    for (int y : labels) require(y >= 0 && y < class_count, name + ": label out of range");
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "classes") c.classes = value.get<int>();
        else if (key == "train_per_class") c.train_per_class = value.get<int>();
        else if (key == "test_per_class") c.test_per_class = value.get<int>();
        else if (key == "channels") c.shape.channels = value.get<int>();
        else if (key == "height") c.shape.height = value.get<int>();
        else if (key == "width") c.shape.width = value.get<int>();
        else if (key == "prototype_scale") c.prototype_scale = value.get<double>();
        else if (key == "noise") c.noise = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else throw ValidationError("synthetic: unknown key '" + key + "'");
    }
    return c;
}

nlohmann::json SyntheticConfig::to_json() const {
    return {{"classes", classes},   {"train_per_class", train_per_class}, {"test_per_class", test_per_class},
            {"channels", shape.channels}, {"height", shape.height},       {"width", shape.width},
            {"prototype_scale", prototype_scale}, {"noise", noise},        {"seed", seed}};
}

DatasetSplits make_synthetic_gaussians(const SyntheticConfig& cfg) {
    require(cfg.classes >= 1, "synthetic: classes must be >= 1");
    require(cfg.train_per_class >= 1 && cfg.test_per_class >= 0, "synthetic: bad per-class counts");
    require(cfg.shape.size() > 0, "synthetic: empty image shape");
    Rng rng = Rng::derive(cfg.seed, 0x5e7);
    const int dim = cfg.shape.size();
    std::vector<std::vector<double>> prototypes(static_cast<std::size_t>(cfg.classes));
    for (auto& p : prototypes) {
        p.resize(static_cast<std::size_t>(dim));
        for (double& v : p) v = 127.5 + rng.normal(0.0, cfg.prototype_scale);
    }
    auto fill = [&](LabeledDataset& ds, int per_class) {
        ds.name = "synthetic-gaussians";
        ds.shape = cfg.shape;
        ds.class_count = cfg.classes;
        ds.pixels.reserve(static_cast<std::size_t>(per_class * cfg.classes * dim));
        // Interleave classes so the natural order is not sorted by label.
        for (int k = 0; k < per_class; ++k) {
            for (int c = 0; c < cfg.classes; ++c) {
                const auto& p = prototypes[static_cast<std::size_t>(c)];
                // Stored HWC; the prototype vector is CHW.
                std::vector<std::uint8_t> img(static_cast<std::size_t>(dim));
                for (int ch = 0; ch < cfg.shape.channels; ++ch)
                    for (int y = 0; y < cfg.shape.height; ++y)
                        for (int x = 0; x < cfg.shape.width; ++x) {
                            const int chw = (ch * cfg.shape.height + y) * cfg.shape.width + x;
                            const int hwc = (y * cfg.shape.width + x) * cfg.shape.channels + ch;
                            const double v = p[static_cast<std::size_t>(chw)] + rng.normal(0.0, cfg.noise);
                            img[static_cast<std::size_t>(hwc)] =
                                static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                        }
                ds.pixels.insert(ds.pixels.end(), img.begin(), img.end());
                ds.labels.push_back(c);
            }
        }
    };
    DatasetSplits out;
    fill(out.train, cfg.train_per_class);
    fill(out.test, cfg.test_per_class);
    return out;
}

std::vector<std::string> dataset_names() { return {"cifar10", "cifar100", "tinyimagenet", "synthetic-gaussians"}; }

int registered_class_count(const std::string& name) {
    static const std::map<std::string, int> counts{{"cifar10", 10}, {"cifar100", 100}, {"tinyimagenet", 200}};
    auto it = counts.find(name);
    if (it == counts.end()) throw ValidationError("unknown dataset '" + name + "'");
    return it->second;
}

namespace {

std::vector<char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// CIFAR binary record: label byte(s) followed by 3072 bytes of CHW 32x32 RGB.
void append_cifar_records(LabeledDataset& ds, const fs::path& path, int label_bytes, int label_offset) {
    constexpr int kImage = 3 * 32 * 32;
    const int record = label_bytes + kImage;
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % static_cast<std::size_t>(record) != 0)
        throw RuntimeError("corrupt CIFAR file '" + path.string() + "': size " + std::to_string(bytes.size()) +
                           " is not a multiple of the " + std::to_string(record) + "-byte record");
    const std::size_t n = bytes.size() / static_cast<std::size_t>(record);
    for (std::size_t r = 0; r < n; ++r) {
        const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data()) + r * static_cast<std::size_t>(record);
        const int label = rec[label_offset];
        if (label >= ds.class_count)
            throw RuntimeError("corrupt CIFAR file '" + path.string() + "': label " + std::to_string(label) +
                               " out of range at record " + std::to_string(r));
        ds.labels.push_back(label);
        const std::uint8_t* img = rec + label_bytes;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                for (int c = 0; c < 3; ++c) ds.pixels.push_back(img[(c * 32 + y) * 32 + x]);
    }
}

fs::path first_existing(const fs::path& root, std::initializer_list<const char*> subdirs) {
    for (const char* sub : subdirs) {
        if (fs::exists(root / sub)) return root / sub;
    }
    return root;
}

LabeledDataset empty_cifar(const std::string& name, int classes) {
    LabeledDataset ds;
    ds.name = name;
    ds.shape = {3, 32, 32};
    ds.class_count = classes;
    return ds;
}

}  // namespace

DatasetSplits load_cifar10(const fs::path& root) {
    const fs::path dir = first_existing(root, {"cifar-10-batches-bin"});
    DatasetSplits out{empty_cifar("cifar10", 10), empty_cifar("cifar10", 10)};
    for (int b = 1; b <= 5; ++b)
        append_cifar_records(out.train, dir / ("data_batch_" + std::to_string(b) + ".bin"), 1, 0);
    append_cifar_records(out.test, dir / "test_batch.bin", 1, 0);
    return out;
}

DatasetSplits load_cifar100(const fs::path& root) {
    const fs::path dir = first_existing(root, {"cifar-100-binary"});
    DatasetSplits out{empty_cifar("cifar100", 100), empty_cifar("cifar100", 100)};
    // Records carry (coarse, fine) labels; the fine label is the class.
    append_cifar_records(out.train, dir / "train.bin", 2, 1);
    append_cifar_records(out.test, dir / "test.bin", 2, 1);
    return out;
}

DatasetSplits load_dataset(const std::string& name, const fs::path& root, const SyntheticConfig& synthetic) {
    DatasetSplits out;
    if (name == "synthetic-gaussians") {
        out = make_synthetic_gaussians(synthetic);
    } else if (name == "cifar10") {
        out = load_cifar10(root);
    } else if (name == "cifar100") {
        out = load_cifar100(root);
    } else if (name == "tinyimagenet") {
        out = load_tinyimagenet(root);
    } else {
        std::string known;
        for (const auto& n : dataset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ValidationError("unknown dataset '" + name + "' (known: " + known + ")");
    }
    out.train.validate();
    out.test.validate();
    return out;
}

ImageBatch to_batch(const LabeledDataset& ds, const std::vector<int>& indices) {
    const ImageShape s = ds.shape;
    ImageBatch batch{Mat(static_cast<Eigen::Index>(indices.size()), s.size()), s};
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::uint8_t* img = ds.image(indices[k]);
        auto row = batch.data.row(static_cast<Eigen::Index>(k));
        for (int c = 0; c < s.channels; ++c)
            for (int y = 0; y < s.height; ++y)
                for (int x = 0; x < s.width; ++x)
                    row((c * s.height + y) * s.width + x) = img[(y * s.width + x) * s.channels + c] / 255.0;
    }
    return batch;
}

}  // namespace cromo::data
