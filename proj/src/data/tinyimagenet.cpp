#include "cromo/data/dataset.hpp"

#include "cromo/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace cromo::data {

namespace fs = std::filesystem;

namespace {

void append_image(LabeledDataset& ds, const fs::path& file, int label) {
    cv::Mat img = cv::imread(file.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw RuntimeError("tinyimagenet: unreadable image '" + file.string() + "'");
    if (img.rows != 64 || img.cols != 64) cv::resize(img, img, cv::Size(64, 64));
    cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
    for (int y = 0; y < 64; ++y) {
        const auto* row = img.ptr<std::uint8_t>(y);
        ds.pixels.insert(ds.pixels.end(), row, row + 64 * 3);
    }
    ds.labels.push_back(label);
}

}  // namespace

// Standard layout: wnids.txt, train/<wnid>/images/*.JPEG,
// val/images/*.JPEG with val/val_annotations.txt. The public test split has
// no labels, so the validation split serves as the test set.
DatasetSplits load_tinyimagenet(const fs::path& root) {
    fs::path dir = fs::exists(root / "tiny-imagenet-200") ? root / "tiny-imagenet-200" : root;
    std::ifstream wn(dir / "wnids.txt");
    if (!wn) throw RuntimeError("tinyimagenet: missing '" + (dir / "wnids.txt").string() + "'");
    std::vector<std::string> wnids;
    for (std::string line; std::getline(wn, line);)
        if (!line.empty()) wnids.push_back(line);
    if (wnids.size() != 200)
        throw RuntimeError("tinyimagenet: expected 200 wnids, found " + std::to_string(wnids.size()));
    std::map<std::string, int> class_of;
    for (std::size_t i = 0; i < wnids.size(); ++i) class_of[wnids[i]] = static_cast<int>(i);

    DatasetSplits out;
    for (auto* ds : {&out.train, &out.test}) {
        ds->name = "tinyimagenet";
        ds->shape = {3, 64, 64};
        ds->class_count = 200;
    }
    for (std::size_t c = 0; c < wnids.size(); ++c) {
        const fs::path images = dir / "train" / wnids[c] / "images";
        if (!fs::is_directory(images)) throw RuntimeError("tinyimagenet: missing '" + images.string() + "'");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(images))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) append_image(out.train, f, static_cast<int>(c));
    }
    std::ifstream ann(dir / "val" / "val_annotations.txt");
    if (!ann) throw RuntimeError("tinyimagenet: missing val/val_annotations.txt");
    std::vector<std::pair<std::string, int>> val;
    for (std::string line; std::getline(ann, line);) {
        std::istringstream ls(line);
        std::string file, wnid;
        ls >> file >> wnid;
        if (file.empty()) continue;
        auto it = class_of.find(wnid);
        if (it == class_of.end()) throw RuntimeError("tinyimagenet: unknown wnid '" + wnid + "' in annotations");
        val.emplace_back(file, it->second);
    }
    std::sort(val.begin(), val.end());
    for (const auto& [file, label] : val) append_image(out.test, dir / "val" / "images" / file, label);
    return out;
}

}  // namespace cromo::data
