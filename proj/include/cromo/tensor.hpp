#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cromo {

// Row-major so that one row is one sample laid out contiguously (C×H×W).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

struct ImageShape {
    int channels = 1;
    int height = 1;
    int width = 1;

    [[nodiscard]] int size() const { return channels * height * width; }
    bool operator==(const ImageShape&) const = default;
    [[nodiscard]] std::string to_string() const;
};

// A batch of images: rows are samples in CHW order.
struct ImageBatch {
    Mat data;
    ImageShape shape;

    [[nodiscard]] int batch_size() const { return static_cast<int>(data.rows()); }
};

// Concatenates rows of equally-shaped batches.
ImageBatch concat_rows(const ImageBatch& a, const ImageBatch& b);
Mat concat_rows(const Mat& a, const Mat& b);

// Rows [begin, begin+count).
Mat row_slice(const Mat& m, int begin, int count);

// Gathers rows by index.
Mat gather_rows(const Mat& m, const std::vector<int>& rows);

bool all_finite(const Mat& m);

}  // namespace cromo
