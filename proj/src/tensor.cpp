#include "cromo/tensor.hpp"

#include "cromo/error.hpp"

namespace cromo {

std::string ImageShape::to_string() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Mat concat_rows(const Mat& a, const Mat& b) {
    if (a.rows() == 0) return b;
    if (b.rows() == 0) return a;
    require(a.cols() == b.cols(), "concat_rows: column mismatch");
    Mat out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

ImageBatch concat_rows(const ImageBatch& a, const ImageBatch& b) {
    require(a.shape == b.shape, "concat_rows: image shape mismatch " + a.shape.to_string() + " vs " +
                                    b.shape.to_string());
    return {concat_rows(a.data, b.data), a.shape};
}

Mat row_slice(const Mat& m, int begin, int count) { return m.middleRows(begin, count); }

Mat gather_rows(const Mat& m, const std::vector<int>& rows) {
    Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace cromo
