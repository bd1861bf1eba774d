#pragma once

#include "cromo/rng.hpp"
#include "cromo/tensor.hpp"
#include "oracle/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace testing {

inline cromo::Mat random_mat(int rows, int cols, cromo::Rng& rng, double scale = 1.0) {
    cromo::Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, scale);
    return m;
}

inline oracle::Grid to_grid(const cromo::Mat& m) {
    oracle::Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return g;
}

inline std::vector<double> to_vec(const cromo::Vec& v) { return {v.data(), v.data() + v.size()}; }

// Central differences of f with respect to every entry of x.
inline cromo::Mat numeric_grad(const std::function<double(const cromo::Mat&)>& f, const cromo::Mat& x,
                               double h = 1e-6) {
    cromo::Mat g(x.rows(), x.cols());
    cromo::Mat xp = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double keep = xp(i, j);
            xp(i, j) = keep + h;
            const double up = f(xp);
            xp(i, j) = keep - h;
            const double down = f(xp);
            xp(i, j) = keep;
            g(i, j) = (up - down) / (2 * h);
        }
    return g;
}

// ||a - b|| / max(||a||, ||b||, floor).
inline double rel_error(const cromo::Mat& a, const cromo::Mat& b, double floor = 1e-8) {
    return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

}  // namespace testing
