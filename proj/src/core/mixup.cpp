#include "cromo/core/mixup.hpp"

#include "cromo/error.hpp"

#include <algorithm>
#include <cmath>

namespace cromo::core {

Vec sample_lambda(double alpha, int n, Rng& rng) {
    require(alpha > 0, "mixup: alpha must be > 0");
    require(n >= 1, "mixup: need at least one lambda");
    Vec out(n);
    for (int i = 0; i < n; ++i) out(i) = rng.beta(alpha, alpha);
    return out;
}

ImageBatch mix(const ImageBatch& x_t, const ImageBatch& x_buf, const Vec& lambda) {
    require(x_t.shape == x_buf.shape && x_t.data.rows() == x_buf.data.rows() && x_t.data.cols() == x_buf.data.cols(),
            "mixup: source batches differ in shape");
    require(lambda.size() == x_t.data.rows(), "mixup: one lambda per sample required");
    ImageBatch out{Mat(x_t.data.rows(), x_t.data.cols()), x_t.shape};
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        const double l = lambda(i);
        require(l >= 0 && l <= 1, "mixup: lambda out of [0,1]");
        for (Eigen::Index k = 0; k < x_t.data.cols(); ++k) {
            const double a = x_t.data(i, k), b = x_buf.data(i, k);
            const double v = l * a + (1 - l) * b;
            out.data(i, k) = std::clamp(v, std::min(a, b), std::max(a, b));
        }
    }
    return out;
}

namespace {

MixBatch assemble(const Views& current, const Views& partners_src, std::vector<int> pairing, Vec lambda) {
    MixBatch mb;
    mb.partner1 = {gather_rows(partners_src.first.data, pairing), partners_src.first.shape};
    mb.partner2 = {gather_rows(partners_src.second.data, pairing), partners_src.second.shape};
    mb.x_mix1 = mix(current.first, mb.partner1, lambda);
    mb.x_mix2 = mix(current.second, mb.partner2, lambda);
    mb.lambda = std::move(lambda);
    mb.pairing = std::move(pairing);
    return mb;
}

void check_views(const Views& v, const char* what) {
    require(v.first.batch_size() > 0, std::string("mixup: empty ") + what + " batch");
    require(v.first.shape == v.second.shape && v.first.batch_size() == v.second.batch_size(),
            std::string("mixup: the two ") + what + " views differ in shape");
}

}  // namespace

MixBatch build_mix_batch(const Views& current, const Views& buffer, double alpha, Rng& rng) {
    if (buffer.first.batch_size() == 0)
        throw ValidationError("mixup: empty buffer batch (cross-task mixup needs a previous task)");
    check_views(current, "current");
    check_views(buffer, "buffer");
    require(current.first.shape == buffer.first.shape, "mixup: current and buffer images differ in shape");
    const int b = current.first.batch_size();
    std::vector<int> pairing(b);
    for (auto& j : pairing) j = rng.index(buffer.first.batch_size());
    Vec lambda = sample_lambda(alpha, b, rng);
    return assemble(current, buffer, std::move(pairing), std::move(lambda));
}

MixBatch build_within_task_mix(const Views& current, double alpha, Rng& rng) {
    check_views(current, "current");
    const int b = current.first.batch_size();
    std::vector<int> pairing(b);
    for (auto& j : pairing) j = rng.index(b);
    Vec lambda = sample_lambda(alpha, b, rng);
    return assemble(current, current, std::move(pairing), std::move(lambda));
}

}  // namespace cromo::core
