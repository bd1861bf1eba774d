#pragma once

#include "cromo/rng.hpp"
#include "cromo/tensor.hpp"

#include <utility>
#include <vector>

namespace cromo::core {

using Views = std::pair<ImageBatch, ImageBatch>;

// Cross-task mixture of two augmented views. Pair i combines current
// sample i with buffer sample pairing[i] using weight lambda[i]; both views
// share lambda and pairing.
struct MixBatch {
    ImageBatch x_mix1, x_mix2;
    Vec lambda;
    std::vector<int> pairing;
    // Buffer views gathered by pairing (row i is the partner of current i).
    ImageBatch partner1, partner2;
};

// i.i.d. Beta(alpha, alpha) draws.
Vec sample_lambda(double alpha, int n, Rng& rng);

// lambda[i] * x_t[i] + (1 - lambda[i]) * x_buf[i], clamped to the interval
// spanned by the two sources.
ImageBatch mix(const ImageBatch& x_t, const ImageBatch& x_buf, const Vec& lambda);

// Draws pairing (uniform with replacement over buffer rows) and then one
// lambda per pair.
MixBatch build_mix_batch(const Views& current, const Views& buffer, double alpha, Rng& rng);

// Same construction with the partner drawn from the current batch itself.
MixBatch build_within_task_mix(const Views& current, double alpha, Rng& rng);

}  // namespace cromo::core
