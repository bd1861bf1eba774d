#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cromo {

// Seeded random stream. All stochastic components take one of these by
// reference so that runs are reproducible from (seed, stream id).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    // Independent child stream; derived deterministically from seed and id.
    static Rng derive(std::uint64_t seed, std::uint64_t stream_id);

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    // Uniform integer in [0, n).
    int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }
    bool bernoulli(double p) { return uniform() < p; }
    double beta(double a, double b);

    std::vector<int> permutation(int n);

    std::mt19937_64& engine() { return engine_; }

    // Text round trip of the engine state, for resumable runs.
    [[nodiscard]] std::string save_state() const;
    void load_state(const std::string& state);

private:
    std::mt19937_64 engine_;
};

// Stable 64-bit FNV-1a hash over bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

}  // namespace cromo
