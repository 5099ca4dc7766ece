// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/common.hpp"

#include <cmath>
#include <random>

namespace taste {

// splitmix64 step, used to derive independent stream seeds from (seed, tag).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Deterministic RNG. All sampling goes through explicit helpers so the
// bit stream is pinned by mt19937_64 alone, not by libstdc++ distribution
// internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        require_arg(n > 0, "uniform_int: n must be positive");
        // rejection sampling to avoid modulo bias
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    // Box-Muller; two uniforms per call, no cached spare.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Mat gaussian_mat(int rows, int cols, double scale) {
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                m(i, j) = scale * gaussian();
        return m;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace taste
