#pragma once

#include <cstdint>
#include <random>

#include "changebind/tensor.hpp"

namespace changebind {

/// Seedable generator. Draws are derived from raw mt19937_64 output rather
/// than std distributions so sequences are identical across standard
/// libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

// Initialization constants (none are given by the model description):
//   conv kernels   U(-b, b), b = sqrt(6 / fan_in)
//   attention and dense projections   U(-b, b), b = sqrt(6 / (fan_in + fan_out))
//   biases 0, normalization scale 1 and shift 0.

Tensor uniform_tensor(Shape shape, double bound, Rng& rng);
Tensor fan_in_uniform(Shape shape, std::int64_t fan_in, Rng& rng);
Tensor fan_avg_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

} // namespace changebind
