#include "changebind/init.hpp"

#include <cmath>
#include <numbers>

namespace changebind {

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t Rng::integer(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t.set(i, rng.uniform(-bound, bound));
    }
    return t;
}

Tensor fan_in_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
    return uniform_tensor(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
}

Tensor fan_avg_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    return uniform_tensor(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

} // namespace changebind
