#pragma once

#include <cstdint>
#include <functional>

#include "changebind/tensor.hpp"

namespace changebind {

struct GradCheckOptions {
    double eps = 1e-4;
    /// Number of elements to probe; 0 probes every element. Probes are drawn
    /// without replacement from a generator seeded with `seed`.
    std::int64_t max_probes = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
    std::int64_t probes = 0;
};

/// Compares the reverse-mode gradient of a scalar function against central
/// differences. The error per element is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|); the maximum over
/// probed elements is returned. `x` must be 64-bit.
GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  const GradCheckOptions& options = {});

/// Same check for a leaf that `loss` closes over (typically a parameter).
/// The leaf is perturbed in place and restored before returning.
GradCheckResult finite_diff_check_leaf(const std::function<Tensor()>& loss, Tensor leaf,
                                       const GradCheckOptions& options = {});

} // namespace changebind
