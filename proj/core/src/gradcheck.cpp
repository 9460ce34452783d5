#include "changebind/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kernel_util.hpp"

namespace changebind {

namespace {

std::vector<std::int64_t> probe_indices(std::int64_t n, const GradCheckOptions& options) {
    std::vector<std::int64_t> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    if (options.max_probes <= 0 || options.max_probes >= n) {
        return all;
    }
    std::mt19937_64 rng(options.seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(options.max_probes));
    std::sort(all.begin(), all.end());
    return all;
}

} // namespace

GradCheckResult finite_diff_check_leaf(const std::function<Tensor()>& loss, Tensor leaf,
                                       const GradCheckOptions& options) {
    if (leaf.dtype() != DType::f64) {
        throw UsageError("finite_diff_check needs 64-bit tensors (use DTypeScope(DType::f64))");
    }
    if (!leaf.is_leaf()) {
        throw UsageError("finite_diff_check_leaf: tensor is not a leaf");
    }
    const bool had_flag = leaf.requires_grad();
    leaf.requires_grad_(true);

    const Tensor y = loss();
    if (y.numel() != 1) {
        throw UsageError("finite_diff_check: function must return a scalar");
    }
    reset_graph_grads(y);
    y.backward();
    const auto analytic = leaf.grad_vector();
    reset_graph_grads(y);

    GradCheckResult result;
    NoGradGuard no_grad;
    auto values = leaf.mutable_data<double>();
    for (auto idx : probe_indices(leaf.numel(), options)) {
        const double saved = values[idx];
        values[idx] = saved + options.eps;
        const double plus = loss().item();
        values[idx] = saved - options.eps;
        const double minus = loss().item();
        values[idx] = saved;
        const double numeric = (plus - minus) / (2.0 * options.eps);
        const double a = analytic[idx];
        const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        if (err > result.max_rel_error || result.worst_index < 0) {
            result.max_rel_error = err;
            result.worst_index = idx;
            result.analytic = a;
            result.numeric = numeric;
        }
        ++result.probes;
    }
    leaf.requires_grad_(had_flag);
    return result;
}

GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  const GradCheckOptions& options) {
    Tensor probe = x.detach();
    return finite_diff_check_leaf([&] { return f(probe); }, probe, options);
}

} // namespace changebind
