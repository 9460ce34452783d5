#include <cmath>

#include "changebind/ops.hpp"
#include "kernel_util.hpp"

namespace changebind {

using detail::dispatch;
using detail::grad_ptr;
using detail::TypeTag;
using detail::vec;

// Statistics are taken per sample and per group, never across the batch, so
// a sample's output does not depend on what else is in the batch.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
    detail::require_rank(x, 4, "group_norm", "input");
    detail::require_same_dtype(x, gamma, "group_norm");
    detail::require_same_dtype(x, beta, "group_norm");
    const auto batch = x.dim(0);
    const auto channels = x.dim(1);
    if (groups < 1 || channels % groups != 0) {
        throw ConfigError(fmt::format("group_norm: {} channels not divisible into {} groups", channels, groups));
    }
    if (gamma.numel() != channels || beta.numel() != channels) {
        throw ShapeError(fmt::format("group_norm: affine parameters must have {} entries", channels), 1);
    }
    const auto plane = x.dim(2) * x.dim(3);
    const auto per_group = channels / groups;
    const auto group_size = per_group * plane;
    const auto n_stats = batch * groups;

    return dispatch(x.dtype(), [&]<class T>(TypeTag<T>) {
        const auto vx = x.data<T>();
        const auto vg = gamma.data<T>();
        const auto vb = beta.data<T>();
        auto normalized = std::make_shared<std::vector<T>>(vx.size());
        auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n_stats));
        std::vector<T> out(vx.size());
        for (std::int64_t s = 0; s < n_stats; ++s) {
            const std::int64_t base = s * group_size;
            double mu = 0.0;
            for (std::int64_t i = 0; i < group_size; ++i) {
                mu += vx[base + i];
            }
            mu /= static_cast<double>(group_size);
            double var = 0.0;
            for (std::int64_t i = 0; i < group_size; ++i) {
                const double dv = vx[base + i] - mu;
                var += dv * dv;
            }
            var /= static_cast<double>(group_size);
            const T rstd = static_cast<T>(1.0 / std::sqrt(var + eps));
            (*inv_std)[s] = rstd;
            const std::int64_t first_channel = (s % groups) * per_group;
            for (std::int64_t i = 0; i < group_size; ++i) {
                const auto c = first_channel + i / plane;
                const T xh = static_cast<T>(vx[base + i] - mu) * rstd;
                (*normalized)[base + i] = xh;
                out[base + i] = xh * vg[c] + vb[c];
            }
        }
        return Tensor::make_result(x.shape(), std::move(out), "group_norm", {x, gamma, beta},
            [gamma, normalized, inv_std, n_stats, groups, per_group, plane, group_size, channels](
                const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                const auto vg = gamma.data<T>();
                const auto& xh = *normalized;
                T* dx = grad_ptr<T>(gin, 0);
                T* dgamma = grad_ptr<T>(gin, 1);
                T* dbeta = grad_ptr<T>(gin, 2);
                if (dgamma || dbeta) {
                    std::vector<double> acc_g(static_cast<std::size_t>(channels), 0.0);
                    std::vector<double> acc_b(static_cast<std::size_t>(channels), 0.0);
                    for (std::int64_t s = 0; s < n_stats; ++s) {
                        const std::int64_t base = s * group_size;
                        const std::int64_t first_channel = (s % groups) * per_group;
                        for (std::int64_t i = 0; i < group_size; ++i) {
                            const auto c = first_channel + i / plane;
                            acc_g[c] += g[base + i] * xh[base + i];
                            acc_b[c] += g[base + i];
                        }
                    }
                    for (std::int64_t c = 0; c < channels; ++c) {
                        if (dgamma) {
                            dgamma[c] += static_cast<T>(acc_g[c]);
                        }
                        if (dbeta) {
                            dbeta[c] += static_cast<T>(acc_b[c]);
                        }
                    }
                }
                if (!dx) {
                    return;
                }
                const double inv_n = 1.0 / static_cast<double>(group_size);
                for (std::int64_t s = 0; s < n_stats; ++s) {
                    const std::int64_t base = s * group_size;
                    const std::int64_t first_channel = (s % groups) * per_group;
                    double sum_dxh = 0.0;
                    double sum_dxh_xh = 0.0;
                    for (std::int64_t i = 0; i < group_size; ++i) {
                        const double dxh = g[base + i] * vg[first_channel + i / plane];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[base + i];
                    }
                    const double rstd = (*inv_std)[s];
                    for (std::int64_t i = 0; i < group_size; ++i) {
                        const double dxh = g[base + i] * vg[first_channel + i / plane];
                        dx[base + i] += static_cast<T>(
                            rstd * (dxh - inv_n * sum_dxh - xh[base + i] * inv_n * sum_dxh_xh));
                    }
                }
            });
    });
}

} // namespace changebind
