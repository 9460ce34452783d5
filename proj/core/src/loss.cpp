#include <cmath>

#include "changebind/ops.hpp"
#include "kernel_util.hpp"

namespace changebind {

using detail::dispatch;
using detail::grad_ptr;
using detail::TypeTag;
using detail::vec;

Tensor cross_entropy_loss(const Tensor& logits, const Tensor& labels) {
    detail::require_rank(logits, 4, "cross_entropy_loss", "logits");
    detail::require_rank(labels, 3, "cross_entropy_loss", "labels");
    const auto batch = logits.dim(0);
    const auto classes = logits.dim(1);
    const auto plane = logits.dim(2) * logits.dim(3);
    for (int axis : {0, 2, 3}) {
        if (labels.dim(axis == 0 ? 0 : axis - 1) != logits.dim(axis)) {
            throw ShapeError(fmt::format("cross_entropy_loss: labels {} do not match logits {}",
                                         shape_string(labels.shape()), shape_string(logits.shape())),
                             axis);
        }
    }
    const auto label_values = labels.to_vector();
    auto target = std::make_shared<std::vector<std::int64_t>>(label_values.size());
    for (std::size_t i = 0; i < label_values.size(); ++i) {
        const double l = label_values[i];
        if (!(l >= 0.0) || l >= static_cast<double>(classes) || l != std::floor(l)) {
            throw DataError(fmt::format("cross_entropy_loss: label {} at pixel {} is not a class in [0, {})", l,
                                        i, classes));
        }
        (*target)[i] = static_cast<std::int64_t>(l);
    }
    const double count = static_cast<double>(batch * plane);

    return dispatch(logits.dtype(), [&]<class T>(TypeTag<T>) {
        const auto vx = logits.data<T>();
        auto probs = std::make_shared<std::vector<double>>(vx.size());
        double total = 0.0;
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t i = 0; i < plane; ++i) {
                const std::int64_t base = b * classes * plane + i;
                double peak = vx[base];
                for (std::int64_t c = 1; c < classes; ++c) {
                    peak = std::max(peak, static_cast<double>(vx[base + c * plane]));
                }
                double denom = 0.0;
                for (std::int64_t c = 0; c < classes; ++c) {
                    denom += std::exp(vx[base + c * plane] - peak);
                }
                const double log_denom = std::log(denom);
                for (std::int64_t c = 0; c < classes; ++c) {
                    (*probs)[base + c * plane] = std::exp(vx[base + c * plane] - peak - log_denom);
                }
                const auto t = (*target)[b * plane + i];
                total += peak + log_denom - vx[base + t * plane];
            }
        }
        std::vector<T> out{static_cast<T>(total / count)};
        return Tensor::make_result({1}, std::move(out), "cross_entropy_loss", {logits},
            [probs, target, batch, classes, plane, count](const Buffer& gout, std::span<Buffer* const> gin) {
                const double g = vec<T>(gout)[0] / count;
                T* d = grad_ptr<T>(gin, 0);
                for (std::int64_t b = 0; b < batch; ++b) {
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const std::int64_t base = b * classes * plane + i;
                        const auto t = (*target)[b * plane + i];
                        for (std::int64_t c = 0; c < classes; ++c) {
                            const double onehot = c == t ? 1.0 : 0.0;
                            d[base + c * plane] += static_cast<T>(g * ((*probs)[base + c * plane] - onehot));
                        }
                    }
                }
            });
    });
}

} // namespace changebind
