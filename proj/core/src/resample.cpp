#include <cmath>

#include "changebind/ops.hpp"
#include "kernel_util.hpp"

namespace changebind {

using detail::dispatch;
using detail::grad_ptr;
using detail::TypeTag;
using detail::vec;

namespace {

struct Tap {
    std::int64_t lo;
    std::int64_t hi;
    double frac;
};

std::vector<Tap> half_pixel_taps(std::int64_t in, std::int64_t out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t i = 0; i < out; ++i) {
        const double src = std::max(0.0, (static_cast<double>(i) + 0.5) * ratio - 0.5);
        const auto lo = std::min(static_cast<std::int64_t>(src), in - 1);
        taps[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return taps;
}

} // namespace

Tensor bilinear_upsample(const Tensor& x, std::int64_t target_h, std::int64_t target_w) {
    detail::require_rank(x, 4, "bilinear_upsample", "input");
    if (target_h < 1 || target_w < 1) {
        throw ShapeError(fmt::format("bilinear_upsample: invalid target {}x{}", target_h, target_w),
                         target_h < 1 ? 2 : 3);
    }
    const auto planes = x.dim(0) * x.dim(1);
    const auto in_h = x.dim(2);
    const auto in_w = x.dim(3);
    auto rows = std::make_shared<std::vector<Tap>>(half_pixel_taps(in_h, target_h));
    auto cols = std::make_shared<std::vector<Tap>>(half_pixel_taps(in_w, target_w));
    return dispatch(x.dtype(), [&]<class T>(TypeTag<T>) {
        const auto vx = x.data<T>();
        std::vector<T> out(static_cast<std::size_t>(planes * target_h * target_w));
        for (std::int64_t p = 0; p < planes; ++p) {
            const T* src = vx.data() + p * in_h * in_w;
            T* dst = out.data() + p * target_h * target_w;
            for (std::int64_t i = 0; i < target_h; ++i) {
                const auto& r = (*rows)[i];
                const T fy = static_cast<T>(r.frac);
                for (std::int64_t j = 0; j < target_w; ++j) {
                    const auto& c = (*cols)[j];
                    const T fx = static_cast<T>(c.frac);
                    const T top = (T(1) - fx) * src[r.lo * in_w + c.lo] + fx * src[r.lo * in_w + c.hi];
                    const T bottom = (T(1) - fx) * src[r.hi * in_w + c.lo] + fx * src[r.hi * in_w + c.hi];
                    dst[i * target_w + j] = (T(1) - fy) * top + fy * bottom;
                }
            }
        }
        return Tensor::make_result({x.dim(0), x.dim(1), target_h, target_w}, std::move(out), "bilinear_upsample",
            {x},
            [rows, cols, planes, in_h, in_w, target_h, target_w](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                T* d = grad_ptr<T>(gin, 0);
                for (std::int64_t p = 0; p < planes; ++p) {
                    const T* src = g.data() + p * target_h * target_w;
                    T* dst = d + p * in_h * in_w;
                    for (std::int64_t i = 0; i < target_h; ++i) {
                        const auto& r = (*rows)[i];
                        const T fy = static_cast<T>(r.frac);
                        for (std::int64_t j = 0; j < target_w; ++j) {
                            const auto& c = (*cols)[j];
                            const T fx = static_cast<T>(c.frac);
                            const T v = src[i * target_w + j];
                            dst[r.lo * in_w + c.lo] += (T(1) - fy) * (T(1) - fx) * v;
                            dst[r.lo * in_w + c.hi] += (T(1) - fy) * fx * v;
                            dst[r.hi * in_w + c.lo] += fy * (T(1) - fx) * v;
                            dst[r.hi * in_w + c.hi] += fy * fx * v;
                        }
                    }
                }
            });
    });
}

} // namespace changebind
