#include <limits>

#include "changebind/ops.hpp"
#include "gemm.hpp"
#include "kernel_util.hpp"

namespace changebind {

using detail::dispatch;
using detail::grad_ptr;
using detail::TypeTag;
using detail::vec;

namespace {

struct Geometry {
    std::int64_t channels;
    std::int64_t height;
    std::int64_t width;
    std::int64_t kh;
    std::int64_t kw;
    std::int64_t stride;
    std::int64_t pad;
    std::int64_t out_h;
    std::int64_t out_w;

    std::int64_t col_rows() const { return channels * kh * kw; }
    std::int64_t col_cols() const { return out_h * out_w; }
    bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <class T>
void im2col(const Geometry& g, const T* image, T* col) {
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (std::int64_t ki = 0; ki < g.kh; ++ki) {
            for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
                for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
                    const std::int64_t ih = oh * g.stride - g.pad + ki;
                    T* dst = row + oh * g.out_w;
                    if (ih < 0 || ih >= g.height) {
                        std::fill_n(dst, g.out_w, T(0));
                        continue;
                    }
                    const T* src = image + (c * g.height + ih) * g.width;
                    for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
                        const std::int64_t iw = ow * g.stride - g.pad + kj;
                        dst[ow] = (iw < 0 || iw >= g.width) ? T(0) : src[iw];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters columns back onto the image, accumulating.
template <class T>
void col2im(const Geometry& g, const T* col, T* image) {
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (std::int64_t ki = 0; ki < g.kh; ++ki) {
            for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
                for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
                    const std::int64_t ih = oh * g.stride - g.pad + ki;
                    if (ih < 0 || ih >= g.height) {
                        continue;
                    }
                    const T* src = row + oh * g.out_w;
                    T* dst = image + (c * g.height + ih) * g.width;
                    for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
                        const std::int64_t iw = ow * g.stride - g.pad + kj;
                        if (iw >= 0 && iw < g.width) {
                            dst[iw] += src[ow];
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void add_channel_bias(const T* bias, std::int64_t channels, std::int64_t plane, T* out) {
    for (std::int64_t c = 0; c < channels; ++c) {
        for (std::int64_t i = 0; i < plane; ++i) {
            out[c * plane + i] += bias[c];
        }
    }
}

template <class T>
void accumulate_bias_grad(const T* grad, std::int64_t channels, std::int64_t plane, T* dbias) {
    for (std::int64_t c = 0; c < channels; ++c) {
        T acc = 0;
        for (std::int64_t i = 0; i < plane; ++i) {
            acc += grad[c * plane + i];
        }
        dbias[c] += acc;
    }
}

void check_bias(const ConvParams& p, std::int64_t channels, const char* op) {
    if (p.bias.defined() && (p.bias.rank() != 1 || p.bias.dim(0) != channels)) {
        throw ShapeError(fmt::format("{}: bias shape {} does not match {} output channels", op,
                                     shape_string(p.bias.shape()), channels));
    }
    if (p.bias.defined()) {
        detail::require_same_dtype(p.kernel, p.bias, op);
    }
}

} // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
    detail::require_rank(x, 4, "conv2d", "input");
    detail::require_rank(p.kernel, 4, "conv2d", "kernel");
    detail::require_same_dtype(x, p.kernel, "conv2d");
    if (p.stride < 1 || p.padding < 0) {
        throw ConfigError(fmt::format("conv2d: invalid stride {} / padding {}", p.stride, p.padding));
    }
    const auto batch = x.dim(0);
    const auto out_ch = p.kernel.dim(0);
    if (p.kernel.dim(1) != x.dim(1)) {
        throw ShapeError(fmt::format("conv2d: input has {} channels on axis 1, kernel expects {}", x.dim(1),
                                     p.kernel.dim(1)),
                         1);
    }
    check_bias(p, out_ch, "conv2d");
    Geometry g{x.dim(1), x.dim(2), x.dim(3), p.kernel.dim(2), p.kernel.dim(3), p.stride, p.padding, 0, 0};
    for (int axis : {2, 3}) {
        const auto extent = (axis == 2 ? g.height : g.width) + 2 * g.pad;
        const auto k = axis == 2 ? g.kh : g.kw;
        if (extent < k) {
            throw ShapeError(fmt::format("conv2d: padded extent {} on axis {} is smaller than kernel {}",
                                         extent, axis, k),
                             axis);
        }
    }
    g.out_h = (g.height + 2 * g.pad - g.kh) / g.stride + 1;
    g.out_w = (g.width + 2 * g.pad - g.kw) / g.stride + 1;

    std::vector<Tensor> inputs{x, p.kernel};
    const bool has_bias = p.bias.defined();
    if (has_bias) {
        inputs.push_back(p.bias);
    }
    const Tensor kernel = p.kernel;
    return dispatch(x.dtype(), [&]<class T>(TypeTag<T>) {
        const auto vx = x.data<T>();
        const auto vw = kernel.data<T>();
        const auto in_plane = g.channels * g.height * g.width;
        const auto out_plane = out_ch * g.col_cols();
        std::vector<T> out(static_cast<std::size_t>(batch * out_plane));
        std::vector<T> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
        for (std::int64_t b = 0; b < batch; ++b) {
            const T* cols = vx.data() + b * in_plane;
            if (!g.is_pointwise()) {
                im2col(g, cols, col.data());
                cols = col.data();
            }
            detail::gemm<T>(false, false, out_ch, g.col_cols(), g.col_rows(), vw.data(), cols,
                            out.data() + b * out_plane, false);
            if (has_bias) {
                add_channel_bias(p.bias.data<T>().data(), out_ch, g.col_cols(), out.data() + b * out_plane);
            }
        }
        return Tensor::make_result({batch, out_ch, g.out_h, g.out_w}, std::move(out), "conv2d", inputs,
            [x, kernel, g, batch, out_ch](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& gy = vec<T>(gout);
                const auto vx = x.data<T>();
                const auto vw = kernel.data<T>();
                T* dx = grad_ptr<T>(gin, 0);
                T* dw = grad_ptr<T>(gin, 1);
                T* db = gin.size() > 2 ? grad_ptr<T>(gin, 2) : nullptr;
                const auto in_plane = g.channels * g.height * g.width;
                const auto out_plane = out_ch * g.col_cols();
                std::vector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
                for (std::int64_t b = 0; b < batch; ++b) {
                    const T* gyb = gy.data() + b * out_plane;
                    if (dw) {
                        const T* cols = vx.data() + b * in_plane;
                        if (!g.is_pointwise()) {
                            im2col(g, cols, col.data());
                            cols = col.data();
                        }
                        detail::gemm<T>(false, true, out_ch, g.col_rows(), g.col_cols(), gyb, cols, dw, true);
                    }
                    if (dx) {
                        if (g.is_pointwise()) {
                            detail::gemm<T>(true, false, g.col_rows(), g.col_cols(), out_ch, vw.data(), gyb,
                                            dx + b * in_plane, true);
                        } else {
                            detail::gemm<T>(true, false, g.col_rows(), g.col_cols(), out_ch, vw.data(), gyb,
                                            col.data(), false);
                            col2im(g, col.data(), dx + b * in_plane);
                        }
                    }
                    if (db) {
                        accumulate_bias_grad(gyb, out_ch, g.col_cols(), db);
                    }
                }
            });
    });
}

Tensor transpose_conv2d(const Tensor& x, const ConvParams& p) {
    detail::require_rank(x, 4, "transpose_conv2d", "input");
    detail::require_rank(p.kernel, 4, "transpose_conv2d", "kernel");
    detail::require_same_dtype(x, p.kernel, "transpose_conv2d");
    const auto k = p.kernel.dim(2);
    if (p.stride != 2 || p.kernel.dim(3) != k || k - 2 * p.padding != 2 || p.padding < 0) {
        throw ConfigError(fmt::format(
            "transpose_conv2d: stride {}, kernel {}x{}, padding {} does not double the input extent",
            p.stride, p.kernel.dim(2), p.kernel.dim(3), p.padding));
    }
    if (p.kernel.dim(0) != x.dim(1)) {
        throw ShapeError(fmt::format("transpose_conv2d: input has {} channels on axis 1, kernel expects {}",
                                     x.dim(1), p.kernel.dim(0)),
                         1);
    }
    const auto batch = x.dim(0);
    const auto in_ch = x.dim(1);
    const auto out_ch = p.kernel.dim(1);
    check_bias(p, out_ch, "transpose_conv2d");
    const auto in_h = x.dim(2);
    const auto in_w = x.dim(3);
    // Geometry of the equivalent forward convolution on the output image.
    const Geometry g{out_ch, 2 * in_h, 2 * in_w, k, k, 2, p.padding, in_h, in_w};

    std::vector<Tensor> inputs{x, p.kernel};
    const bool has_bias = p.bias.defined();
    if (has_bias) {
        inputs.push_back(p.bias);
    }
    const Tensor kernel = p.kernel;
    return dispatch(x.dtype(), [&]<class T>(TypeTag<T>) {
        const auto vx = x.data<T>();
        const auto vw = kernel.data<T>();
        const auto in_plane = in_ch * in_h * in_w;
        const auto out_plane = out_ch * g.height * g.width;
        std::vector<T> out(static_cast<std::size_t>(batch * out_plane), T(0));
        std::vector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
        for (std::int64_t b = 0; b < batch; ++b) {
            detail::gemm<T>(true, false, g.col_rows(), g.col_cols(), in_ch, vw.data(), vx.data() + b * in_plane,
                            col.data(), false);
            col2im(g, col.data(), out.data() + b * out_plane);
            if (has_bias) {
                add_channel_bias(p.bias.data<T>().data(), out_ch, g.height * g.width, out.data() + b * out_plane);
            }
        }
        return Tensor::make_result({batch, out_ch, g.height, g.width}, std::move(out), "transpose_conv2d",
            inputs,
            [x, kernel, g, batch, in_ch](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& gy = vec<T>(gout);
                const auto vx = x.data<T>();
                const auto vw = kernel.data<T>();
                T* dx = grad_ptr<T>(gin, 0);
                T* dw = grad_ptr<T>(gin, 1);
                T* db = gin.size() > 2 ? grad_ptr<T>(gin, 2) : nullptr;
                const auto in_plane = in_ch * g.col_cols();
                const auto out_plane = g.channels * g.height * g.width;
                std::vector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
                for (std::int64_t b = 0; b < batch; ++b) {
                    const T* gyb = gy.data() + b * out_plane;
                    im2col(g, gyb, col.data());
                    if (dx) {
                        detail::gemm<T>(false, false, in_ch, g.col_cols(), g.col_rows(), vw.data(), col.data(),
                                        dx + b * in_plane, true);
                    }
                    if (dw) {
                        detail::gemm<T>(false, true, in_ch, g.col_rows(), g.col_cols(), vx.data() + b * in_plane,
                                        col.data(), dw, true);
                    }
                    if (db) {
                        accumulate_bias_grad(gyb, g.channels, g.height * g.width, db);
                    }
                }
            });
    });
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride) {
    detail::require_rank(x, 4, "max_pool2d", "input");
    if (kernel < 1 || stride < 1) {
        throw ConfigError("max_pool2d: kernel and stride must be positive");
    }
    const auto batch = x.dim(0);
    const auto channels = x.dim(1);
    const auto h = x.dim(2);
    const auto w = x.dim(3);
    if (h < kernel || w < kernel) {
        throw ShapeError(fmt::format("max_pool2d: input {}x{} smaller than window {}", h, w, kernel),
                         h < kernel ? 2 : 3);
    }
    const auto oh = (h - kernel) / stride + 1;
    const auto ow = (w - kernel) / stride + 1;
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(batch * channels * oh * ow));
    return dispatch(x.dtype(), [&]<class T>(TypeTag<T>) {
        const auto vx = x.data<T>();
        std::vector<T> out(argmax->size());
        std::size_t o = 0;
        for (std::int64_t plane = 0; plane < batch * channels; ++plane) {
            const std::int64_t base = plane * h * w;
            for (std::int64_t i = 0; i < oh; ++i) {
                for (std::int64_t j = 0; j < ow; ++j, ++o) {
                    std::int64_t best = base + i * stride * w + j * stride;
                    for (std::int64_t di = 0; di < kernel; ++di) {
                        for (std::int64_t dj = 0; dj < kernel; ++dj) {
                            const auto idx = base + (i * stride + di) * w + j * stride + dj;
                            if (vx[idx] > vx[best]) {
                                best = idx;
                            }
                        }
                    }
                    (*argmax)[o] = best;
                    out[o] = vx[best];
                }
            }
        }
        return Tensor::make_result({batch, channels, oh, ow}, std::move(out), "max_pool2d", {x},
            [argmax](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                T* d = grad_ptr<T>(gin, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[(*argmax)[i]] += g[i];
                }
            });
    });
}

} // namespace changebind
