#include "changebind/ops.hpp"

#include <cmath>
#include <numeric>

#include "gemm.hpp"
#include "kernel_util.hpp"

namespace changebind {

using detail::dispatch;
using detail::grad_ptr;
using detail::make_buffer;
using detail::TypeTag;
using detail::vec;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    detail::require_same_dtype(a, b, op);
    if (a.shape() != b.shape()) {
        int axis = -1;
        if (a.rank() == b.rank()) {
            for (int i = 0; i < a.rank(); ++i) {
                if (a.dim(i) != b.dim(i)) {
                    axis = i;
                    break;
                }
            }
        }
        throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, shape_string(a.shape()),
                                     shape_string(b.shape())),
                         axis);
    }
}

std::vector<std::int64_t> strides_of(const Shape& shape) {
    std::vector<std::int64_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        s[i] = s[i + 1] * shape[i + 1];
    }
    return s;
}

// Maps each output flat index of a permutation to its source flat index.
std::vector<std::int64_t> permutation_index(const Shape& in_shape, const std::vector<int>& order) {
    const auto in_strides = strides_of(in_shape);
    const std::size_t rank = in_shape.size();
    Shape out_shape(rank);
    std::vector<std::int64_t> src_stride(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[order[i]];
        src_stride[i] = in_strides[order[i]];
    }
    const auto n = shape_numel(in_shape);
    std::vector<std::int64_t> index(static_cast<std::size_t>(n));
    std::vector<std::int64_t> counter(rank, 0);
    std::int64_t src = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
        index[flat] = src;
        for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
            if (++counter[ax] < out_shape[ax]) {
                src += src_stride[ax];
                break;
            }
            src -= src_stride[ax] * (out_shape[ax] - 1);
            counter[ax] = 0;
        }
    }
    return index;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        const auto vb = b.data<T>();
        std::vector<T> out(va.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = va[i] + vb[i];
        }
        return Tensor::make_result(a.shape(), std::move(out), "add", {a, b},
            [](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                for (std::size_t k = 0; k < 2; ++k) {
                    if (T* d = grad_ptr<T>(gin, k)) {
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            d[i] += g[i];
                        }
                    }
                }
            });
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        const auto vb = b.data<T>();
        std::vector<T> out(va.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = va[i] - vb[i];
        }
        return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b},
            [](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                if (T* da = grad_ptr<T>(gin, 0)) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        da[i] += g[i];
                    }
                }
                if (T* db = grad_ptr<T>(gin, 1)) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        db[i] -= g[i];
                    }
                }
            });
    });
}

Tensor abs(const Tensor& a) {
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        std::vector<T> out(va.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = std::abs(va[i]);
        }
        return Tensor::make_result(a.shape(), std::move(out), "abs", {a},
            [a](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                const auto va = a.data<T>();
                T* d = grad_ptr<T>(gin, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (va[i] > T(0)) {
                        d[i] += g[i];
                    } else if (va[i] < T(0)) {
                        d[i] -= g[i];
                    }
                }
            });
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        const auto vb = b.data<T>();
        std::vector<T> out(va.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = va[i] * vb[i];
        }
        return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b},
            [a, b](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                const auto va = a.data<T>();
                const auto vb = b.data<T>();
                if (T* da = grad_ptr<T>(gin, 0)) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        da[i] += g[i] * vb[i];
                    }
                }
                if (T* db = grad_ptr<T>(gin, 1)) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        db[i] += g[i] * va[i];
                    }
                }
            });
    });
}

Tensor scale(const Tensor& a, double factor) {
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        const T f = static_cast<T>(factor);
        std::vector<T> out(va.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = va[i] * f;
        }
        return Tensor::make_result(a.shape(), std::move(out), "scale", {a},
            [f](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                T* d = grad_ptr<T>(gin, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] += g[i] * f;
                }
            });
    });
}

Tensor relu(const Tensor& a) {
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        std::vector<T> out(va.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = va[i] > T(0) ? va[i] : T(0);
        }
        return Tensor::make_result(a.shape(), std::move(out), "relu", {a},
            [a](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                const auto va = a.data<T>();
                T* d = grad_ptr<T>(gin, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (va[i] > T(0)) {
                        d[i] += g[i];
                    }
                }
            });
    });
}

Tensor sum(const Tensor& a) {
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        double acc = 0.0;
        for (auto v : va) {
            acc += v;
        }
        return Tensor::make_result({1}, std::vector<T>{static_cast<T>(acc)}, "sum", {a},
            [](const Buffer& gout, std::span<Buffer* const> gin) {
                const T g = vec<T>(gout)[0];
                for (auto& d : vec<T>(*gin[0])) {
                    d += g;
                }
            });
    });
}

Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError(fmt::format("reshape: cannot view {} as {}", shape_string(a.shape()),
                                     shape_string(shape)));
    }
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        return Tensor::make_result(std::move(shape), std::vector<T>(va.begin(), va.end()), "reshape", {a},
            [](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                auto& d = vec<T>(*gin[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] += g[i];
                }
            });
    });
}

Tensor permute(const Tensor& a, const std::vector<int>& order) {
    const int rank = a.rank();
    if (static_cast<int>(order.size()) != rank) {
        throw ShapeError(fmt::format("permute: order has {} axes, tensor has {}", order.size(), rank));
    }
    std::vector<bool> seen(rank, false);
    Shape out_shape(rank);
    for (int i = 0; i < rank; ++i) {
        const int ax = order[i];
        if (ax < 0 || ax >= rank || seen[ax]) {
            throw ShapeError("permute: order is not a permutation", i);
        }
        seen[ax] = true;
        out_shape[i] = a.dim(ax);
    }
    auto index = std::make_shared<std::vector<std::int64_t>>(permutation_index(a.shape(), order));
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        std::vector<T> out(va.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = va[(*index)[i]];
        }
        return Tensor::make_result(std::move(out_shape), std::move(out), "permute", {a},
            [index](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                auto& d = vec<T>(*gin[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[(*index)[i]] += g[i];
                }
            });
    });
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
    std::vector<int> order(a.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[detail::normalize_axis(axis0, a.rank(), "transpose")],
              order[detail::normalize_axis(axis1, a.rank(), "transpose")]);
    return permute(a, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) {
        throw UsageError("concat: no inputs");
    }
    const auto& first = parts.front();
    const int ax = detail::normalize_axis(axis, first.rank(), "concat");
    Shape out_shape = first.shape();
    out_shape[ax] = 0;
    for (const auto& p : parts) {
        detail::require_same_dtype(first, p, "concat");
        if (p.rank() != first.rank()) {
            throw ShapeError("concat: rank mismatch");
        }
        for (int i = 0; i < first.rank(); ++i) {
            if (i != ax && p.dim(i) != first.dim(i)) {
                throw ShapeError(fmt::format("concat: extent mismatch on axis {} ({} vs {})", i,
                                             p.dim(i), first.dim(i)),
                                 i);
            }
        }
        out_shape[ax] += p.dim(ax);
    }
    std::int64_t outer = 1;
    for (int i = 0; i < ax; ++i) {
        outer *= first.dim(i);
    }
    std::int64_t inner = 1;
    for (int i = ax + 1; i < first.rank(); ++i) {
        inner *= first.dim(i);
    }
    std::vector<std::int64_t> chunk;
    for (const auto& p : parts) {
        chunk.push_back(p.dim(ax) * inner);
    }
    const std::int64_t row = out_shape[ax] * inner;

    return dispatch(first.dtype(), [&]<class T>(TypeTag<T>) {
        std::vector<T> out(static_cast<std::size_t>(outer * row));
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const auto src = parts[k].data<T>();
            for (std::int64_t o = 0; o < outer; ++o) {
                std::copy_n(src.begin() + o * chunk[k], chunk[k], out.begin() + o * row + offset);
            }
            offset += chunk[k];
        }
        return Tensor::make_result(std::move(out_shape), std::move(out), "concat", parts,
            [chunk, outer, row](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                std::int64_t offset = 0;
                for (std::size_t k = 0; k < chunk.size(); ++k) {
                    if (T* d = grad_ptr<T>(gin, k)) {
                        for (std::int64_t o = 0; o < outer; ++o) {
                            for (std::int64_t i = 0; i < chunk[k]; ++i) {
                                d[o * chunk[k] + i] += g[o * row + offset + i];
                            }
                        }
                    }
                    offset += chunk[k];
                }
            });
    });
}

Tensor narrow(const Tensor& a, int axis, std::int64_t start, std::int64_t length) {
    const int ax = detail::normalize_axis(axis, a.rank(), "narrow");
    if (start < 0 || length < 1 || start + length > a.dim(ax)) {
        throw ShapeError(fmt::format("narrow: range [{}, {}) outside extent {} of axis {}", start, start + length,
                                     a.dim(ax), ax),
                         ax);
    }
    std::int64_t outer = 1;
    for (int i = 0; i < ax; ++i) {
        outer *= a.dim(i);
    }
    std::int64_t inner = 1;
    for (int i = ax + 1; i < a.rank(); ++i) {
        inner *= a.dim(i);
    }
    const std::int64_t src_row = a.dim(ax) * inner;
    const std::int64_t dst_row = length * inner;
    const std::int64_t offset = start * inner;
    Shape out_shape = a.shape();
    out_shape[ax] = length;
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        std::vector<T> out(static_cast<std::size_t>(outer * dst_row));
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(va.begin() + o * src_row + offset, dst_row, out.begin() + o * dst_row);
        }
        return Tensor::make_result(std::move(out_shape), std::move(out), "narrow", {a},
            [outer, src_row, dst_row, offset](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                T* d = grad_ptr<T>(gin, 0);
                for (std::int64_t o = 0; o < outer; ++o) {
                    for (std::int64_t i = 0; i < dst_row; ++i) {
                        d[o * src_row + offset + i] += g[o * dst_row + i];
                    }
                }
            });
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_same_dtype(a, b, "matmul");
    if (a.rank() < 2 || a.rank() != b.rank()) {
        throw ShapeError(fmt::format("matmul: incompatible ranks {} and {}", shape_string(a.shape()),
                                     shape_string(b.shape())));
    }
    const int r = a.rank();
    std::int64_t batch = 1;
    for (int i = 0; i < r - 2; ++i) {
        if (a.dim(i) != b.dim(i)) {
            throw ShapeError(fmt::format("matmul: batch extent mismatch on axis {}", i), i);
        }
        batch *= a.dim(i);
    }
    const auto m = a.dim(r - 2);
    const auto k = a.dim(r - 1);
    const auto n = b.dim(r - 1);
    if (b.dim(r - 2) != k) {
        throw ShapeError(fmt::format("matmul: inner extents differ ({} vs {})", k, b.dim(r - 2)), r - 2);
    }
    Shape out_shape = a.shape();
    out_shape[r - 1] = n;
    return dispatch(a.dtype(), [&]<class T>(TypeTag<T>) {
        const auto va = a.data<T>();
        const auto vb = b.data<T>();
        std::vector<T> out(static_cast<std::size_t>(batch * m * n));
        for (std::int64_t i = 0; i < batch; ++i) {
            detail::gemm<T>(false, false, m, n, k, va.data() + i * m * k, vb.data() + i * k * n,
                            out.data() + i * m * n, false);
        }
        return Tensor::make_result(std::move(out_shape), std::move(out), "matmul", {a, b},
            [a, b, batch, m, n, k](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                const auto va = a.data<T>();
                const auto vb = b.data<T>();
                T* da = grad_ptr<T>(gin, 0);
                T* db = grad_ptr<T>(gin, 1);
                for (std::int64_t i = 0; i < batch; ++i) {
                    const T* gi = g.data() + i * m * n;
                    if (da) {
                        detail::gemm<T>(false, true, m, k, n, gi, vb.data() + i * k * n, da + i * m * k, true);
                    }
                    if (db) {
                        detail::gemm<T>(true, false, k, n, m, va.data() + i * m * k, gi, db + i * k * n, true);
                    }
                }
            });
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    detail::require_same_dtype(x, weight, "linear");
    detail::require_rank(weight, 2, "linear", "weight");
    const auto in = weight.dim(1);
    const auto out_dim = weight.dim(0);
    if (x.dim(-1) != in) {
        throw ShapeError(fmt::format("linear: input has {} features, weight expects {}", x.dim(-1), in),
                         x.rank() - 1);
    }
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
        throw ShapeError(fmt::format("linear: bias shape {} does not match {} outputs",
                                     shape_string(bias.shape()), out_dim));
    }
    const auto rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) {
        inputs.push_back(bias);
    }
    return dispatch(x.dtype(), [&]<class T>(TypeTag<T>) {
        std::vector<T> out(static_cast<std::size_t>(rows * out_dim));
        detail::gemm<T>(false, true, rows, out_dim, in, x.data<T>().data(), weight.data<T>().data(),
                        out.data(), false);
        if (has_bias) {
            const auto vb = bias.data<T>();
            for (std::int64_t r = 0; r < rows; ++r) {
                for (std::int64_t o = 0; o < out_dim; ++o) {
                    out[r * out_dim + o] += vb[o];
                }
            }
        }
        return Tensor::make_result(std::move(out_shape), std::move(out), "linear", inputs,
            [x, weight, rows, in, out_dim](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                if (T* dx = grad_ptr<T>(gin, 0)) {
                    detail::gemm<T>(false, false, rows, in, out_dim, g.data(), weight.data<T>().data(), dx, true);
                }
                if (T* dw = grad_ptr<T>(gin, 1)) {
                    detail::gemm<T>(true, false, out_dim, in, rows, g.data(), x.data<T>().data(), dw, true);
                }
                if (gin.size() > 2) {
                    if (T* db = grad_ptr<T>(gin, 2)) {
                        for (std::int64_t r = 0; r < rows; ++r) {
                            for (std::int64_t o = 0; o < out_dim; ++o) {
                                db[o] += g[r * out_dim + o];
                            }
                        }
                    }
                }
            });
    });
}

Tensor softmax(const Tensor& x, int axis) {
    const int ax = detail::normalize_axis(axis, x.rank(), "softmax");
    std::int64_t outer = 1;
    for (int i = 0; i < ax; ++i) {
        outer *= x.dim(i);
    }
    std::int64_t inner = 1;
    for (int i = ax + 1; i < x.rank(); ++i) {
        inner *= x.dim(i);
    }
    const auto len = x.dim(ax);
    return dispatch(x.dtype(), [&]<class T>(TypeTag<T>) {
        const auto vx = x.data<T>();
        auto out = std::make_shared<std::vector<T>>(vx.size());
        auto& y = *out;
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t i = 0; i < inner; ++i) {
                const std::int64_t base = o * len * inner + i;
                T peak = vx[base];
                for (std::int64_t j = 1; j < len; ++j) {
                    peak = std::max(peak, vx[base + j * inner]);
                }
                T total = 0;
                for (std::int64_t j = 0; j < len; ++j) {
                    const T e = std::exp(vx[base + j * inner] - peak);
                    y[base + j * inner] = e;
                    total += e;
                }
                for (std::int64_t j = 0; j < len; ++j) {
                    y[base + j * inner] /= total;
                }
            }
        }
        // The backward pass needs the output values; keep a private copy.
        std::vector<T> result = y;
        return Tensor::make_result(x.shape(), std::move(result), "softmax", {x},
            [out, outer, inner, len](const Buffer& gout, std::span<Buffer* const> gin) {
                const auto& g = vec<T>(gout);
                const auto& y = *out;
                T* d = grad_ptr<T>(gin, 0);
                for (std::int64_t o = 0; o < outer; ++o) {
                    for (std::int64_t i = 0; i < inner; ++i) {
                        const std::int64_t base = o * len * inner + i;
                        T dot = 0;
                        for (std::int64_t j = 0; j < len; ++j) {
                            dot += g[base + j * inner] * y[base + j * inner];
                        }
                        for (std::int64_t j = 0; j < len; ++j) {
                            const auto idx = base + j * inner;
                            d[idx] += y[idx] * (g[idx] - dot);
                        }
                    }
                }
            });
    });
}

Tensor map_to_tokens(const Tensor& x) {
    detail::require_rank(x, 4, "map_to_tokens", "input");
    const Tensor flat = reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)});
    return permute(flat, {0, 2, 1});
}

Tensor tokens_to_map(const Tensor& tokens, std::int64_t height, std::int64_t width) {
    detail::require_rank(tokens, 3, "tokens_to_map", "tokens");
    if (tokens.dim(1) != height * width) {
        throw ShapeError(fmt::format("tokens_to_map: {} tokens cannot form a {}x{} map", tokens.dim(1),
                                     height, width),
                         1);
    }
    const Tensor channels_first = permute(tokens, {0, 2, 1});
    return reshape(channels_first, {tokens.dim(0), tokens.dim(2), height, width});
}

} // namespace changebind
