#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "changebind/tensor.hpp"

namespace changebind::detail {

template <class T>
struct TypeTag {
    using type = T;
};

template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
    if (dtype == DType::f32) {
        return f(TypeTag<float>{});
    }
    return f(TypeTag<double>{});
}

template <class T>
constexpr DType dtype_of() {
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

inline Buffer make_buffer(DType dtype, std::int64_t n) {
    if (dtype == DType::f32) {
        return std::vector<float>(static_cast<std::size_t>(n), 0.0f);
    }
    return std::vector<double>(static_cast<std::size_t>(n), 0.0);
}

template <class T>
std::vector<T>& vec(Buffer& b) {
    return std::get<std::vector<T>>(b);
}

template <class T>
const std::vector<T>& vec(const Buffer& b) {
    return std::get<std::vector<T>>(b);
}

/// Accumulates into grad_in[i] when it is requested.
template <class T>
T* grad_ptr(std::span<Buffer* const> grad_in, std::size_t i) {
    return grad_in[i] ? vec<T>(*grad_in[i]).data() : nullptr;
}

inline void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype()) {
        throw UsageError(fmt::format("{}: dtype mismatch ({} vs {})", op, to_string(a.dtype()),
                                     to_string(b.dtype())));
    }
}

inline void require_rank(const Tensor& t, int rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(fmt::format("{}: {} must have rank {}, got shape {}", op, what, rank,
                                     shape_string(t.shape())));
    }
}

inline int normalize_axis(int axis, int rank, const char* op) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw ShapeError(fmt::format("{}: axis {} out of range for rank {}", op, axis, rank), axis);
    }
    return a;
}

} // namespace changebind::detail
