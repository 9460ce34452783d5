#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace changebind::detail {

/// C (M x N) = op(A) * op(B) (+ C when accumulate). All operands row-major;
/// op(A) is M x K, op(B) is K x N. Single-threaded, so the summation order
/// only depends on the operand sizes.
template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
          const T* b, T* c, bool accumulate) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    Eigen::Map<Mat> out(c, m, n);
    const CMap ma(a, trans_a ? k : m, trans_a ? m : k);
    const CMap mb(b, trans_b ? n : k, trans_b ? k : n);
    auto assign = [&](const auto& product) {
        if (accumulate) {
            out.noalias() += product;
        } else {
            out.noalias() = product;
        }
    };
    if (trans_a && trans_b) {
        assign(ma.transpose() * mb.transpose());
    } else if (trans_a) {
        assign(ma.transpose() * mb);
    } else if (trans_b) {
        assign(ma * mb.transpose());
    } else {
        assign(ma * mb);
    }
}

} // namespace changebind::detail
