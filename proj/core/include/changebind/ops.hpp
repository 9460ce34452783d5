#pragma once

#include <cstdint>
#include <vector>

#include "changebind/tensor.hpp"

namespace changebind {

// Elementwise and structural ops. Binary ops require identical shapes; the
// architecture never needs general broadcasting.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& order);
Tensor transpose(const Tensor& a, int axis0, int axis1);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Slice [start, start + length) of `axis`.
Tensor narrow(const Tensor& a, int axis, std::int64_t start, std::int64_t length);

/// Batched matrix product over equal leading dims: [..., M, K] x [..., K, N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// y = x W^T + b over the last axis. `weight` is [out, in]; `bias` may be
/// undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

/// Numerically stable softmax (max subtraction) along `axis`.
Tensor softmax(const Tensor& x, int axis);

/// [B, C, H, W] -> [B, H*W, C], row-major over (H, W).
Tensor map_to_tokens(const Tensor& x);
/// [B, H*W, C] -> [B, C, H, W].
Tensor tokens_to_map(const Tensor& tokens, std::int64_t height, std::int64_t width);

// Convolution family.

/// Kernel, optional bias, stride and zero padding of a 2-D convolution.
/// For conv2d the kernel is [out, in, kH, kW]. For transpose_conv2d it is
/// [in, out, kH, kW] so that the same tensor defines the adjoint conv2d.
struct ConvParams {
    Tensor kernel;
    Tensor bias;
    int stride = 1;
    int padding = 0;
};

Tensor conv2d(const Tensor& x, const ConvParams& p);

/// Stride-2 transposed convolution whose output is exactly twice the input
/// extent. Valid configurations satisfy kernel - 2 * padding == 2.
Tensor transpose_conv2d(const Tensor& x, const ConvParams& p);

Tensor max_pool2d(const Tensor& x, int kernel, int stride);

/// Bilinear resize with half-pixel centres (source coordinate
/// (dst + 0.5) * in / out - 0.5, clamped at the border).
Tensor bilinear_upsample(const Tensor& x, std::int64_t target_h, std::int64_t target_w);

/// Per-sample group normalization with per-channel affine parameters.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps);

// Attention.

struct AttentionParams {
    int heads = 1;
    Tensor w_q;
    Tensor w_k;
    Tensor w_v;
    Tensor w_o;

    std::int64_t model_dim() const { return w_q.dim(0); }
};

/// Multi-head scaled dot-product self-attention over tokens [B, N, D].
/// When `weights` is non-null it receives the attention map [B, heads, N, N].
Tensor mhsa(const Tensor& tokens, const AttentionParams& p, Tensor* weights = nullptr);

// Losses.

/// Mean over pixels of -log softmax(logits)[label]. `labels` is [B, H, W]
/// holding class indices; anything outside [0, C) is a DataError.
Tensor cross_entropy_loss(const Tensor& logits, const Tensor& labels);

} // namespace changebind
