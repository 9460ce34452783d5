#include <cmath>

#include "changebind/ops.hpp"
#include "kernel_util.hpp"

namespace changebind {

Tensor mhsa(const Tensor& tokens, const AttentionParams& p, Tensor* weights) {
    detail::require_rank(tokens, 3, "mhsa", "tokens");
    const auto dim = p.model_dim();
    if (p.heads < 1 || dim % p.heads != 0) {
        throw ConfigError(fmt::format("mhsa: model dim {} is not divisible by {} heads", dim, p.heads));
    }
    for (const Tensor* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) {
        if (w->rank() != 2 || w->dim(0) != dim || w->dim(1) != dim) {
            throw ShapeError(fmt::format("mhsa: projection of shape {} is not {}x{}", shape_string(w->shape()),
                                         dim, dim));
        }
    }
    if (tokens.dim(2) != dim) {
        throw ShapeError(fmt::format("mhsa: token width {} differs from model dim {}", tokens.dim(2), dim), 2);
    }
    const auto batch = tokens.dim(0);
    const auto n = tokens.dim(1);
    const auto head_dim = dim / p.heads;

    // [B, N, D] -> [B, heads, N, head_dim]
    auto split_heads = [&](const Tensor& t) {
        return permute(reshape(t, {batch, n, p.heads, head_dim}), {0, 2, 1, 3});
    };
    const Tensor q = split_heads(linear(tokens, p.w_q));
    const Tensor k = split_heads(linear(tokens, p.w_k));
    const Tensor v = split_heads(linear(tokens, p.w_v));

    const Tensor scores = scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
    const Tensor attn = softmax(scores, 3);
    if (weights) {
        *weights = attn.detach();
    }
    const Tensor context = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {batch, n, dim});
    return linear(context, p.w_o);
}

} // namespace changebind
