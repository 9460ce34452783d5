#include "changebind/layers.hpp"

#include <fmt/format.h>

namespace changebind {

namespace {

Tensor trainable(Tensor t) {
    t.requires_grad_(true);
    return t;
}

} // namespace

void ParameterSet::add(std::string name, Tensor tensor) {
    if (find(name)) {
        throw UsageError(fmt::format("duplicate parameter name '{}'", name));
    }
    items_.push_back({std::move(name), std::move(tensor)});
}

const Tensor* ParameterSet::find(const std::string& name) const {
    for (const auto& item : items_) {
        if (item.name == name) {
            return &item.tensor;
        }
    }
    return nullptr;
}

std::int64_t ParameterSet::total_elements() const {
    std::int64_t n = 0;
    for (const auto& item : items_) {
        n += item.tensor.numel();
    }
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& item : items_) {
        item.tensor.zero_grad();
    }
}

Conv2d::Conv2d(std::int64_t in_channels, std::int64_t out_channels, int kernel, int stride, int padding, bool bias,
               Rng& rng) {
    params_.kernel = trainable(fan_in_uniform({out_channels, in_channels, kernel, kernel},
                                              in_channels * kernel * kernel, rng));
    if (bias) {
        params_.bias = trainable(Tensor::zeros({out_channels}));
    }
    params_.stride = stride;
    params_.padding = padding;
}

void Conv2d::register_parameters(ParameterSet& set, const std::string& prefix) const {
    set.add(prefix + "weight", params_.kernel);
    if (params_.bias.defined()) {
        set.add(prefix + "bias", params_.bias);
    }
}

ConvTranspose2d::ConvTranspose2d(std::int64_t in_channels, std::int64_t out_channels, int kernel, Rng& rng) {
    if (kernel != 2 && kernel != 4) {
        throw ConfigError(fmt::format("transposed convolution kernel must be 2 or 4, got {}", kernel));
    }
    // Each output pixel receives (kernel / 2)^2 taps per input channel.
    const auto fan_in = in_channels * (kernel / 2) * (kernel / 2);
    params_.kernel = trainable(fan_in_uniform({in_channels, out_channels, kernel, kernel}, fan_in, rng));
    params_.bias = trainable(Tensor::zeros({out_channels}));
    params_.stride = 2;
    params_.padding = (kernel - 2) / 2;
}

void ConvTranspose2d::register_parameters(ParameterSet& set, const std::string& prefix) const {
    set.add(prefix + "weight", params_.kernel);
    set.add(prefix + "bias", params_.bias);
}

Linear::Linear(std::int64_t in_features, std::int64_t out_features, Rng& rng)
    : weight_(trainable(fan_avg_uniform({out_features, in_features}, in_features, out_features, rng))),
      bias_(trainable(Tensor::zeros({out_features}))) {}

void Linear::register_parameters(ParameterSet& set, const std::string& prefix) const {
    set.add(prefix + "weight", weight_);
    set.add(prefix + "bias", bias_);
}

GroupNorm::GroupNorm(std::int64_t channels, int groups, double eps)
    : gamma_(trainable(Tensor::full({channels}, 1.0))),
      beta_(trainable(Tensor::zeros({channels}))),
      groups_(groups),
      eps_(eps) {
    if (groups < 1 || channels % groups != 0) {
        throw ConfigError(fmt::format("{} channels cannot be split into {} normalization groups", channels, groups));
    }
}

void GroupNorm::register_parameters(ParameterSet& set, const std::string& prefix) const {
    set.add(prefix + "gamma", gamma_);
    set.add(prefix + "beta", beta_);
}

MultiHeadAttention::MultiHeadAttention(std::int64_t dim, int heads, Rng& rng) {
    if (heads < 1 || dim % heads != 0) {
        throw ConfigError(fmt::format("attention dim {} is not divisible by {} heads", dim, heads));
    }
    params_.heads = heads;
    params_.w_q = trainable(fan_avg_uniform({dim, dim}, dim, dim, rng));
    params_.w_k = trainable(fan_avg_uniform({dim, dim}, dim, dim, rng));
    params_.w_v = trainable(fan_avg_uniform({dim, dim}, dim, dim, rng));
    params_.w_o = trainable(fan_avg_uniform({dim, dim}, dim, dim, rng));
}

void MultiHeadAttention::register_parameters(ParameterSet& set, const std::string& prefix) const {
    set.add(prefix + "w_q", params_.w_q);
    set.add(prefix + "w_k", params_.w_k);
    set.add(prefix + "w_v", params_.w_v);
    set.add(prefix + "w_o", params_.w_o);
}

ResidualBlock::ResidualBlock(std::int64_t in_channels, std::int64_t out_channels, int stride, int groups, double eps,
                             Rng& rng)
    : conv1_(in_channels, out_channels, 3, stride, 1, false, rng),
      norm1_(out_channels, groups, eps),
      conv2_(out_channels, out_channels, 3, 1, 1, false, rng),
      norm2_(out_channels, groups, eps) {
    if (stride != 1 || in_channels != out_channels) {
        shortcut_conv_.emplace(in_channels, out_channels, 1, stride, 0, false, rng);
        shortcut_norm_.emplace(out_channels, groups, eps);
    }
}

Tensor ResidualBlock::forward(const Tensor& x) const {
    const Tensor h = relu(norm1_.forward(conv1_.forward(x)));
    const Tensor branch = norm2_.forward(conv2_.forward(h));
    const Tensor skip = shortcut_conv_ ? shortcut_norm_->forward(shortcut_conv_->forward(x)) : x;
    return relu(add(branch, skip));
}

void ResidualBlock::register_parameters(ParameterSet& set, const std::string& prefix) const {
    conv1_.register_parameters(set, prefix + "conv1.");
    norm1_.register_parameters(set, prefix + "norm1.");
    conv2_.register_parameters(set, prefix + "conv2.");
    norm2_.register_parameters(set, prefix + "norm2.");
    if (shortcut_conv_) {
        shortcut_conv_->register_parameters(set, prefix + "shortcut.conv.");
        shortcut_norm_->register_parameters(set, prefix + "shortcut.norm.");
    }
}

} // namespace changebind
