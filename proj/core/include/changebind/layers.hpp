#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "changebind/init.hpp"
#include "changebind/ops.hpp"

namespace changebind {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Ordered, named view of a model's trainable tensors. Entries alias the
/// model's storage, so updating them updates the model.
class ParameterSet {
public:
    void add(std::string name, Tensor tensor);
    const std::vector<NamedTensor>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    const Tensor* find(const std::string& name) const;
    std::int64_t total_elements() const;
    void zero_grad();

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<NamedTensor> items_;
};

class Conv2d {
public:
    Conv2d(std::int64_t in_channels, std::int64_t out_channels, int kernel, int stride, int padding, bool bias,
           Rng& rng);

    Tensor forward(const Tensor& x) const { return conv2d(x, params_); }
    void register_parameters(ParameterSet& set, const std::string& prefix) const;

    const ConvParams& params() const { return params_; }
    ConvParams& params() { return params_; }
    std::int64_t in_channels() const { return params_.kernel.dim(1); }
    std::int64_t out_channels() const { return params_.kernel.dim(0); }

private:
    ConvParams params_;
};

/// Stride-2 transposed convolution; kernel stored as [in, out, k, k].
class ConvTranspose2d {
public:
    ConvTranspose2d(std::int64_t in_channels, std::int64_t out_channels, int kernel, Rng& rng);

    Tensor forward(const Tensor& x) const { return transpose_conv2d(x, params_); }
    void register_parameters(ParameterSet& set, const std::string& prefix) const;
    const ConvParams& params() const { return params_; }

private:
    ConvParams params_;
};

class Linear {
public:
    Linear(std::int64_t in_features, std::int64_t out_features, Rng& rng);

    Tensor forward(const Tensor& x) const { return linear(x, weight_, bias_); }
    void register_parameters(ParameterSet& set, const std::string& prefix) const;

private:
    Tensor weight_;
    Tensor bias_;
};

class GroupNorm {
public:
    GroupNorm(std::int64_t channels, int groups, double eps);

    Tensor forward(const Tensor& x) const { return group_norm(x, groups_, gamma_, beta_, eps_); }
    void register_parameters(ParameterSet& set, const std::string& prefix) const;

private:
    Tensor gamma_;
    Tensor beta_;
    int groups_;
    double eps_;
};

class MultiHeadAttention {
public:
    MultiHeadAttention(std::int64_t dim, int heads, Rng& rng);

    Tensor forward(const Tensor& tokens, Tensor* weights = nullptr) const { return mhsa(tokens, params_, weights); }
    void register_parameters(ParameterSet& set, const std::string& prefix) const;
    const AttentionParams& params() const { return params_; }

private:
    AttentionParams params_;
};

/// act(norm(conv(act(norm(conv(x))))) + shortcut(x)) with 3x3 convolutions.
/// The shortcut is the identity unless the block changes channels or
/// stride, in which case it is a 1x1 convolution followed by normalization.
class ResidualBlock {
public:
    ResidualBlock(std::int64_t in_channels, std::int64_t out_channels, int stride, int groups, double eps,
                  Rng& rng);

    Tensor forward(const Tensor& x) const;
    void register_parameters(ParameterSet& set, const std::string& prefix) const;

    bool has_projection() const { return shortcut_conv_.has_value(); }
    Conv2d& conv1() { return conv1_; }
    Conv2d& conv2() { return conv2_; }

private:
    Conv2d conv1_;
    GroupNorm norm1_;
    Conv2d conv2_;
    GroupNorm norm2_;
    std::optional<Conv2d> shortcut_conv_;
    std::optional<GroupNorm> shortcut_norm_;
};

} // namespace changebind
