#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "changebind/backbone.hpp"
#include "changebind/layers.hpp"

namespace changebind {

/// Ablation switches. The full model is msf + cce + ace.
///
/// `use_baseline` enables the reference change path used by the ablation
/// baseline rows: the two token sequences are concatenated along the token
/// axis, passed through self-attention, split back into the two dates and
/// compared by absolute difference.
struct EncoderFlags {
    bool use_msf = true;       ///< fuse all four scales (otherwise deepest only)
    bool use_cce = true;       ///< convolutional change encoding
    bool use_ace = true;       ///< attentional change encoding
    bool use_baseline = false; ///< attention + absolute difference reference path

    int path_count() const { return int(use_cce) + int(use_ace) + int(use_baseline); }

    void validate() const;
    /// Row label in the ablation table, e.g. "Baseline + MSF + CCE".
    std::string label() const;

    bool operator==(const EncoderFlags&) const = default;
};

struct EncoderConfig {
    std::int64_t embed_dim = 64; ///< E, shared by all per-scale encodings
    std::int64_t attn_dim = 64;  ///< token width inside the attention path
    int heads = 4;
    std::int64_t out_dim = 64;   ///< channels of the fused encoding
    EncoderFlags flags;

    void validate() const;
};

/// Fused multi-scale change representation at stride 4.
struct ChangeEncoding {
    Tensor x_bar;
};

/// The five rows of the ablation table, in table order.
struct AblationRow {
    std::string label;
    EncoderFlags flags;
};
const std::array<AblationRow, 5>& ablation_rows();

/// One scale of the change encoder. The two feature maps are concatenated
/// on channels; a 3x3 convolution gives the convolutional encoding and
/// token-wise projection -> MHSA -> projection gives the attentional one.
/// Enabled encodings are concatenated and projected by a 3x3 convolution
/// (whose input width is E times the number of enabled paths).
class DifferenceModule {
public:
    DifferenceModule(std::int64_t in_channels, const EncoderConfig& config, Rng& rng);

    Tensor forward(const Tensor& pre, const Tensor& post) const;
    void register_parameters(ParameterSet& set, const std::string& prefix) const;

    /// Attention map of the most recent forward pass when ACE is enabled.
    const Tensor& last_attention() const { return last_attention_; }

private:
    EncoderFlags flags_;
    Conv2d cce_conv_;
    Linear ace_in_proj_;
    MultiHeadAttention ace_attn_;
    Linear ace_out_proj_;
    Linear base_in_proj_;
    MultiHeadAttention base_attn_;
    Linear base_out_proj_;
    Conv2d fuse_conv_;
    mutable Tensor last_attention_;
};

class ChangeEncoder {
public:
    ChangeEncoder(const std::array<std::int64_t, 4>& level_channels, const EncoderConfig& config, Rng& rng);

    ChangeEncoding encode(const FeaturePyramid& pre, const FeaturePyramid& post) const;

    /// Upsamples the per-scale encodings to the scale-1 extent,
    /// concatenates them in scale order and merges with a 3x3 convolution.
    /// Without MSF only the deepest encoding is used.
    ChangeEncoding fuse_scales(const std::array<Tensor, 4>& encodings) const;

    void register_parameters(ParameterSet& set) const;

    const EncoderConfig& config() const { return config_; }
    const DifferenceModule& difference_module(std::size_t scale) const { return diff_.at(scale); }

private:
    EncoderConfig config_;
    std::array<DifferenceModule, 4> diff_;
    Conv2d merge_conv_;
};

} // namespace changebind
