#pragma once

#include <cstdint>
#include <optional>

#include "changebind/change_encoder.hpp"
#include "changebind/layers.hpp"
#include "changebind/mask.hpp"

namespace changebind {

struct DecoderConfig {
    std::int64_t in_channels = 64;
    int norm_groups = 4;
    double norm_eps = 1e-5;
    int transpose_kernel = 4;
    std::int64_t min_channels = 8;
    std::int64_t classes = 2;

    void validate() const;
    /// Channels after the first and second upsampling stages.
    std::int64_t stage_channels(int stage) const;
};

/// Logits and the binary mask derived from them by channel argmax.
struct ChangeMap {
    Tensor logits;
    BinaryMask mask;
};

/// Two [transposed conv (x2) -> residual block] stages followed by a 1x1
/// convolution to class logits.
class Decoder {
public:
    Decoder(const DecoderConfig& config, Rng& rng);

    /// `image_hw`, when given, must equal four times the encoding extent.
    Tensor decode(const ChangeEncoding& encoding,
                  std::optional<std::pair<std::int64_t, std::int64_t>> image_hw = std::nullopt) const;

    void register_parameters(ParameterSet& set, const std::string& prefix) const;
    const DecoderConfig& config() const { return config_; }

private:
    DecoderConfig config_;
    ConvTranspose2d up1_;
    ResidualBlock refine1_;
    ConvTranspose2d up2_;
    ResidualBlock refine2_;
    Conv2d head_;
};

/// Per-pixel argmax over the two channels of [B, 2, H, W] logits. A pixel is
/// marked changed only when the change logit is strictly greater, so ties
/// resolve to no-change.
BinaryMask predict_mask(const Tensor& logits);

} // namespace changebind
