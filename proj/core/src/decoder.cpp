#include "changebind/decoder.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace changebind {

void DecoderConfig::validate() const {
    if (in_channels <= 0 || min_channels <= 0 || classes < 2) {
        throw ConfigError("decoder: channel counts must be positive and classes >= 2");
    }
    if (transpose_kernel != 2 && transpose_kernel != 4) {
        throw ConfigError(fmt::format("decoder: transpose kernel must be 2 or 4, got {}", transpose_kernel));
    }
    for (int s : {1, 2}) {
        if (stage_channels(s) % norm_groups != 0) {
            throw ConfigError(fmt::format("decoder: stage {} channels {} not divisible by {} groups", s,
                                          stage_channels(s), norm_groups));
        }
    }
}

std::int64_t DecoderConfig::stage_channels(int stage) const {
    return std::max(min_channels, in_channels >> stage);
}

Decoder::Decoder(const DecoderConfig& config, Rng& rng)
    : config_((config.validate(), config)),
      up1_(config.in_channels, config.stage_channels(1), config.transpose_kernel, rng),
      refine1_(config.stage_channels(1), config.stage_channels(1), 1, config.norm_groups, config.norm_eps, rng),
      up2_(config.stage_channels(1), config.stage_channels(2), config.transpose_kernel, rng),
      refine2_(config.stage_channels(2), config.stage_channels(2), 1, config.norm_groups, config.norm_eps, rng),
      head_(config.stage_channels(2), config.classes, 1, 1, 0, true, rng) {}

Tensor Decoder::decode(const ChangeEncoding& encoding,
                       std::optional<std::pair<std::int64_t, std::int64_t>> image_hw) const {
    const Tensor& x = encoding.x_bar;
    if (x.rank() != 4 || x.dim(1) != config_.in_channels) {
        throw ShapeError(fmt::format("decoder: encoding {} does not have {} channels", shape_string(x.shape()),
                                     config_.in_channels),
                         1);
    }
    if (image_hw && (x.dim(2) * 4 != image_hw->first || x.dim(3) * 4 != image_hw->second)) {
        throw ConfigError(fmt::format("decoder: encoding extent {}x{} is not stride 4 of image {}x{}", x.dim(2),
                                      x.dim(3), image_hw->first, image_hw->second));
    }
    Tensor y = refine1_.forward(up1_.forward(x));
    y = refine2_.forward(up2_.forward(y));
    return head_.forward(y);
}

void Decoder::register_parameters(ParameterSet& set, const std::string& prefix) const {
    up1_.register_parameters(set, prefix + "up1.");
    refine1_.register_parameters(set, prefix + "refine1.");
    up2_.register_parameters(set, prefix + "up2.");
    refine2_.register_parameters(set, prefix + "refine2.");
    head_.register_parameters(set, prefix + "head.");
}

BinaryMask predict_mask(const Tensor& logits) {
    if (logits.rank() != 4) {
        throw ShapeError(fmt::format("predict_mask: logits must be [B, 2, H, W], got {}",
                                     shape_string(logits.shape())));
    }
    if (logits.dim(1) != 2) {
        throw ShapeError(fmt::format("predict_mask: expected 2 channels, got {}", logits.dim(1)), 1);
    }
    const auto batch = logits.dim(0);
    const auto plane = logits.dim(2) * logits.dim(3);
    BinaryMask mask({batch, logits.dim(2), logits.dim(3)});
    const auto v = logits.to_vector();
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const double no_change = v[(b * 2) * plane + i];
            const double change = v[(b * 2 + 1) * plane + i];
            mask.set(b * plane + i, change > no_change);
        }
    }
    return mask;
}

} // namespace changebind
