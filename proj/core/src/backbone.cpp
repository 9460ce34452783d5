#include "changebind/backbone.hpp"

#include <fmt/format.h>

namespace changebind {

void BackboneConfig::validate() const {
    auto positive = [](std::int64_t v, const char* what) {
        if (v <= 0) {
            throw ConfigError(fmt::format("backbone: {} must be positive, got {}", what, v));
        }
    };
    positive(in_channels, "in_channels");
    positive(stem_channels, "stem_channels");
    positive(blocks_per_stage, "blocks_per_stage");
    positive(norm_groups, "norm_groups");
    for (auto c : stage_channels) {
        positive(c, "stage channels");
        if (c % norm_groups != 0) {
            throw ConfigError(fmt::format("backbone: stage channels {} not divisible by {} groups", c, norm_groups));
        }
    }
    if (stem_channels % norm_groups != 0) {
        throw ConfigError(fmt::format("backbone: stem channels {} not divisible by {} groups", stem_channels,
                                      norm_groups));
    }
    if (!(norm_eps > 0.0)) {
        throw ConfigError("backbone: norm_eps must be positive");
    }
}

Backbone::Backbone(const BackboneConfig& config, Rng& rng)
    : config_((config.validate(), config)),
      stem_conv_(config.in_channels, config.stem_channels, 3, 2, 1, false, rng),
      stem_norm_(config.stem_channels, config.norm_groups, config.norm_eps) {
    std::int64_t channels = config.stem_channels;
    for (std::size_t s = 0; s < 4; ++s) {
        for (int b = 0; b < config.blocks_per_stage; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            stages_[s].emplace_back(channels, config.stage_channels[s], stride, config.norm_groups,
                                    config.norm_eps, rng);
            channels = config.stage_channels[s];
        }
    }
}

FeaturePyramid Backbone::extract_pyramid(const Tensor& image) const {
    if (image.rank() != 4) {
        throw ShapeError(fmt::format("backbone: image must be [B, C, H, W], got {}", shape_string(image.shape())));
    }
    if (image.dim(1) != config_.in_channels) {
        throw ShapeError(fmt::format("backbone: image has {} channels, expected {}", image.dim(1),
                                     config_.in_channels),
                         1);
    }
    for (int axis : {2, 3}) {
        if (image.dim(axis) % 32 != 0) {
            throw ShapeError(fmt::format("backbone: image extent {} on axis {} is not divisible by 32",
                                         image.dim(axis), axis),
                             axis);
        }
    }
    Tensor x = relu(stem_norm_.forward(stem_conv_.forward(image)));
    x = max_pool2d(x, 2, 2);
    FeaturePyramid pyramid;
    for (std::size_t s = 0; s < 4; ++s) {
        for (const auto& block : stages_[s]) {
            x = block.forward(x);
        }
        pyramid.levels[s] = x;
    }
    return pyramid;
}

void Backbone::register_parameters(ParameterSet& set, const std::string& prefix) const {
    stem_conv_.register_parameters(set, prefix + "stem.conv.");
    stem_norm_.register_parameters(set, prefix + "stem.norm.");
    for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t b = 0; b < stages_[s].size(); ++b) {
            stages_[s][b].register_parameters(set, fmt::format("{}stage{}.block{}.", prefix, s + 1, b));
        }
    }
}

} // namespace changebind
