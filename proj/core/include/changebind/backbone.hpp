#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "changebind/layers.hpp"

namespace changebind {

inline constexpr std::array<std::int64_t, 4> kPyramidStrides{4, 8, 16, 32};

struct BackboneConfig {
    std::int64_t in_channels = 3;
    std::int64_t stem_channels = 16;
    std::array<std::int64_t, 4> stage_channels{16, 32, 64, 128};
    int blocks_per_stage = 2;
    int norm_groups = 4;
    double norm_eps = 1e-5;

    static BackboneConfig desk() { return {}; }
    static BackboneConfig full() {
        BackboneConfig c;
        c.stem_channels = 64;
        c.stage_channels = {64, 128, 256, 512};
        return c;
    }

    void validate() const;
};

/// Per-scale features of one image: level i sits at stride 4 * 2^i.
struct FeaturePyramid {
    std::array<Tensor, 4> levels;
};

/// Residual feature extractor shared by both temporal branches. Stem is a
/// stride-2 3x3 convolution plus a stride-2 max pool (stride 4); stages 2-4
/// each halve the resolution in their first block.
class Backbone {
public:
    Backbone(const BackboneConfig& config, Rng& rng);

    /// Throws ShapeError before any compute when H or W is not a multiple of 32.
    FeaturePyramid extract_pyramid(const Tensor& image) const;

    void register_parameters(ParameterSet& set, const std::string& prefix) const;
    const BackboneConfig& config() const { return config_; }

private:
    BackboneConfig config_;
    Conv2d stem_conv_;
    GroupNorm stem_norm_;
    std::array<std::vector<ResidualBlock>, 4> stages_;
};

} // namespace changebind
