#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "changebind/image_io.hpp"

namespace changebind {

/// Synthetic bi-temporal scenes: textured background with rectangles and
/// ellipses. The post scene adds and removes some shapes; both images get
/// independent brightness jitter and pixel noise, which are not change.
struct SynthConfig {
    int n = 16;
    int size = 64;
    int shapes_per_image = 4;
    /// Number of changed shapes as a fraction of shapes_per_image (rounded).
    double change_fraction = 0.5;
    /// Global brightness factor drawn from [1 - jitter, 1 + jitter] per image.
    double jitter = 0.1;
    /// Standard deviation of additive per-pixel Gaussian noise.
    double noise = 0.02;
    std::string split = "train";

    void validate() const;
};

/// One generated pair: 8-bit RGB images and a 0/255 gray label.
struct SynthSample {
    Image pre;
    Image post;
    Image label;
};

/// Sample `index` of the dataset described by (config, seed).
SynthSample synth_sample(const SynthConfig& config, std::uint64_t seed, int index);

/// File name of sample `index`, e.g. "0003.png".
std::string synth_file_name(int index);

/// Writes `<root>/<split>/{A,B,label}/<id>.png` with ids 0000, 0001, ...
/// Output depends only on (config, seed).
void synth_generate(const SynthConfig& config, std::uint64_t seed, const std::filesystem::path& root);

} // namespace changebind
