#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "changebind/mask.hpp"
#include "changebind/tensor.hpp"

namespace changebind {

/// Co-registered image pair and its change label.
struct SamplePair {
    Tensor pre;        ///< [3, H, W] in [0, 1]
    Tensor post;       ///< [3, H, W] in [0, 1]
    BinaryMask label;  ///< [H, W]
    std::string id;
};

using Dataset = std::vector<SamplePair>;

/// Loads `<root>/<split>/{A,B,label}/<id>.png`, sorted by id. Label pixels
/// >= 128 are change.
Dataset load_dataset(const std::filesystem::path& root, const std::string& split);

inline constexpr std::uint8_t kLabelThreshold = 128;

/// Reads a single-channel mask PNG, thresholding at kLabelThreshold.
BinaryMask read_mask_png(const std::filesystem::path& path);
/// Writes an [H, W] (or [1, H, W]) mask as 8-bit gray: change 255, else 0.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

/// Converts a [3, H, W] tensor in [0, 1] to an 8-bit RGB image (rounded).
void write_rgb_png(const std::filesystem::path& path, const Tensor& image);

struct Batch {
    Tensor pre;    ///< [B, 3, H, W]
    Tensor post;   ///< [B, 3, H, W]
    Tensor labels; ///< [B, H, W] class indices
    BinaryMask mask;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Extracts sample `b` of a [B, H, W] mask as [H, W].
BinaryMask mask_slice(const BinaryMask& batch_mask, std::int64_t b);

} // namespace changebind
