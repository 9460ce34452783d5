#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace changebind {

/// 8-bit raster, interleaved channels, row-major.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

/// Reads a PNG, converting to `channels` (1 = gray, 3 = RGB).
Image read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Image& image);

} // namespace changebind
