#include "changebind/image_io.hpp"

#include <cstring>

#include <fmt/format.h>
#include <png.h>

#include "changebind/error.hpp"

namespace changebind {

namespace {

png_uint_32 format_for(int channels) {
    switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    default: throw UsageError(fmt::format("png: unsupported channel count {}", channels));
    }
}

} // namespace

Image read_png(const std::filesystem::path& path, int channels) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IoError(fmt::format("cannot read PNG {}: {}", path.string(), png.message));
    }
    png.format = format_for(channels);
    Image image;
    image.width = static_cast<int>(png.width);
    image.height = static_cast<int>(png.height);
    image.channels = channels;
    image.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
        const std::string message = png.message;
        png_image_free(&png);
        throw IoError(fmt::format("cannot decode PNG {}: {}", path.string(), message));
    }
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
        throw UsageError(fmt::format("png: pixel buffer size does not match {}x{}x{}", image.width, image.height,
                                     image.channels));
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = format_for(image.channels);
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw IoError(fmt::format("cannot write PNG {}: {}", path.string(), png.message));
    }
}

} // namespace changebind
