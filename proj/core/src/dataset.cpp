#include "changebind/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "changebind/image_io.hpp"

namespace changebind {

namespace fs = std::filesystem;

namespace {

std::set<std::string> png_stems(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw DataError(fmt::format("dataset directory {} does not exist", dir.string()));
    }
    std::set<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            stems.insert(entry.path().stem().string());
        }
    }
    return stems;
}

Tensor image_to_tensor(const Image& image) {
    const auto h = image.height;
    const auto w = image.width;
    std::vector<float> values(static_cast<std::size_t>(3) * h * w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                values[(static_cast<std::size_t>(c) * h + y) * w + x] =
                    static_cast<float>(image.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
            }
        }
    }
    return Tensor::from_buffer({3, h, w}, std::move(values));
}

} // namespace

BinaryMask read_mask_png(const fs::path& path) {
    const Image image = read_png(path, 1);
    std::vector<std::uint8_t> values(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), values.begin(),
                   [](std::uint8_t p) { return static_cast<std::uint8_t>(p >= kLabelThreshold ? 1 : 0); });
    return BinaryMask::from_values({image.height, image.width}, std::move(values));
}

void write_mask_png(const fs::path& path, const BinaryMask& mask) {
    const auto& shape = mask.shape();
    if (shape.size() < 2 || shape_numel(shape) != shape[shape.size() - 2] * shape.back()) {
        throw ShapeError(fmt::format("write_mask_png: expected a single [H, W] mask, got {}", shape_string(shape)));
    }
    Image image;
    image.height = static_cast<int>(shape[shape.size() - 2]);
    image.width = static_cast<int>(shape.back());
    image.channels = 1;
    image.pixels.resize(mask.values().size());
    std::transform(mask.values().begin(), mask.values().end(), image.pixels.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
    write_png(path, image);
}

void write_rgb_png(const fs::path& path, const Tensor& tensor) {
    if (tensor.rank() != 3 || tensor.dim(0) != 3) {
        throw ShapeError(fmt::format("write_rgb_png: expected [3, H, W], got {}", shape_string(tensor.shape())));
    }
    Image image;
    image.height = static_cast<int>(tensor.dim(1));
    image.width = static_cast<int>(tensor.dim(2));
    image.channels = 3;
    image.pixels.resize(static_cast<std::size_t>(tensor.numel()));
    const auto v = tensor.to_vector();
    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double clamped = std::clamp(v[c * plane + i], 0.0, 1.0);
            image.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(clamped * 255.0));
        }
    }
    write_png(path, image);
}

Dataset load_dataset(const fs::path& root, const std::string& split) {
    const fs::path base = root / split;
    const auto a = png_stems(base / "A");
    const auto b = png_stems(base / "B");
    const auto label = png_stems(base / "label");
    auto require_in = [&](const std::set<std::string>& have, const std::set<std::string>& need, const char* dir) {
        for (const auto& id : need) {
            if (!have.contains(id)) {
                throw DataError(fmt::format("missing counterpart {}", (base / dir / (id + ".png")).string()));
            }
        }
    };
    require_in(b, a, "B");
    require_in(label, a, "label");
    require_in(a, b, "A");
    require_in(a, label, "A");

    Dataset data;
    for (const auto& id : a) {
        const auto file = id + ".png";
        const Image pre = read_png(base / "A" / file, 3);
        const Image post = read_png(base / "B" / file, 3);
        BinaryMask mask = read_mask_png(base / "label" / file);
        if (pre.width != post.width || pre.height != post.height || mask.shape()[0] != pre.height ||
            mask.shape()[1] != pre.width) {
            throw DataError(fmt::format("size mismatch within triplet '{}' ({}x{}, {}x{}, {}x{})", id, pre.width,
                                        pre.height, post.width, post.height, mask.shape()[1], mask.shape()[0]));
        }
        data.push_back({image_to_tensor(pre), image_to_tensor(post), std::move(mask), id});
    }
    return data;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw UsageError("make_batch: empty index list");
    }
    const auto& first = data.at(indices.front());
    const auto h = first.pre.dim(1);
    const auto w = first.pre.dim(2);
    const auto n = static_cast<std::int64_t>(indices.size());
    const auto image_size = static_cast<std::size_t>(3 * h * w);
    const auto plane = static_cast<std::size_t>(h * w);
    std::vector<float> pre(static_cast<std::size_t>(n) * image_size);
    std::vector<float> post(pre.size());
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n) * plane);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto& s = data.at(indices[k]);
        if (s.pre.dim(1) != h || s.pre.dim(2) != w) {
            throw DataError(fmt::format("sample '{}' is {}x{}, batch expects {}x{}", s.id, s.pre.dim(1),
                                        s.pre.dim(2), h, w));
        }
        const auto vp = s.pre.to(DType::f32);
        const auto vq = s.post.to(DType::f32);
        std::copy_n(vp.data<float>().begin(), image_size, pre.begin() + k * image_size);
        std::copy_n(vq.data<float>().begin(), image_size, post.begin() + k * image_size);
        std::copy_n(s.label.values().begin(), plane, labels.begin() + k * plane);
    }
    Batch batch;
    const DType dtype = default_dtype();
    batch.pre = Tensor::from_buffer({n, 3, h, w}, std::move(pre)).to(dtype);
    batch.post = Tensor::from_buffer({n, 3, h, w}, std::move(post)).to(dtype);
    batch.mask = BinaryMask::from_values({n, h, w}, std::move(labels));
    batch.labels = batch.mask.to_labels(dtype);
    return batch;
}

BinaryMask mask_slice(const BinaryMask& batch_mask, std::int64_t b) {
    const auto& shape = batch_mask.shape();
    if (shape.size() != 3 || b < 0 || b >= shape[0]) {
        throw UsageError("mask_slice: index out of range");
    }
    const auto plane = shape[1] * shape[2];
    const auto values = batch_mask.values().subspan(static_cast<std::size_t>(b * plane), static_cast<std::size_t>(plane));
    return BinaryMask::from_values({shape[1], shape[2]}, {values.begin(), values.end()});
}

} // namespace changebind
