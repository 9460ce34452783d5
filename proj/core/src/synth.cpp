#include "changebind/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "changebind/error.hpp"
#include "changebind/image_io.hpp"
#include "changebind/init.hpp"

namespace changebind {

namespace fs = std::filesystem;

namespace {

using Color = std::array<double, 3>;

struct Shape2D {
    bool ellipse;
    double cx, cy, rx, ry;
    Color color;

    bool covers(double x, double y) const {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        return ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
    }
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct Background {
    Color base;
    std::array<double, 3> fx, fy, phase;
};

Color background_at(const Background& bg, double x, double y, int size) {
    Color c;
    for (int k = 0; k < 3; ++k) {
        const double t = 2.0 * 3.14159265358979323846 / size;
        c[k] = bg.base[k] + 0.06 * std::sin(t * (bg.fx[k] * x + bg.fy[k] * y) + bg.phase[k]) +
               0.04 * std::sin(t * (bg.fy[k] * x - bg.fx[k] * y) * 2.0 + bg.phase[k]);
    }
    return c;
}

Shape2D random_shape(Rng& rng, int size, const Color& reference) {
    Shape2D s;
    s.ellipse = rng.uniform() < 0.5;
    const double lo = size / 16.0;
    const double hi = size / 6.0;
    s.rx = rng.uniform(lo, hi);
    s.ry = rng.uniform(lo, hi);
    s.cx = rng.uniform(s.rx, size - s.rx);
    s.cy = rng.uniform(s.ry, size - s.ry);
    for (auto& c : s.color) {
        c = rng.uniform();
    }
    double contrast = 0.0;
    for (int k = 0; k < 3; ++k) {
        contrast += std::abs(s.color[k] - reference[k]) / 3.0;
    }
    if (contrast < 0.3) {
        for (int k = 0; k < 3; ++k) {
            s.color[k] = reference[k] > 0.5 ? reference[k] - 0.45 : reference[k] + 0.45;
        }
    }
    return s;
}

Image render(const Background& bg, const std::vector<const Shape2D*>& shapes, int size, Rng& rng, double jitter,
             double noise) {
    const double brightness = 1.0 + rng.uniform(-jitter, jitter);
    Image image;
    image.width = size;
    image.height = size;
    image.channels = 3;
    image.pixels.resize(static_cast<std::size_t>(size) * size * 3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            Color c = background_at(bg, px, py, size);
            for (const auto* s : shapes) {
                if (s->covers(px, py)) {
                    c = s->color;
                }
            }
            for (int k = 0; k < 3; ++k) {
                const double v = std::clamp(c[k] * brightness + noise * rng.normal(), 0.0, 1.0);
                image.pixels[(static_cast<std::size_t>(y) * size + x) * 3 + k] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return image;
}

} // namespace

void SynthConfig::validate() const {
    if (n < 1) {
        throw ConfigError(fmt::format("synth: n must be >= 1, got {}", n));
    }
    if (size < 32 || size % 32 != 0) {
        throw ConfigError(fmt::format("synth: size {} must be a positive multiple of 32", size));
    }
    if (shapes_per_image < 0 || change_fraction < 0.0 || change_fraction > 1.0 || jitter < 0.0 || jitter >= 1.0 ||
        noise < 0.0) {
        throw ConfigError("synth: shapes_per_image >= 0, change_fraction in [0, 1], jitter in [0, 1), noise >= 0");
    }
    if (split.empty()) {
        throw ConfigError("synth: split name is empty");
    }
}

SynthSample synth_sample(const SynthConfig& config, std::uint64_t seed, int index) {
    config.validate();
    const int changes = static_cast<int>(std::lround(config.change_fraction * config.shapes_per_image));
    const int size = config.size;
    Rng rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index))));
    Background bg;
    for (int k = 0; k < 3; ++k) {
        bg.base[k] = rng.uniform(0.25, 0.65);
        bg.fx[k] = static_cast<double>(rng.integer(1, 3));
        bg.fy[k] = static_cast<double>(rng.integer(1, 3));
        bg.phase[k] = rng.uniform(0.0, 6.283185307179586);
    }

    int removed = 0;
    int added = 0;
    for (int c = 0; c < changes; ++c) {
        if (removed < config.shapes_per_image && rng.uniform() < 0.5) {
            ++removed;
        } else {
            ++added;
        }
    }
    std::vector<Shape2D> kept;
    std::vector<Shape2D> gone;
    std::vector<Shape2D> fresh;
    for (int s = 0; s < config.shapes_per_image; ++s) {
        (s < removed ? gone : kept).push_back(random_shape(rng, size, bg.base));
    }
    for (int s = 0; s < added; ++s) {
        fresh.push_back(random_shape(rng, size, bg.base));
    }

    // Changed shapes are drawn last so they are visible in their date.
    std::vector<const Shape2D*> pre_scene;
    std::vector<const Shape2D*> post_scene;
    for (const auto& s : kept) {
        pre_scene.push_back(&s);
        post_scene.push_back(&s);
    }
    for (const auto& s : gone) {
        pre_scene.push_back(&s);
    }
    for (const auto& s : fresh) {
        post_scene.push_back(&s);
    }

    SynthSample out;
    out.pre = render(bg, pre_scene, size, rng, config.jitter, config.noise);
    out.post = render(bg, post_scene, size, rng, config.jitter, config.noise);

    // Label: rasterized union of shapes present in exactly one date.
    out.label.width = size;
    out.label.height = size;
    out.label.channels = 1;
    out.label.pixels.assign(static_cast<std::size_t>(size) * size, 0);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            bool changed = false;
            for (const auto* group : {&gone, &fresh}) {
                for (const auto& s : *group) {
                    changed = changed || s.covers(x + 0.5, y + 0.5);
                }
            }
            out.label.pixels[static_cast<std::size_t>(y) * size + x] = changed ? 255 : 0;
        }
    }
    return out;
}

void synth_generate(const SynthConfig& config, std::uint64_t seed, const fs::path& root) {
    config.validate();
    const fs::path base = root / config.split;
    for (const char* dir : {"A", "B", "label"}) {
        fs::create_directories(base / dir);
    }
    for (int i = 0; i < config.n; ++i) {
        const SynthSample sample = synth_sample(config, seed, i);
        const auto file = synth_file_name(i);
        write_png(base / "A" / file, sample.pre);
        write_png(base / "B" / file, sample.post);
        write_png(base / "label" / file, sample.label);
    }
}

std::string synth_file_name(int index) {
    return fmt::format("{:04d}.png", index);
}

} // namespace changebind
