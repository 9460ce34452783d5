#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "changebind/dataset.hpp"
#include "changebind/image_io.hpp"
#include "changebind/ops.hpp"
#include "changebind/synth.hpp"
#include "support.hpp"

using namespace changebind;
namespace fs = std::filesystem;

namespace {

Image gray(int w, int h, std::vector<std::uint8_t> px) {
    return {w, h, 1, std::move(px)};
}

Image rgb(int w, int h, std::uint8_t v) {
    return {w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h * 3), v)};
}

void write_triplet(const fs::path& split, const std::string& id, int size, std::uint8_t label_value) {
    for (const char* d : {"A", "B", "label"}) {
        fs::create_directories(split / d);
    }
    write_png(split / "A" / (id + ".png"), rgb(size, size, 10));
    write_png(split / "B" / (id + ".png"), rgb(size, size, 20));
    write_png(split / "label" / (id + ".png"),
              gray(size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size), label_value)));
}

std::vector<char> bytes_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(LoadDataset, EnumeratesTripletsInIdOrder) {
    testutil::TempDir dir("ds");
    for (const char* id : {"c", "a", "b"}) {
        write_triplet(dir / "train", id, 4, 255);
    }
    const auto data = load_dataset(dir.path(), "train");
    ASSERT_EQ(data.size(), 3u);
    EXPECT_EQ(data[0].id, "a");
    EXPECT_EQ(data[1].id, "b");
    EXPECT_EQ(data[2].id, "c");
    EXPECT_EQ(data[0].pre.shape(), (Shape{3, 4, 4}));
    EXPECT_FLOAT_EQ(static_cast<float>(data[0].pre.at(0)), 10.0f / 255.0f);
    EXPECT_FLOAT_EQ(static_cast<float>(data[0].post.at(0)), 20.0f / 255.0f);
    EXPECT_EQ(data[0].label.count_changed(), 16);
}

TEST(LoadDataset, LabelsThresholdAt128) {
    testutil::TempDir dir("ds");
    write_triplet(dir / "train", "x", 2, 0);
    write_png(dir / "train" / "label" / "x.png", gray(2, 2, {255, 0, 127, 128}));
    const auto data = load_dataset(dir.path(), "train");
    EXPECT_EQ(data[0].label, BinaryMask::from_values({2, 2}, {1, 0, 0, 1}));
}

TEST(LoadDataset, MissingCounterpartNamesTheFile) {
    testutil::TempDir dir("ds");
    write_triplet(dir / "train", "p", 4, 0);
    write_triplet(dir / "train", "q", 4, 0);
    fs::remove(dir / "train" / "B" / "q.png");
    try {
        load_dataset(dir.path(), "train");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find((fs::path("B") / "q.png").string()), std::string::npos) << e.what();
    }
}

TEST(LoadDataset, SizeMismatchIsDataError) {
    testutil::TempDir dir("ds");
    write_triplet(dir / "train", "p", 4, 0);
    write_png(dir / "train" / "B" / "p.png", rgb(4, 8, 1));
    EXPECT_THROW(load_dataset(dir.path(), "train"), DataError);
    EXPECT_THROW(load_dataset(dir.path(), "val"), DataError);
}

TEST(MaskPng, RoundTripUses0And255) {
    testutil::TempDir dir("mask");
    auto m = BinaryMask::from_values({2, 3}, {1, 0, 1, 0, 0, 1});
    write_mask_png(dir / "m.png", m);
    const auto img = read_png(dir / "m.png", 1);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{255, 0, 255, 0, 0, 255}));
    EXPECT_EQ(read_mask_png(dir / "m.png"), m);
}

TEST(Synth, EnumeratesRequestedTriplets) {
    testutil::TempDir dir("synth");
    SynthConfig cfg;
    cfg.n = 8;
    cfg.size = 64;
    synth_generate(cfg, 3, dir.path());
    const auto data = load_dataset(dir.path(), "train");
    ASSERT_EQ(data.size(), 8u);
    std::int64_t changed = 0;
    for (const auto& s : data) {
        EXPECT_EQ(s.pre.shape(), (Shape{3, 64, 64}));
        EXPECT_EQ(s.label.shape(), (Shape{64, 64}));
        changed += s.label.count_changed();
    }
    EXPECT_GT(changed, 0);
}

TEST(Synth, SameSeedGivesIdenticalFiles) {
    testutil::TempDir a("synth_a");
    testutil::TempDir b("synth_b");
    SynthConfig cfg;
    cfg.n = 4;
    synth_generate(cfg, 7, a.path());
    synth_generate(cfg, 7, b.path());
    for (const char* d : {"A", "B", "label"}) {
        for (int i = 0; i < 4; ++i) {
            const auto f = fs::path("train") / d / synth_file_name(i);
            EXPECT_EQ(bytes_of(a / f.string()), bytes_of(b / f.string())) << f;
        }
    }
    testutil::TempDir c("synth_c");
    synth_generate(cfg, 8, c.path());
    EXPECT_NE(bytes_of(a / "train/A/0000.png"), bytes_of(c / "train/A/0000.png"));
}

TEST(Synth, NoChangeMeansEmptyLabelsAndNuisanceOnlyDifferences) {
    SynthConfig cfg;
    cfg.change_fraction = 0.0;
    for (int i = 0; i < 4; ++i) {
        const auto s = synth_sample(cfg, 1, i);
        for (auto v : s.label.pixels) {
            EXPECT_EQ(v, 0);
        }
    }
    cfg.jitter = 0.0;
    cfg.noise = 0.0;
    for (int i = 0; i < 4; ++i) {
        const auto s = synth_sample(cfg, 1, i);
        EXPECT_EQ(s.pre.pixels, s.post.pixels);
    }
}

TEST(Synth, LabelRoundTripIsBitExact) {
    testutil::TempDir dir("synth_rt");
    SynthConfig cfg;
    cfg.n = 6;
    cfg.change_fraction = 1.0;
    synth_generate(cfg, 11, dir.path());
    const auto data = load_dataset(dir.path(), "train");
    ASSERT_EQ(data.size(), 6u);
    for (int i = 0; i < 6; ++i) {
        const auto s = synth_sample(cfg, 11, i);
        std::vector<std::uint8_t> expect;
        for (auto v : s.label.pixels) {
            expect.push_back(v == 255 ? 1 : 0);
        }
        EXPECT_EQ(data[static_cast<std::size_t>(i)].label,
                  BinaryMask::from_values({cfg.size, cfg.size}, expect));
        EXPECT_GT(data[static_cast<std::size_t>(i)].label.count_changed(), 0);
    }
}

TEST(Synth, RejectsBadConfig) {
    SynthConfig cfg;
    cfg.size = 48;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.change_fraction = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Batch, StacksSamplesInIndexOrder) {
    testutil::TempDir dir("batch");
    SynthConfig cfg;
    cfg.n = 3;
    cfg.size = 32;
    synth_generate(cfg, 2, dir.path());
    const auto data = load_dataset(dir.path(), "train");
    const std::vector<std::size_t> idx{2, 0};
    const auto batch = make_batch(data, idx);
    EXPECT_EQ(batch.pre.shape(), (Shape{2, 3, 32, 32}));
    EXPECT_EQ(batch.labels.shape(), (Shape{2, 32, 32}));
    EXPECT_TRUE(bitwise_equal(narrow(batch.pre, 0, 0, 1), reshape(data[2].pre, {1, 3, 32, 32})));
    EXPECT_EQ(mask_slice(batch.mask, 1), data[0].label);
}
