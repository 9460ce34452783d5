#include <cstring>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "changebind/checkpoint.hpp"
#include "changebind/model.hpp"
#include "support.hpp"

using namespace changebind;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST(Checkpoint, LayoutIsLittleEndianWithHeader) {
    testutil::TempDir dir("ckpt");
    write_checkpoint(dir / "a.ckpt", {{"w", Tensor::from_values({2, 1}, {1.0, -2.0})}});
    const auto b = read_bytes(dir / "a.ckpt");
    const std::vector<unsigned char> expect{
        'C', 'B', 'K', 'P', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, count
        1,   0,   0,   0,   'w',                     // name
        2,   0,   0,   0,                            // rank
        2,   0,   0,   0,   0, 0, 0, 0,              // dim 0
        1,   0,   0,   0,   0, 0, 0, 0,              // dim 1
        0x00, 0x00, 0x80, 0x3f,                      // 1.0f
        0x00, 0x00, 0x00, 0xc0,                      // -2.0f
    };
    ASSERT_EQ(b.size(), expect.size());
    EXPECT_EQ(std::memcmp(b.data(), expect.data(), b.size()), 0);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
    testutil::TempDir dir("ckpt");
    ChangeBindModel a(ModelConfig::desk(), 1);
    ChangeBindModel b(ModelConfig::desk(), 2);
    save_parameters(dir / "m.ckpt", a.parameters());
    load_parameters(dir / "m.ckpt", b.parameters());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        EXPECT_TRUE(bitwise_equal(a.parameters().items()[i].tensor, b.parameters().items()[i].tensor))
            << a.parameters().items()[i].name;
    }
    save_parameters(dir / "m2.ckpt", b.parameters());
    EXPECT_EQ(read_bytes(dir / "m.ckpt"), read_bytes(dir / "m2.ckpt"));
}

TEST(Checkpoint, RejectsCorruptFiles) {
    testutil::TempDir dir("ckpt");
    ChangeBindModel model(ModelConfig::desk(), 1);
    save_parameters(dir / "m.ckpt", model.parameters());
    auto bytes = read_bytes(dir / "m.ckpt");

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    write_bytes(dir / "t.ckpt", truncated);
    EXPECT_THROW(load_parameters(dir / "t.ckpt", model.parameters()), DataError);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    write_bytes(dir / "b.ckpt", bad_magic);
    EXPECT_THROW(read_checkpoint(dir / "b.ckpt"), DataError);

    auto bad_version = bytes;
    bad_version[4] = 7;
    write_bytes(dir / "v.ckpt", bad_version);
    EXPECT_THROW(read_checkpoint(dir / "v.ckpt"), DataError);

    EXPECT_THROW(read_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST(Checkpoint, RejectsMismatchedModels) {
    testutil::TempDir dir("ckpt");
    ChangeBindModel desk(ModelConfig::desk(), 1);
    save_parameters(dir / "m.ckpt", desk.parameters());

    auto wider = ModelConfig::desk();
    wider.encoder.embed_dim = 32;
    ChangeBindModel other(wider, 1);
    EXPECT_THROW(load_parameters(dir / "m.ckpt", other.parameters()), DataError);

    auto tensors = read_checkpoint(dir / "m.ckpt");
    tensors.front().name = "renamed";
    write_checkpoint(dir / "r.ckpt", tensors);
    EXPECT_THROW(load_parameters(dir / "r.ckpt", desk.parameters()), DataError);

    tensors.pop_back();
    write_checkpoint(dir / "s.ckpt", tensors);
    EXPECT_THROW(load_parameters(dir / "s.ckpt", desk.parameters()), DataError);
}
