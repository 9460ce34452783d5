#include <gtest/gtest.h>

#include "changebind/decoder.hpp"
#include "support.hpp"

using namespace changebind;
using testutil::random_tensor;

TEST(Decoder, TwoDoublingsReachImageResolution) {
    Rng rng(1);
    Decoder dec(DecoderConfig{}, rng);
    auto logits = dec.decode({random_tensor({1, 64, 16, 16}, 2)}, std::pair<std::int64_t, std::int64_t>{64, 64});
    EXPECT_EQ(logits.shape(), (Shape{1, 2, 64, 64}));
}

TEST(Decoder, OutputMatchesImageForManyExtents) {
    for (std::int64_t in : {8, 16, 24}) {
        DecoderConfig cfg;
        cfg.in_channels = in;
        for (int k : {2, 4}) {
            cfg.transpose_kernel = k;
            Rng rng(3);
            Decoder dec(cfg, rng);
            for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{1, 1}, {3, 5}, {8, 4}}) {
                auto logits = dec.decode({random_tensor({2, in, h, w}, 4)}, std::pair{4 * h, 4 * w});
                EXPECT_EQ(logits.shape(), (Shape{2, 2, 4 * h, 4 * w}));
            }
        }
    }
}

TEST(Decoder, StageChannelsHalveWithFloor) {
    DecoderConfig cfg;
    cfg.in_channels = 64;
    EXPECT_EQ(cfg.stage_channels(1), 32);
    EXPECT_EQ(cfg.stage_channels(2), 16);
    cfg.in_channels = 16;
    EXPECT_EQ(cfg.stage_channels(2), 8);
    cfg.in_channels = 8;
    EXPECT_EQ(cfg.stage_channels(1), 8);
}

TEST(Decoder, ZeroEncodingAndZeroBiasesGiveZeroLogits) {
    Rng rng(5);
    Decoder dec(DecoderConfig{}, rng);
    auto logits = dec.decode({Tensor::zeros({1, 64, 4, 4})});
    for (double v : logits.to_vector()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Decoder, StrideMismatchIsConfigError) {
    Rng rng(6);
    Decoder dec(DecoderConfig{}, rng);
    EXPECT_THROW(dec.decode({Tensor::zeros({1, 64, 8, 8})}, std::pair<std::int64_t, std::int64_t>{64, 64}),
                 ConfigError);
    EXPECT_THROW(dec.decode({Tensor::zeros({1, 32, 8, 8})}), ShapeError);
    DecoderConfig bad;
    bad.transpose_kernel = 3;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(PredictMask, ArgmaxWithTiesToNoChange) {
    auto logits = Tensor::from_values({1, 2, 1, 3}, {0.2, 0.9, 0.5, 0.9, 0.2, 0.5});
    const auto mask = predict_mask(logits);
    EXPECT_EQ(mask.shape(), (Shape{1, 1, 3}));
    EXPECT_EQ(mask[0], 1);
    EXPECT_EQ(mask[1], 0);
    EXPECT_EQ(mask[2], 0);
}

TEST(PredictMask, RequiresTwoChannels) {
    try {
        predict_mask(Tensor::zeros({1, 3, 2, 2}));
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_EQ(e.axis(), 1);
    }
}

TEST(PredictMask, InvariantToPerPixelShift) {
    auto logits = random_tensor({2, 2, 5, 5}, 7);
    auto shift = random_tensor({2, 1, 5, 5}, 8, -10.0, 10.0);
    auto shifted = add(logits, concat({shift, shift}, 1));
    EXPECT_EQ(predict_mask(logits), predict_mask(shifted));
}

TEST(BinaryMask, ValidatesValues) {
    EXPECT_THROW(BinaryMask::from_values({2}, {0, 2}), DataError);
    EXPECT_THROW(BinaryMask::from_values({3}, {0, 1}), ShapeError);
    auto m = BinaryMask::from_values({2, 2}, {0, 1, 1, 0});
    EXPECT_EQ(m.count_changed(), 2);
    EXPECT_EQ(m.to_labels().to_vector(), (std::vector<double>{0, 1, 1, 0}));
}
