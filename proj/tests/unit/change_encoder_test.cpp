#include <random>

#include <gtest/gtest.h>

#include "ablation_support.hpp"
#include "changebind/change_encoder.hpp"
#include "changebind/model.hpp"
#include "support.hpp"

using namespace changebind;
using testutil::random_tensor;

namespace {

EncoderConfig small_config(EncoderFlags flags) {
    EncoderConfig cfg;
    cfg.embed_dim = 8;
    cfg.attn_dim = 8;
    cfg.heads = 2;
    cfg.out_dim = 8;
    cfg.flags = flags;
    return cfg;
}

FeaturePyramid random_pyramid(std::int64_t b, const std::array<std::int64_t, 4>& ch, std::int64_t s1,
                              std::uint64_t seed) {
    FeaturePyramid p;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto e = s1 >> i;
        p.levels[i] = random_tensor({b, ch[i], e, e}, seed + i);
    }
    return p;
}

} // namespace

TEST(DifferenceModule, ShapeLaw) {
    Rng rng(1);
    EncoderConfig cfg;
    DifferenceModule m(64, cfg, rng);
    auto y = m.forward(random_tensor({1, 64, 16, 16}, 2), random_tensor({1, 64, 16, 16}, 3));
    EXPECT_EQ(y.shape(), (Shape{1, 64, 16, 16}));
    ParameterSet set;
    m.register_parameters(set, "");
    // X-hat carries both dates: 128 input channels to the CCE conv and the ACE projection.
    EXPECT_EQ(set.find("cce.weight")->shape(), (Shape{64, 128, 3, 3}));
    EXPECT_EQ(set.find("ace.in_proj.weight")->shape(), (Shape{64, 128}));
    EXPECT_EQ(set.find("fuse.weight")->shape(), (Shape{64, 128, 3, 3}));
}

TEST(DifferenceModule, SinglePathFuseTakesEChannels) {
    for (auto flags : {EncoderFlags{true, true, false, false}, EncoderFlags{true, false, true, false},
                       EncoderFlags{false, false, false, true}}) {
        Rng rng(1);
        DifferenceModule m(8, small_config(flags), rng);
        ParameterSet set;
        m.register_parameters(set, "");
        EXPECT_EQ(set.find("fuse.weight")->dim(1), 8) << flags.label();
        EXPECT_EQ(m.forward(random_tensor({1, 8, 4, 4}, 2), random_tensor({1, 8, 4, 4}, 3)).shape(),
                  (Shape{1, 8, 4, 4}));
    }
}

TEST(DifferenceModule, IdenticalInputsAreSymmetric) {
    Rng rng(4);
    DifferenceModule m(8, small_config({}), rng);
    auto x = random_tensor({1, 8, 4, 4}, 5);
    auto y = x.clone();
    EXPECT_TRUE(bitwise_equal(m.forward(x, y), m.forward(y, x)));
}

TEST(DifferenceModule, Errors) {
    EncoderFlags none{true, false, false, false};
    EXPECT_THROW(none.validate(), ConfigError);
    Rng rng(6);
    EXPECT_THROW(DifferenceModule(8, small_config(none), rng), ConfigError);
    DifferenceModule m(8, small_config({}), rng);
    EXPECT_THROW(m.forward(Tensor::zeros({1, 8, 4, 4}), Tensor::zeros({1, 8, 4, 2})), ShapeError);
    EXPECT_THROW(m.forward(Tensor::zeros({1, 6, 4, 4}), Tensor::zeros({1, 6, 4, 4})), ShapeError);
}

TEST(DifferenceModule, CceOnlyIsTranslationCovariantInTheInterior) {
    Rng rng(7);
    DifferenceModule m(4, small_config({true, true, false, false}), rng);
    const std::int64_t n = 12;
    auto pre = random_tensor({1, 4, n, n}, 8);
    auto post = random_tensor({1, 4, n, n}, 9);
    // Shift both dates down by one row and right by one column.
    auto shift = [&](const Tensor& x, std::uint64_t seed) {
        auto fill = random_tensor({1, 4, n, n}, seed);
        for (std::int64_t c = 0; c < 4; ++c) {
            for (std::int64_t h = 1; h < n; ++h) {
                for (std::int64_t w = 1; w < n; ++w) {
                    fill.set((c * n + h) * n + w, x.at((c * n + h - 1) * n + w - 1));
                }
            }
        }
        return fill;
    };
    auto y = m.forward(pre, post);
    auto ys = m.forward(shift(pre, 10), shift(post, 11));
    const std::int64_t crop = 3;
    for (std::int64_t c = 0; c < 8; ++c) {
        for (std::int64_t h = crop; h < n - crop; ++h) {
            for (std::int64_t w = crop; w < n - crop; ++w) {
                EXPECT_NEAR(ys.at((c * n + h) * n + w), y.at((c * n + h - 1) * n + w - 1), 1e-5);
            }
        }
    }
}

TEST(ChangeEncoder, DeskEncodingAtStrideFour) {
    const auto cfg = ModelConfig::desk();
    ChangeBindModel model(cfg, 1);
    auto enc = model.encode(random_tensor({1, 3, 64, 64}, 2), random_tensor({1, 3, 64, 64}, 3));
    EXPECT_EQ(enc.x_bar.shape(), (Shape{1, cfg.encoder.out_dim, 16, 16}));
}

TEST(ChangeEncoder, MergeInputWidthFollowsMsf) {
    const std::array<std::int64_t, 4> ch{4, 8, 8, 8};
    for (bool msf : {true, false}) {
        Rng rng(1);
        EncoderConfig cfg = small_config({msf, true, true, false});
        ChangeEncoder enc(ch, cfg, rng);
        ParameterSet set;
        enc.register_parameters(set);
        EXPECT_EQ(set.find("fuse.weight")->dim(1), msf ? 4 * cfg.embed_dim : cfg.embed_dim);
        auto out = enc.encode(random_pyramid(1, ch, 16, 2), random_pyramid(1, ch, 16, 7));
        EXPECT_EQ(out.x_bar.shape(), (Shape{1, cfg.out_dim, 16, 16}));
    }
}

TEST(ChangeEncoder, ConstantEncodingsGiveConstantInterior) {
    Rng rng(2);
    const std::array<std::int64_t, 4> ch{4, 4, 4, 4};
    ChangeEncoder enc(ch, small_config({}), rng);
    std::array<Tensor, 4> encodings;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto e = 16 >> s;
        encodings[s] = Tensor::full({1, 8, e, e}, 0.25 * static_cast<double>(s + 1));
    }
    auto x = enc.fuse_scales(encodings).x_bar;
    ASSERT_EQ(x.shape(), (Shape{1, 8, 16, 16}));
    // Zero padding of the merge conv only touches the one-pixel border.
    for (std::int64_t c = 0; c < 8; ++c) {
        const double ref = x.at((c * 16 + 1) * 16 + 1);
        for (std::int64_t h = 1; h < 15; ++h) {
            for (std::int64_t w = 1; w < 15; ++w) {
                EXPECT_NEAR(x.at((c * 16 + h) * 16 + w), ref, 1e-6);
            }
        }
    }
}

TEST(ChangeEncoder, FuseScalesBatchMismatchIsShapeError) {
    Rng rng(3);
    ChangeEncoder enc({4, 4, 4, 4}, small_config({}), rng);
    std::array<Tensor, 4> encodings;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto e = 16 >> s;
        encodings[s] = Tensor::zeros({s == 2 ? 2 : 1, 8, e, e});
    }
    EXPECT_THROW(enc.fuse_scales(encodings), ShapeError);
}

TEST(ChangeEncoder, PostPerturbationReachesEncoding) {
    ChangeBindModel model(ModelConfig::desk(), 4);
    auto pre = random_tensor({1, 3, 64, 64}, 5);
    auto post = random_tensor({1, 3, 64, 64}, 6);
    auto base = model.encode(pre, post).x_bar;
    auto bumped = post.clone();
    bumped.set((1 * 64 + 30) * 64 + 17, bumped.at((1 * 64 + 30) * 64 + 17) + 0.5);
    auto moved = model.encode(pre, bumped).x_bar;
    EXPECT_FALSE(bitwise_equal(base, moved));
}

TEST(ChangeEncoder, AttentionRowsNormalizedAtEveryScale) {
    ChangeBindModel model(ModelConfig::desk(), 7);
    model.encode(random_tensor({1, 3, 64, 64}, 8), random_tensor({1, 3, 64, 64}, 9));
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& a = model.encoder().difference_module(s).last_attention();
        ASSERT_TRUE(a.defined()) << "scale " << s + 1;
        const auto n = a.dim(-1);
        const auto v = a.to_vector();
        for (std::size_t row = 0; row < v.size() / static_cast<std::size_t>(n); ++row) {
            double total = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                total += v[row * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
            }
            ASSERT_NEAR(total, 1.0, 1e-5) << "scale " << s + 1;
        }
    }
}

TEST(ChangeEncoder, ShapeLawOverRandomConfigs) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 8; ++trial) {
        ModelConfig cfg = ModelConfig::desk();
        cfg.backbone.stem_channels = 8;
        cfg.backbone.stage_channels = {8, 8, 16, 16};
        const int heads = 1 << (gen() % 3);
        cfg.encoder.heads = heads;
        cfg.encoder.attn_dim = heads * 4 * static_cast<std::int64_t>(1 + gen() % 2);
        cfg.encoder.embed_dim = 4 * static_cast<std::int64_t>(1 + gen() % 3);
        cfg.encoder.out_dim = 8 * static_cast<std::int64_t>(1 + gen() % 2);
        cfg.decoder.in_channels = cfg.encoder.out_dim;
        cfg.encoder.flags = ablation_rows()[gen() % 5].flags;
        const std::int64_t h = 32 * static_cast<std::int64_t>(1 + gen() % 2);
        const std::int64_t w = 32 * static_cast<std::int64_t>(1 + gen() % 2);
        ChangeBindModel model(cfg, static_cast<std::uint64_t>(trial));
        auto pre = random_tensor({1, 3, h, w}, 12);
        auto post = random_tensor({1, 3, h, w}, 13);
        EXPECT_EQ(model.encode(pre, post).x_bar.shape(), (Shape{1, cfg.encoder.out_dim, h / 4, w / 4}));
        EXPECT_EQ(model.forward(pre, post).shape(), (Shape{1, 2, h, w}));
    }
}

TEST(Ablation, RowsMatchTableLabels) {
    const auto& rows = ablation_rows();
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].label, "Baseline");
    EXPECT_EQ(rows[1].label, "Baseline + MSF");
    EXPECT_EQ(rows[2].label, "Baseline + MSF + CCE");
    EXPECT_EQ(rows[3].label, "Baseline + MSF + ACE");
    EXPECT_EQ(rows[4].label, "Baseline + MSF + CCE + ACE (Ours)");
    EXPECT_EQ(rows[4].flags, (EncoderFlags{true, true, true, false}));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(rows[i].flags.label(), rows[i].label);
        for (std::size_t j = i + 1; j < 5; ++j) {
            EXPECT_FALSE(rows[i].flags == rows[j].flags);
        }
    }
}

TEST(Ablation, DisabledPathsReceiveExactlyZeroGradient) {
    for (const auto& row : ablation_rows()) {
        ModelConfig cfg = ModelConfig::desk();
        cfg.encoder.flags = row.flags;
        ChangeBindModel model(cfg, 3);
        // 64x64 keeps more than one token at the coarsest scale; a single
        // token gives a constant softmax and no query/key gradient.
        auto labels = Tensor::zeros({2, 64, 64});
        for (std::int64_t i = 0; i < labels.numel(); i += 3) {
            labels.set(i, 1.0);
        }
        cross_entropy_loss(model.forward(random_tensor({2, 3, 64, 64}, 4), random_tensor({2, 3, 64, 64}, 5)), labels)
            .backward();
        const auto r = testutil::check_partition(model);
        EXPECT_TRUE(r.disabled_with_gradient.empty()) << row.label << ": " << r.disabled_with_gradient.front();
        EXPECT_TRUE(r.enabled_without_gradient.empty()) << row.label << ": " << r.enabled_without_gradient.front();
        EXPECT_GT(r.enabled, 0u);
        if (row.flags != EncoderFlags{true, true, true, true}) {
            EXPECT_GT(r.disabled, 0u) << row.label;
        }
    }
}
