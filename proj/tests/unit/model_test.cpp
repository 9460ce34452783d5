#include <set>

#include <gtest/gtest.h>

#include "changebind/model.hpp"
#include "support.hpp"

using namespace changebind;
using testutil::random_tensor;

TEST(Model, SiameseBranchesShareOneBackbone) {
    ChangeBindModel model(ModelConfig::desk(), 1);
    EXPECT_EQ(&model.branch(Temporal::pre), &model.branch(Temporal::post));
    auto img = random_tensor({1, 3, 64, 64}, 2);
    auto a = model.branch(Temporal::pre).extract_pyramid(img);
    auto b = model.branch(Temporal::post).extract_pyramid(img.clone());
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_TRUE(bitwise_equal(a.levels[i], b.levels[i]));
    }
}

TEST(Model, ParameterNamesAreUniqueAndPrefixed) {
    ChangeBindModel model(ModelConfig::desk(), 1);
    std::set<std::string> names;
    std::set<const void*> storage;
    for (const auto& p : model.parameters()) {
        EXPECT_TRUE(names.insert(p.name).second) << p.name;
        EXPECT_TRUE(storage.insert(p.tensor.impl()).second) << p.name;
        const bool known = p.name.rfind("backbone.", 0) == 0 || p.name.rfind("diff.", 0) == 0 ||
                           p.name.rfind("fuse.", 0) == 0 || p.name.rfind("decoder.", 0) == 0;
        EXPECT_TRUE(known) << p.name;
    }
    EXPECT_NE(model.parameters().find("backbone.stem.conv.weight"), nullptr);
    EXPECT_NE(model.parameters().find("diff.1.cce.weight"), nullptr);
    EXPECT_NE(model.parameters().find("fuse.weight"), nullptr);
}

TEST(Model, LogitsMatchInputResolution) {
    ChangeBindModel model(ModelConfig::desk(), 3);
    for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{64, 64}, {96, 96}, {32, 64}}) {
        auto logits = model.forward(random_tensor({1, 3, h, w}, 4), random_tensor({1, 3, h, w}, 5));
        EXPECT_EQ(logits.shape(), (Shape{1, 2, h, w}));
    }
    EXPECT_THROW(model.forward(Tensor::zeros({1, 3, 64, 64}), Tensor::zeros({1, 3, 32, 32})), ShapeError);
}

TEST(Model, PredictAgreesWithLogits) {
    ChangeBindModel model(ModelConfig::desk(), 6);
    auto pre = random_tensor({2, 3, 32, 32}, 7);
    auto post = random_tensor({2, 3, 32, 32}, 8);
    const auto map = model.predict(pre, post);
    EXPECT_FALSE(map.logits.requires_grad());
    EXPECT_EQ(map.mask, predict_mask(model.forward(pre, post)));
}

TEST(Model, SameSeedSameParameters) {
    ChangeBindModel a(ModelConfig::desk(), 9);
    ChangeBindModel b(ModelConfig::desk(), 9);
    ChangeBindModel c(ModelConfig::desk(), 10);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        EXPECT_TRUE(bitwise_equal(a.parameters().items()[i].tensor, b.parameters().items()[i].tensor));
        any_diff = any_diff || !bitwise_equal(a.parameters().items()[i].tensor, c.parameters().items()[i].tensor);
    }
    EXPECT_TRUE(any_diff);
}

TEST(Model, SampleLogitsIndependentOfBatch) {
    ChangeBindModel model(ModelConfig::desk(), 11);
    auto pre = random_tensor({3, 3, 32, 32}, 12);
    auto post = random_tensor({3, 3, 32, 32}, 13);
    auto batched = model.forward(pre, post);
    auto alone = model.forward(narrow(pre, 0, 1, 1), narrow(post, 0, 1, 1));
    EXPECT_LT(testutil::max_abs_diff(narrow(batched, 0, 1, 1).to_vector(), alone.to_vector()), 1e-5);
}

TEST(Model, ConfigValidation) {
    auto cfg = ModelConfig::desk();
    EXPECT_NO_THROW(cfg.validate());
    cfg.decoder.in_channels = 32;
    EXPECT_THROW(cfg.validate(), ConfigError);
    auto full = ModelConfig::full();
    EXPECT_NO_THROW(full.validate());
    EXPECT_EQ(full.backbone.stage_channels, (std::array<std::int64_t, 4>{64, 128, 256, 512}));
}
