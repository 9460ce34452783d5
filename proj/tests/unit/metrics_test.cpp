#include <random>

#include <gtest/gtest.h>

#include "changebind/metrics.hpp"
#include "support.hpp"

using namespace changebind;

namespace {

BinaryMask random_mask(Shape shape, std::mt19937_64& gen) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) {
        x = static_cast<std::uint8_t>(gen() & 1U);
    }
    return BinaryMask::from_values(std::move(shape), v);
}

} // namespace

TEST(Scores, HandEvaluatedExample) {
    const auto s = scores({50, 10, 10, 930});
    EXPECT_NEAR(s.f1, 0.83333, 5e-6);
    EXPECT_NEAR(s.iou, 0.71429, 5e-6);
    EXPECT_NEAR(s.oa, 0.98, 1e-12);
}

TEST(Scores, PerfectPrediction) {
    const auto s = scores({40, 0, 0, 60});
    EXPECT_EQ(s.f1, 1.0);
    EXPECT_EQ(s.iou, 1.0);
    EXPECT_EQ(s.oa, 1.0);
}

TEST(Scores, NoChangeAnywhereScoresOne) {
    const auto s = scores({0, 0, 0, 100});
    EXPECT_EQ(s.f1, 1.0);
    EXPECT_EQ(s.iou, 1.0);
    EXPECT_EQ(s.oa, 1.0);
    EXPECT_THROW(scores({}), UsageError);
}

TEST(Scores, ReportedTablePairsAreConsistent) {
    // Published (F1, IoU) pairs for the two benchmark datasets.
    for (auto [f1, iou] : {std::pair{0.9186, 0.8494}, std::pair{0.9765, 0.9541}}) {
        EXPECT_NEAR(f1 / (2.0 - f1), iou, 5e-5);
    }
}

TEST(Scores, IouF1IdentityOverRandomCounts) {
    std::mt19937_64 gen(1);
    for (int i = 0; i < 2000; ++i) {
        ConfusionCounts c{static_cast<std::int64_t>(gen() % 1000), static_cast<std::int64_t>(gen() % 1000),
                          static_cast<std::int64_t>(gen() % 1000), static_cast<std::int64_t>(gen() % 1000)};
        if (c.tp + c.fp + c.fn == 0) {
            continue;
        }
        const auto s = scores(c);
        EXPECT_NEAR(s.iou, s.f1 / (2.0 - s.f1), 1e-15);
        EXPECT_LE(0.0, s.iou);
        EXPECT_LE(s.iou, s.f1);
        EXPECT_LE(s.f1, 1.0);
    }
}

TEST(Confusion, AllOnesAndTotalMiss) {
    const BinaryMask ones = BinaryMask::from_values({10, 10}, std::vector<std::uint8_t>(100, 1));
    const BinaryMask zeros({10, 10});
    EXPECT_EQ(confusion(ones, ones), (ConfusionCounts{100, 0, 0, 0}));
    EXPECT_EQ(confusion(zeros, ones), (ConfusionCounts{0, 0, 100, 0}));
    EXPECT_EQ(confusion(ones, zeros), (ConfusionCounts{0, 100, 0, 0}));
}

TEST(Confusion, MatchesDoubleLoopOracle) {
    std::mt19937_64 gen(2);
    const auto pred = random_mask({16, 16}, gen);
    const auto gt = random_mask({16, 16}, gen);
    ConfusionCounts expect;
    for (std::int64_t y = 0; y < 16; ++y) {
        for (std::int64_t x = 0; x < 16; ++x) {
            const bool p = pred[y * 16 + x] == 1;
            const bool g = gt[y * 16 + x] == 1;
            expect.tp += p && g;
            expect.fp += p && !g;
            expect.fn += !p && g;
            expect.tn += !p && !g;
        }
    }
    const auto got = confusion(pred, gt);
    EXPECT_EQ(got, expect);
    EXPECT_EQ(got.total(), 256);
}

TEST(Confusion, ShapeAndValueErrors) {
    EXPECT_THROW(confusion(BinaryMask({2, 2}), BinaryMask({2, 3})), ShapeError);
    const std::vector<std::uint8_t> a{0, 1, 2};
    const std::vector<std::uint8_t> b{0, 1, 1};
    EXPECT_THROW(confusion(std::span<const std::uint8_t>(a), std::span<const std::uint8_t>(b)), DataError);
}

TEST(Confusion, MicroAggregationSumsCounts) {
    ConfusionCounts a{1, 2, 3, 4};
    a += ConfusionCounts{10, 20, 30, 40};
    EXPECT_EQ(a, (ConfusionCounts{11, 22, 33, 44}));
}

TEST(Report, FourDecimalFields) {
    EXPECT_EQ(format_metrics_report("val", 3, {50, 10, 10, 930}),
              "split=val n_images=3 tp=50 fp=10 fn=10 tn=930 f1=0.8333 iou=0.7143 oa=0.9800");
}

TEST(Scores, ReportedPairsAgreeWithinTheirRounding) {
    // Both published figures carry four decimals, so the exact F1 lies within
    // half a unit of the last place and the IoU it implies must as well.
    for (auto [f1, iou] : {std::pair{0.9186, 0.8494}, std::pair{0.9765, 0.9541}}) {
        const double lo = (f1 - 5e-5) / (2.0 - (f1 - 5e-5));
        const double hi = (f1 + 5e-5) / (2.0 - (f1 + 5e-5));
        EXPECT_LT(lo, iou + 5e-5);
        EXPECT_GT(hi, iou - 5e-5);
    }
}
