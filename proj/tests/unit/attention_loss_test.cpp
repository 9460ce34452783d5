#include <cmath>

#include <gtest/gtest.h>

#include "changebind/ops.hpp"
#include "support.hpp"

using namespace changebind;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

Tensor eye(std::int64_t d) {
    auto t = Tensor::zeros({d, d});
    for (std::int64_t i = 0; i < d; ++i) {
        t.set(i * d + i, 1.0);
    }
    return t;
}

AttentionParams identity_params(std::int64_t d, int heads) {
    return {heads, eye(d), eye(d), eye(d), eye(d)};
}

/// y = x W^T for one token matrix x [N, D] and W [D, D].
std::vector<double> project(const std::vector<double>& x, const Tensor& w, std::int64_t n, std::int64_t d) {
    std::vector<double> y(static_cast<std::size_t>(n * d), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t o = 0; o < d; ++o) {
            double s = 0;
            for (std::int64_t k = 0; k < d; ++k) {
                s += x[static_cast<std::size_t>(i * d + k)] * w.at(o * d + k);
            }
            y[static_cast<std::size_t>(i * d + o)] = s;
        }
    }
    return y;
}

} // namespace

TEST(Mhsa, SingleTokenPassesThrough) {
    auto x = random_tensor({1, 1, 6}, 1);
    auto y = mhsa(x, identity_params(6, 1));
    EXPECT_LT(max_abs_diff(y.to_vector(), x.to_vector()), 1e-7);
}

TEST(Mhsa, IdenticalTokensGetEqualWeights) {
    auto row = testutil::random_values(4, 2);
    std::vector<double> v(row);
    v.insert(v.end(), row.begin(), row.end());
    Tensor weights;
    mhsa(Tensor::from_values({1, 2, 4}, v), identity_params(4, 1), &weights);
    EXPECT_EQ(weights.shape(), (Shape{1, 1, 2, 2}));
    for (double w : weights.to_vector()) {
        EXPECT_EQ(w, 0.5);
    }
}

TEST(Mhsa, MatchesLoopOracle) {
    const std::int64_t n = 4, d = 8;
    const int heads = 2;
    const std::int64_t hd = d / heads;
    auto x = random_tensor({1, n, d}, 3);
    AttentionParams p{heads, random_tensor({d, d}, 4), random_tensor({d, d}, 5), random_tensor({d, d}, 6),
                      random_tensor({d, d}, 7)};
    Tensor weights;
    auto y = mhsa(x, p, &weights);

    const auto xs = x.to_vector();
    const auto q = project(xs, p.w_q, n, d);
    const auto k = project(xs, p.w_k, n, d);
    const auto v = project(xs, p.w_v, n, d);
    std::vector<double> concat(static_cast<std::size_t>(n * d), 0.0);
    for (int h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < n; ++i) {
            std::vector<double> score(static_cast<std::size_t>(n));
            double total = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                double s = 0;
                for (std::int64_t c = 0; c < hd; ++c) {
                    s += q[static_cast<std::size_t>(i * d + h * hd + c)] * k[static_cast<std::size_t>(j * d + h * hd + c)];
                }
                score[static_cast<std::size_t>(j)] = std::exp(s / std::sqrt(static_cast<double>(hd)));
                total += score[static_cast<std::size_t>(j)];
            }
            for (std::int64_t j = 0; j < n; ++j) {
                const double a = score[static_cast<std::size_t>(j)] / total;
                EXPECT_NEAR(weights.at((h * n + i) * n + j), a, 1e-5);
                for (std::int64_t c = 0; c < hd; ++c) {
                    concat[static_cast<std::size_t>(i * d + h * hd + c)] += a * v[static_cast<std::size_t>(j * d + h * hd + c)];
                }
            }
        }
    }
    const auto expect = project(concat, p.w_o, n, d);
    EXPECT_LT(max_abs_diff(y.to_vector(), expect), 1e-5);
}

TEST(Mhsa, AttentionRowsSumToOne) {
    auto x = random_tensor({2, 9, 8}, 8, -3.0, 3.0);
    AttentionParams p{4, random_tensor({8, 8}, 9), random_tensor({8, 8}, 10), random_tensor({8, 8}, 11),
                      random_tensor({8, 8}, 12)};
    Tensor weights;
    mhsa(x, p, &weights);
    const auto w = weights.to_vector();
    for (std::size_t row = 0; row < w.size() / 9; ++row) {
        double s = 0;
        for (std::size_t j = 0; j < 9; ++j) {
            s += w[row * 9 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Mhsa, HeadsMustDivideModelDim) {
    EXPECT_THROW(mhsa(Tensor::zeros({1, 2, 6}), identity_params(6, 4)), ConfigError);
    EXPECT_THROW(mhsa(Tensor::zeros({1, 2, 5}), identity_params(6, 2)), ShapeError);
}

TEST(GroupNorm, MatchesPerSampleOracle) {
    DTypeScope f64(DType::f64);
    auto x = random_tensor({2, 4, 3, 3}, 13, -2.0, 5.0);
    auto gamma = random_tensor({4}, 14);
    auto beta = random_tensor({4}, 15);
    auto y = group_norm(x, 2, gamma, beta, 1e-5);
    for (int b = 0; b < 2; ++b) {
        for (int g = 0; g < 2; ++g) {
            double m = 0, v = 0;
            for (int i = 0; i < 18; ++i) {
                m += x.at(b * 36 + g * 18 + i);
            }
            m /= 18;
            for (int i = 0; i < 18; ++i) {
                const double dlt = x.at(b * 36 + g * 18 + i) - m;
                v += dlt * dlt;
            }
            v /= 18;
            for (int i = 0; i < 18; ++i) {
                const int c = g * 2 + i / 9;
                const double expect = (x.at(b * 36 + g * 18 + i) - m) / std::sqrt(v + 1e-5) * gamma.at(c) + beta.at(c);
                EXPECT_NEAR(y.at(b * 36 + g * 18 + i), expect, 1e-12);
            }
        }
    }
    EXPECT_THROW(group_norm(x, 3, gamma, beta, 1e-5), ConfigError);
}

TEST(CrossEntropy, UniformLogitsGiveLn2) {
    auto logits = Tensor::full({2, 2, 3, 3}, 0.3);
    auto labels = Tensor::zeros({2, 3, 3});
    labels.set(5, 1.0);
    EXPECT_NEAR(cross_entropy_loss(logits, labels).item(), std::log(2.0), 1e-7);
}

TEST(CrossEntropy, SaturatedCorrectPredictionIsNearZero) {
    DTypeScope f64(DType::f64);
    auto labels = Tensor::from_values({1, 1, 2}, {0.0, 1.0});
    auto logits = Tensor::from_values({1, 2, 1, 2}, {30.0, -30.0, -30.0, 30.0});
    const double loss = cross_entropy_loss(logits, labels).item();
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, 1e-9);
}

TEST(CrossEntropy, MatchesPerPixelOracle) {
    auto logits = random_tensor({1, 2, 3, 3}, 16, -3.0, 3.0);
    std::vector<double> lv;
    for (int i = 0; i < 9; ++i) {
        lv.push_back(i % 3 == 0 ? 1.0 : 0.0);
    }
    auto labels = Tensor::from_values({1, 3, 3}, lv);
    double total = 0;
    for (int i = 0; i < 9; ++i) {
        const double z0 = logits.at(i), z1 = logits.at(9 + i);
        const double p = std::exp(lv[static_cast<std::size_t>(i)] == 1.0 ? z1 : z0) / (std::exp(z0) + std::exp(z1));
        total += -std::log(p);
    }
    EXPECT_NEAR(cross_entropy_loss(logits, labels).item(), total / 9.0, 1e-6);
}

TEST(CrossEntropy, RejectsNonBinaryLabels) {
    auto logits = Tensor::zeros({1, 2, 1, 2});
    EXPECT_THROW(cross_entropy_loss(logits, Tensor::from_values({1, 1, 2}, {0.0, 2.0})), DataError);
    EXPECT_THROW(cross_entropy_loss(logits, Tensor::from_values({1, 1, 2}, {0.0, 0.5})), DataError);
    EXPECT_THROW(cross_entropy_loss(logits, Tensor::from_values({1, 1, 2}, {0.0, -1.0})), DataError);
    EXPECT_THROW(cross_entropy_loss(logits, Tensor::zeros({1, 2, 1})), ShapeError);
}
