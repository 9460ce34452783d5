#include <cmath>

#include <gtest/gtest.h>

#include "changebind/ops.hpp"
#include "support.hpp"

using namespace changebind;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST(Elementwise, Basics) {
    auto a = Tensor::from_values({3}, {1.0, -2.0, 3.0});
    auto b = Tensor::from_values({3}, {0.5, 0.5, -1.0});
    EXPECT_EQ(add(a, b).to_vector(), (std::vector<double>{1.5, -1.5, 2.0}));
    EXPECT_EQ(sub(a, b).to_vector(), (std::vector<double>{0.5, -2.5, 4.0}));
    EXPECT_EQ(mul(a, b).to_vector(), (std::vector<double>{0.5, -1.0, -3.0}));
    EXPECT_EQ(abs(a).to_vector(), (std::vector<double>{1.0, 2.0, 3.0}));
    EXPECT_EQ(relu(a).to_vector(), (std::vector<double>{1.0, 0.0, 3.0}));
    EXPECT_EQ(scale(a, 2.0).to_vector(), (std::vector<double>{2.0, -4.0, 6.0}));
    EXPECT_EQ(sum(a).item(), 2.0);
    EXPECT_NEAR(mean(a).item(), 2.0 / 3.0, 1e-7);
}

TEST(Elementwise, ShapeMismatchNamesAxis) {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 4});
    try {
        add(a, b);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_EQ(e.axis(), 1);
    }
}

TEST(Structural, ConcatAndNarrowInvert) {
    auto a = random_tensor({2, 3, 4}, 1);
    auto b = random_tensor({2, 5, 4}, 2);
    auto c = concat({a, b}, 1);
    EXPECT_EQ(c.shape(), (Shape{2, 8, 4}));
    EXPECT_TRUE(bitwise_equal(narrow(c, 1, 0, 3), a));
    EXPECT_TRUE(bitwise_equal(narrow(c, 1, 3, 5), b));
    EXPECT_THROW(narrow(c, 1, 6, 3), ShapeError);
}

TEST(Structural, PermuteMatchesIndexing) {
    auto a = random_tensor({2, 3, 4}, 3);
    auto p = permute(a, {2, 0, 1});
    ASSERT_EQ(p.shape(), (Shape{4, 2, 3}));
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 4; ++k) {
                EXPECT_EQ(p.at((k * 2 + i) * 3 + j), a.at((i * 3 + j) * 4 + k));
            }
        }
    }
    EXPECT_TRUE(bitwise_equal(transpose(transpose(a, 0, 2), 0, 2), a));
}

TEST(Structural, TokensRoundTrip) {
    auto x = random_tensor({2, 3, 4, 5}, 4);
    auto t = map_to_tokens(x);
    ASSERT_EQ(t.shape(), (Shape{2, 20, 3}));
    // token n = h * W + w holds channel vector x[b, :, h, w]
    EXPECT_EQ(t.at((1 * 20 + 2 * 5 + 3) * 3 + 1), x.at(((1 * 3 + 1) * 4 + 2) * 5 + 3));
    EXPECT_TRUE(bitwise_equal(tokens_to_map(t, 4, 5), x));
}

TEST(Matmul, MatchesLoopOracle) {
    DTypeScope f64(DType::f64);
    auto a = random_tensor({2, 3, 4}, 5);
    auto b = random_tensor({2, 4, 5}, 6);
    auto c = matmul(a, b);
    std::vector<double> expect;
    for (int n = 0; n < 2; ++n) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 5; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) {
                    s += a.at((n * 3 + i) * 4 + k) * b.at((n * 4 + k) * 5 + j);
                }
                expect.push_back(s);
            }
        }
    }
    EXPECT_LT(max_abs_diff(c.to_vector(), expect), 1e-12);
    EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Linear, MatchesLoopOracle) {
    DTypeScope f64(DType::f64);
    auto x = random_tensor({2, 3}, 7);
    auto w = random_tensor({4, 3}, 8);
    auto b = random_tensor({4}, 9);
    auto y = linear(x, w, b);
    ASSERT_EQ(y.shape(), (Shape{2, 4}));
    for (int i = 0; i < 2; ++i) {
        for (int o = 0; o < 4; ++o) {
            double s = b.at(o);
            for (int k = 0; k < 3; ++k) {
                s += x.at(i * 3 + k) * w.at(o * 3 + k);
            }
            EXPECT_NEAR(y.at(i * 4 + o), s, 1e-12);
        }
    }
}

TEST(Softmax, EqualLogitsAreUniform) {
    auto s = softmax(Tensor::from_values({2}, {3.0, 3.0}), 0);
    EXPECT_EQ(s.to_vector(), (std::vector<double>{0.5, 0.5}));
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    auto s = softmax(Tensor::from_values({2}, {1000.0, 0.0}), 0);
    EXPECT_EQ(s.at(0), 1.0);
    EXPECT_EQ(s.at(1), 0.0);
}

TEST(Softmax, MatchesHighPrecisionOracle) {
    const auto v = testutil::random_values(17, 10, -5.0, 5.0);
    auto s = softmax(Tensor::from_values({17}, v), 0);
    long double total = 0;
    for (double x : v) {
        total += std::exp(static_cast<long double>(x));
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto expect = static_cast<double>(std::exp(static_cast<long double>(v[i])) / total);
        EXPECT_NEAR(s.at(static_cast<std::int64_t>(i)), expect, 1e-6);
    }
}

TEST(Softmax, RowsSumToOneForLargeMagnitudes) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto x = random_tensor({4, 6, 9}, seed, -1e3, 1e3);
        for (int axis : {0, 1, 2}) {
            auto s = softmax(x, axis);
            auto totals = s.to_vector();
            const auto& shape = s.shape();
            // Sum along `axis` by walking every line of that axis.
            const std::int64_t inner = axis == 2 ? 1 : (axis == 1 ? 9 : 54);
            const std::int64_t len = shape[static_cast<std::size_t>(axis)];
            const std::int64_t outer = s.numel() / (inner * len);
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    double t = 0;
                    for (std::int64_t k = 0; k < len; ++k) {
                        const double p = s.at((o * len + k) * inner + in);
                        EXPECT_GE(p, 0.0);
                        EXPECT_LE(p, 1.0);
                        t += p;
                    }
                    EXPECT_NEAR(t, 1.0, 1e-6);
                }
            }
        }
    }
}
