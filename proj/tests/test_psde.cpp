#include <gtest/gtest.h>

#include <cmath>

#include "protoseg/error.hpp"
#include "protoseg/ops.hpp"
#include "protoseg/psde.hpp"
#include "test_util.hpp"

using namespace protoseg;
using protoseg::testing::expect_tensor_near;
using protoseg::testing::naive_conv;
using protoseg::testing::random_tensor;

namespace {

Tensor relu_oracle(Tensor t) {
    Tensor out = t.clone();
    for (double& v : out.mutable_data()) v = v > 0 ? v : 0.0;
    return out;
}

Tensor add_oracle(const Tensor& a, const Tensor& b) {
    Tensor out = a.clone();
    for (std::size_t i = 0; i < out.numel(); ++i) out.mutable_data()[i] += b.data()[i];
    return out;
}

// Head rebuilt from the raw conv oracle: proj, residual blocks, 1x1 out.
Tensor head_oracle(const Tensor& x, const HeadParams& p) {
    Tensor y = relu_oracle(naive_conv(x, p.proj_weight, p.proj_bias, 1, 0));
    for (const auto& b : p.blocks) {
        Tensor r = relu_oracle(naive_conv(y, b.conv1_weight, b.conv1_bias, 1, 1));
        r = naive_conv(r, b.conv2_weight, b.conv2_bias, 1, 1);
        y = relu_oracle(add_oracle(y, r));
    }
    return naive_conv(y, p.out_weight, p.out_bias, 1, 0);
}

Tensor neg_weight_oracle(const Tensor& r) {
    const std::size_t plane = r.dim(1) * r.dim(2);
    Tensor e({r.dim(1), r.dim(2)});
    for (std::size_t i = 0; i < plane; ++i) {
        const double p = r.data()[i], n = r.data()[plane + i];
        e.mutable_data()[i] = 1.0 - std::exp(p) / (std::exp(p) + std::exp(n));
    }
    return e;
}

Tensor scale_pixels(const Tensor& x, const Tensor& e) {
    Tensor out = x.clone();
    const std::size_t plane = x.dim(1) * x.dim(2);
    for (std::size_t c = 0; c < x.dim(0); ++c)
        for (std::size_t i = 0; i < plane; ++i) out.mutable_data()[c * plane + i] *= e.data()[i];
    return out;
}

Tensor constant_logits(std::size_t h, std::size_t w, double fg, double bg) {
    Tensor t({2, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        t.mutable_data()[i] = fg;
        t.mutable_data()[h * w + i] = bg;
    }
    return t;
}

}  // namespace

TEST(CoarseHead, ZeroWeightsGiveZeroLogits) {
    std::mt19937_64 rng(1);
    HeadParams p = HeadParams::zeros(5, 8, 2);
    ParsingLogits r = coarse_head({random_tensor({5, 4, 6}, rng)}, p);
    EXPECT_EQ(r.values.shape(), (Shape{2, 4, 6}));
    for (double v : r.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(CoarseHead, PreservesSpatialSize) {
    std::mt19937_64 rng(2);
    HeadParams p = HeadParams::init(3, 4, 2, rng);
    for (auto [h, w] : {std::pair{3, 3}, {5, 9}, {8, 4}}) {
        EXPECT_EQ(coarse_head({random_tensor({3, std::size_t(h), std::size_t(w)}, rng)}, p).values.shape(),
                  (Shape{2, std::size_t(h), std::size_t(w)}));
    }
}

TEST(CoarseHead, MatchesConvOracleChain) {
    std::mt19937_64 rng(3);
    for (std::size_t blocks : {0, 1, 2}) {
        HeadParams p = HeadParams::init(6, 5, blocks, rng, 2.0);
        Tensor x = random_tensor({6, 5, 7}, rng);
        expect_tensor_near(coarse_head({x}, p).values, head_oracle(x, p), 1e-9);
    }
}

TEST(CoarseHead, ShapeMismatch) {
    std::mt19937_64 rng(4);
    HeadParams p = HeadParams::init(3, 4, 1, rng);
    EXPECT_THROW(coarse_head({Tensor::ones({4, 3, 3})}, p), Error);
}

TEST(NegativeWeight, Examples) {
    for (double v : protoseg::testing::values(negative_weight({constant_logits(3, 3, 0.7, 0.7)}).values)) EXPECT_DOUBLE_EQ(v, 0.5);
    for (double v : protoseg::testing::values(negative_weight({constant_logits(2, 2, 20.0, 0.0)}).values)) EXPECT_LT(v, 1e-8);
    const double expect = 1.0 - std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0));
    for (double v : protoseg::testing::values(negative_weight({constant_logits(2, 3, 1.0, -1.0)}).values)) {
        EXPECT_NEAR(v, expect, 1e-12);
        EXPECT_NEAR(v, 0.119203, 1e-6);
    }
}

TEST(NegativeWeight, StrictlyInsideUnitInterval) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor r = random_tensor({2, 4, 4}, rng, -15.0, 15.0);
        Tensor e = negative_weight({r}).values;
        expect_tensor_near(e, neg_weight_oracle(r), 1e-12);
        for (double v : e.data()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(EraseAndActivate, HalfWeightFactorsThroughHead) {
    std::mt19937_64 rng(6);
    HeadParams p = HeadParams::init(4, 6, 2, rng);
    Tensor x = random_tensor({4, 5, 5}, rng);
    ParsingLogits a = erase_and_activate({x}, {Tensor::full({5, 5}, 0.5)}, p);
    ParsingLogits b = coarse_head({scale(x, 0.5)}, p);
    expect_tensor_near(a.values, b.values, 1e-12);
}

TEST(EraseAndActivate, ZeroHeadIgnoresWeights) {
    std::mt19937_64 rng(7);
    HeadParams p = HeadParams::zeros(3, 4, 2);
    Tensor e = random_tensor({4, 4}, rng, 0.01, 0.99);
    for (double v : protoseg::testing::values(erase_and_activate({random_tensor({3, 4, 4}, rng)}, {e}, p).values)) EXPECT_EQ(v, 0.0);
}

TEST(EraseAndActivate, MatchesManualComposition) {
    std::mt19937_64 rng(8);
    HeadParams p = HeadParams::init(5, 4, 2, rng, 2.0);
    Tensor x = random_tensor({5, 6, 4}, rng);
    Tensor e = random_tensor({6, 4}, rng, 0.01, 0.99);
    expect_tensor_near(erase_and_activate({x}, {e}, p).values, head_oracle(scale_pixels(x, e), p), 1e-9);
    EXPECT_THROW(erase_and_activate({x}, {Tensor::ones({4, 4})}, p), Error);
}

TEST(Merge, Examples) {
    std::mt19937_64 rng(9);
    Tensor a = random_tensor({2, 3, 3}, rng), b = random_tensor({2, 3, 3}, rng);
    expect_tensor_near(merge({a}, {Tensor::zeros({2, 3, 3})}).values, a, 0.0);
    for (double v : protoseg::testing::values(merge({a}, {scale(a, -1.0)}).values)) EXPECT_EQ(v, 0.0);
    expect_tensor_near(merge({a}, {b}).values, merge({b}, {a}).values, 0.0);
    EXPECT_THROW(merge({a}, {Tensor::zeros({2, 3, 4})}), Error);
}

TEST(Predict, Examples) {
    for (double v : protoseg::testing::values(predict({constant_logits(3, 4, 1.0, 0.0)}).values())) EXPECT_EQ(v, 1.0);
    for (double v : protoseg::testing::values(predict({constant_logits(3, 4, 0.3, 0.3)}).values())) EXPECT_EQ(v, 0.0);
}

TEST(Predict, SoftmaxAndShiftInvariant) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor r = random_tensor({2, 5, 5}, rng, -3.0, 3.0);
        const SegmentationMask base = predict({r});
        // Exhaustive argmax check against the softmax probabilities.
        Tensor s = softmax_channel(r);
        for (std::size_t i = 0; i < 25; ++i) {
            EXPECT_EQ(base.values().data()[i], s.data()[i] > s.data()[25 + i] ? 1.0 : 0.0);
        }
        expect_tensor_near(predict({add_scalar(r, 4.25)}).values(), base.values(), 0.0);
        expect_tensor_near(predict(merge({r}, {Tensor::zeros({2, 5, 5})})).values(), base.values(), 0.0);
    }
}

TEST(DecodePyramid, SingleLevelIsCoarseHead) {
    std::mt19937_64 rng(11);
    HeadParams p = HeadParams::init(3, 4, 2, rng);
    ClassAwareFeature x{random_tensor({3, 4, 4}, rng)};
    auto out = decode_pyramid({x}, {p});
    ASSERT_EQ(out.size(), 1u);
    expect_tensor_near(out[0].values, coarse_head(x, p).values, 0.0);
}

TEST(DecodePyramid, ZeroHeadsGiveZeroLogitsAndHalfWeights) {
    std::mt19937_64 rng(12);
    std::vector<ClassAwareFeature> xs{{random_tensor({3, 2, 2}, rng)}, {random_tensor({3, 4, 4}, rng)},
                                      {random_tensor({3, 8, 8}, rng)}};
    std::vector<HeadParams> heads(3, HeadParams::zeros(3, 4, 1));
    auto out = decode_pyramid(xs, heads);
    ASSERT_EQ(out.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_EQ(out[t].height(), xs[t].values.dim(1));
        for (double v : out[t].values.data()) EXPECT_EQ(v, 0.0);
        for (double v : protoseg::testing::values(negative_weight(out[t]).values)) EXPECT_EQ(v, 0.5);
    }
}

TEST(DecodePyramid, TwoLevelUnrolledOracle) {
    std::mt19937_64 rng(13);
    HeadParams h0 = HeadParams::init(4, 5, 2, rng, 2.0), h1 = HeadParams::init(4, 5, 2, rng, 2.0);
    Tensor x0 = random_tensor({4, 3, 3}, rng), x1 = random_tensor({4, 6, 6}, rng);
    auto out = decode_pyramid({{x0}, {x1}}, {h0, h1});
    ASSERT_EQ(out.size(), 2u);
    Tensor r0 = head_oracle(x0, h0);
    expect_tensor_near(out[0].values, r0, 1e-9);
    Tensor up = bilinear_resize(r0, 6, 6);
    Tensor r1 = add_oracle(up, head_oracle(scale_pixels(x1, neg_weight_oracle(up)), h1));
    expect_tensor_near(out[1].values, r1, 1e-9);

    // Without erasing the second level sees the unweighted features.
    auto plain = decode_pyramid({{x0}, {x1}}, {h0, h1}, DecodeOptions{false});
    expect_tensor_near(plain[1].values, add_oracle(up, head_oracle(x1, h1)), 1e-9);
}

TEST(DecodePyramid, WrongLevelCount) {
    std::mt19937_64 rng(14);
    HeadParams p = HeadParams::init(3, 4, 1, rng);
    try {
        decode_pyramid({{Tensor::ones({3, 2, 2})}}, {p, p});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::WrongLevelCount);
    }
    EXPECT_THROW(decode_pyramid({}, {}), Error);
}

TEST(DecodePyramid, GradientsThroughTwoLevels) {
    std::mt19937_64 rng(15);
    HeadParams h0 = HeadParams::init(3, 3, 1, rng, 2.0), h1 = HeadParams::init(3, 3, 1, rng, 2.0);
    Tensor x0 = random_tensor({3, 2, 2}, rng), x1 = random_tensor({3, 4, 4}, rng);
    Tensor w = random_tensor({2, 4, 4}, rng);
    protoseg::testing::expect_gradients(
        [&] { return sum(mul(decode_pyramid({{x0}, {x1}}, {h0, h1})[1].values, w)); },
        {x0, x1, h0.proj_weight, h1.blocks[0].conv2_weight, h0.out_bias}, 1e-5);
}
