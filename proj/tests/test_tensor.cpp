#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "protoseg/error.hpp"
#include "protoseg/ops.hpp"
#include "protoseg/snapshot.hpp"
#include "protoseg/tensor.hpp"
#include "test_util.hpp"

using namespace protoseg;
using protoseg::testing::expect_gradients;
using protoseg::testing::naive_conv;
using protoseg::testing::random_mask;
using protoseg::testing::random_tensor;

TEST(Tensor, ShapeAndData) {
    Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.ndim(), 2u);
    EXPECT_DOUBLE_EQ(t.at({1, 2}), 1.5);
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), Error);
    EXPECT_THROW(Tensor({0, 3}), Error);
}

TEST(Tensor, CopiesShareStorageCloneDoesNot) {
    Tensor a({2}, 1.0);
    Tensor b = a;
    Tensor c = a.clone();
    a.mutable_data()[0] = 7.0;
    EXPECT_EQ(b.data()[0], 7.0);
    EXPECT_EQ(c.data()[0], 1.0);
}

TEST(Tensor, CheckFinite) {
    Tensor t({2}, 0.0);
    EXPECT_NO_THROW(t.check_finite("t"));
    t.mutable_data()[1] = std::nan("");
    try {
        t.check_finite("t");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
    }
}

TEST(Tensor, BackwardRequiresScalar) {
    Tensor x({3}, 1.0);
    x.set_requires_grad(true);
    try {
        scale(x, 2.0).backward();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotScalar);
    }
}

TEST(Elementwise, AddMulExamples) {
    Tensor a({2}, std::vector<double>{1, 2});
    Tensor b({2}, std::vector<double>{3, 4});
    Tensor s = add(a, b);
    EXPECT_EQ(s.data()[0], 4.0);
    EXPECT_EQ(s.data()[1], 6.0);
    Tensor m = mul(a, Tensor::ones({2}));
    EXPECT_EQ(m.data()[0], 1.0);
    EXPECT_EQ(m.data()[1], 2.0);
    EXPECT_THROW(add(a, Tensor::ones({3})), Error);
}

TEST(Elementwise, AddGradientIsOnes) {
    Tensor a({2}, std::vector<double>{1, 2});
    Tensor b({2}, std::vector<double>{3, 4});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    sum(add(a, b)).backward();
    EXPECT_EQ(a.grad()[0], 1.0);
    EXPECT_EQ(a.grad()[1], 1.0);
    EXPECT_EQ(b.grad()[0], 1.0);
}

TEST(Backward, SumAndQuadratic) {
    Tensor x({3}, std::vector<double>{0.5, -2.0, 3.0});
    x.set_requires_grad(true);
    sum(x).backward();
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
    x.zero_grad();
    sum(mul(x, x)).backward();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.data()[i]);
}

TEST(Backward, SharedSubexpressionAccumulates) {
    Tensor x({1}, 3.0);
    x.set_requires_grad(true);
    Tensor y = mul(x, x);
    sum(add(y, y)).backward();  // d(2x^2)/dx = 4x
    EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Backward, NoGradGuardStopsRecording) {
    Tensor x({2}, 1.0);
    x.set_requires_grad(true);
    Tensor y;
    {
        NoGradGuard guard;
        y = scale(x, 3.0);
    }
    EXPECT_FALSE(y.requires_grad());
}

TEST(Conv2d, OnesKernelSumsPatch) {
    Tensor in = Tensor::ones({1, 3, 3});
    Tensor w = Tensor::ones({1, 1, 3, 3});
    Tensor out = conv2d(in, {1, 1, 3, 1, 0}, w, Tensor::zeros({1}));
    ASSERT_EQ(out.shape(), (Shape{1, 1, 1}));
    EXPECT_DOUBLE_EQ(out.item(), 9.0);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    std::mt19937_64 rng(1);
    Tensor in = random_tensor({1, 5, 6}, rng);
    Tensor w = Tensor::zeros({1, 1, 3, 3});
    w.mutable_data()[4] = 1.0;
    Tensor out = conv2d(in, {1, 1, 3, 1, 1}, w, Tensor::zeros({1}));
    EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()),
              std::vector<double>(in.data().begin(), in.data().end()));
}

TEST(Conv2d, MatchesNaiveOracle) {
    std::mt19937_64 rng(2);
    Tensor in = random_tensor({1, 5, 5}, rng);
    Tensor w = random_tensor({2, 1, 3, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    protoseg::testing::expect_tensor_near(conv2d(in, {1, 2, 3, 1, 1}, w, b), naive_conv(in, w, b, 1, 1), 1e-6);
}

TEST(Conv2d, OracleSweepUpTo4x8x8) {
    std::mt19937_64 rng(3);
    for (std::size_t c_in : {1, 2, 4}) {
        for (std::size_t hw : {3, 5, 8}) {
            for (std::size_t k : {1, 3}) {
                for (std::size_t stride : {1, 2}) {
                    for (std::size_t pad : {0, 1}) {
                        if (hw + 2 * pad < k) continue;
                        Tensor in = random_tensor({c_in, hw, hw}, rng);
                        Tensor w = random_tensor({3, c_in, k, k}, rng);
                        Tensor b = random_tensor({3}, rng);
                        protoseg::testing::expect_tensor_near(conv2d(in, {c_in, 3, k, stride, pad}, w, b),
                                                              naive_conv(in, w, b, stride, pad), 1e-6);
                    }
                }
            }
        }
    }
}

TEST(Conv2d, ShapeErrors) {
    Tensor in = Tensor::ones({2, 4, 4});
    EXPECT_THROW(conv2d(in, {3, 1, 3, 1, 1}, Tensor::ones({1, 3, 3, 3}), Tensor::ones({1})), Error);
    EXPECT_THROW(conv2d(in, {2, 1, 3, 1, 1}, Tensor::ones({1, 2, 2, 2}), Tensor::ones({1})), Error);
}

TEST(Conv2d, Gradients) {
    std::mt19937_64 rng(4);
    Tensor in = random_tensor({2, 5, 4}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor r = random_tensor({3, 3, 2}, rng);
    const ConvSpec spec{2, 3, 3, 2, 1};
    expect_gradients([&] { return sum(mul(conv2d(in, spec, w, b), r)); }, {in, w, b});
}

TEST(Softmax, EqualLogitsGiveHalf) {
    Tensor s = softmax_channel(Tensor::zeros({2, 1, 1}));
    EXPECT_DOUBLE_EQ(s.data()[0], 0.5);
    EXPECT_DOUBLE_EQ(s.data()[1], 0.5);
}

TEST(Softmax, DirectFormulaOracle) {
    Tensor s = softmax_channel(Tensor({3, 1, 1}, std::vector<double>{1, 2, 3}));
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    EXPECT_NEAR(s.data()[0], std::exp(1.0) / z, 1e-9);
    EXPECT_NEAR(s.data()[1], std::exp(2.0) / z, 1e-9);
    EXPECT_NEAR(s.data()[2], std::exp(3.0) / z, 1e-9);
}

TEST(Softmax, ShiftInvariantAndStableForLargeLogits) {
    Tensor a({2, 1, 2}, std::vector<double>{1.0, 1000.0, 3.0, 1002.0});
    Tensor b({2, 1, 2}, std::vector<double>{1.0 + 5.0, 0.0, 3.0 + 5.0, 2.0});
    Tensor sa = softmax_channel(a), sb = softmax_channel(b);
    EXPECT_NEAR(sa.data()[0], sb.data()[0], 1e-12);
    EXPECT_NEAR(sa.data()[1], sb.data()[1], 1e-12);
    EXPECT_TRUE(sa.all_finite());
}

TEST(Softmax, Gradients) {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({3, 2, 2}, rng, -2, 2);
    Tensor r = random_tensor({3, 2, 2}, rng);
    expect_gradients([&] { return sum(mul(softmax_channel(x), r)); }, {x});
}

TEST(Bilinear, SameSizeIsBitIdentical) {
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({2, 3, 5}, rng);
    Tensor y = bilinear_resize(x, 3, 5);
    EXPECT_EQ(std::vector<double>(x.data().begin(), x.data().end()),
              std::vector<double>(y.data().begin(), y.data().end()));
}

TEST(Bilinear, ConstantStaysConstant) {
    Tensor x = Tensor::full({1, 3, 4}, 0.37);
    for (auto [h, w] : {std::pair{1, 1}, {7, 2}, {9, 13}}) {
        for (double v : protoseg::testing::values(bilinear_resize(x, h, w))) EXPECT_NEAR(v, 0.37, 1e-15);
    }
}

TEST(Bilinear, TwoByTwoToFourByFourHandOracle) {
    Tensor x({1, 2, 2}, std::vector<double>{0, 1, 2, 3});
    // Half-pixel source coordinates of 4 outputs over 2 inputs: -0.25 (clamped
    // to 0), 0.25, 0.75, 1.25 (upper neighbour clamped), so each axis reads
    // the input at weights 0, 0.25, 0.75, 1. out = 2 * f(y) + f(x).
    const double f[4] = {0.0, 0.25, 0.75, 1.0};
    Tensor y = bilinear_resize(x, 4, 4);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at({0, r, c}), 2.0 * f[r] + f[c], 1e-12);
    }
}

TEST(Bilinear, Gradients) {
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor r1 = random_tensor({2, 5, 7}, rng);
    Tensor r2 = random_tensor({2, 2, 2}, rng);
    expect_gradients([&] { return add(sum(mul(bilinear_resize(x, 5, 7), r1)), sum(mul(bilinear_resize(x, 2, 2), r2))); },
                     {x});
}

TEST(CrossEntropy, UniformLogitsGiveLn2) {
    Tensor m({2, 2}, std::vector<double>{1, 0, 0, 1});
    EXPECT_NEAR(cross_entropy_2class(Tensor::zeros({2, 2, 2}), m).item(), std::log(2.0), 1e-12);
}

TEST(CrossEntropy, SaturatedCorrectLogits) {
    Tensor m({1, 2}, std::vector<double>{1, 0});
    // Foreground pixel favours channel 0, background pixel channel 1.
    Tensor logits({2, 1, 2}, std::vector<double>{20, 0, 0, 20});
    EXPECT_LT(cross_entropy_2class(logits, m).item(), 1e-3);
}

TEST(CrossEntropy, DirectPerPixelOracle) {
    std::mt19937_64 rng(8);
    Tensor logits = random_tensor({2, 2, 2}, rng, -3, 3);
    Tensor m = random_mask(2, 2, rng);
    double expect = 0.0;
    for (std::size_t p = 0; p < 4; ++p) {
        const double fg = logits.data()[p], bg = logits.data()[4 + p];
        const double chosen = m.data()[p] == 1.0 ? fg : bg;
        expect += -(chosen - std::log(std::exp(fg) + std::exp(bg)));
    }
    EXPECT_NEAR(cross_entropy_2class(logits, m).item(), expect / 4.0, 1e-9);
}

TEST(CrossEntropy, Gradients) {
    std::mt19937_64 rng(9);
    Tensor logits = random_tensor({2, 3, 3}, rng, -2, 2);
    Tensor m = random_mask(3, 3, rng);
    expect_gradients([&] { return cross_entropy_2class(logits, m); }, {logits});
    EXPECT_THROW(cross_entropy_2class(logits, Tensor::zeros({2, 3})), Error);
}

TEST(ChannelOps, ConcatChannelMulChannelwiseGradients) {
    std::mt19937_64 rng(10);
    Tensor a = random_tensor({2, 3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor e = random_tensor({3, 3}, rng);
    Tensor r = random_tensor({3, 3, 3}, rng);
    expect_gradients([&] { return sum(mul(mul_channelwise(concat_channels({a, b}), e), r)); }, {a, b, e});
    Tensor c = concat_channels({a, b});
    EXPECT_EQ(c.shape(), (Shape{3, 3, 3}));
    EXPECT_EQ(channel(c, 2).data()[4], b.data()[4]);
}

TEST(ChannelOps, ReluScaleMeanGradients) {
    std::mt19937_64 rng(11);
    Tensor x = random_tensor({4, 3}, rng);
    for (double& v : x.mutable_data()) {
        if (std::abs(v) < 0.05) v = 0.3;  // keep away from the kink
    }
    expect_gradients([&] { return mean(add_scalar(scale(relu(x), 1.7), 0.2)); }, {x});
}

TEST(CosineMap, ValuesAndGradients) {
    std::mt19937_64 rng(12);
    Tensor x = random_tensor({3, 2, 2}, rng);
    const std::vector<double> v{0.3, -0.8, 0.5};
    Tensor c = cosine_map(x, v);
    for (std::size_t p = 0; p < 4; ++p) {
        double dot = 0, nx = 0, nv = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double xv = x.data()[k * 4 + p];
            dot += xv * v[k];
            nx += xv * xv;
            nv += v[k] * v[k];
        }
        EXPECT_NEAR(c.data()[p], dot / std::sqrt(nx * nv), 1e-12);
    }
    Tensor r = random_tensor({2, 2}, rng);
    expect_gradients([&] { return sum(mul(cosine_map(x, v), r)); }, {x});
}

TEST(Snapshot, RoundTripAndHeader) {
    std::mt19937_64 rng(13);
    Tensor t = random_tensor({2, 3, 4}, rng);
    std::stringstream ss;
    write_snapshot(ss, t);
    const std::string bytes = ss.str();
    EXPECT_EQ(bytes.substr(0, bytes.find('\n')), "TNSR v1 3 2 3 4");
    EXPECT_EQ(bytes.size(), bytes.find('\n') + 1 + 24 * 8);
    Tensor back = read_snapshot(ss);
    EXPECT_EQ(back.shape(), t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back.data()[i], t.data()[i]);
    EXPECT_EQ(checksum(back), checksum(t));
}

TEST(Snapshot, LittleEndianPayload) {
    std::stringstream ss;
    write_snapshot(ss, Tensor({1}, 1.0));
    const std::string bytes = ss.str();
    const std::string payload = bytes.substr(bytes.find('\n') + 1);
    // 1.0 = 0x3FF0000000000000, least significant byte first.
    ASSERT_EQ(payload.size(), 8u);
    EXPECT_EQ(static_cast<unsigned char>(payload[6]), 0xF0);
    EXPECT_EQ(static_cast<unsigned char>(payload[7]), 0x3F);
}

TEST(Snapshot, RejectsGarbage) {
    std::stringstream bad("TNSR v2 1 1\n");
    EXPECT_THROW(read_snapshot(bad), Error);
    std::stringstream truncated("TNSR v1 1 4\n1234");
    EXPECT_THROW(read_snapshot(truncated), Error);
}
