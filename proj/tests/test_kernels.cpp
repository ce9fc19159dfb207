#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "protoseg/kernels.hpp"

namespace k = protoseg::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(Kernels, GemmParallelMatchesSerial) {
    std::mt19937_64 rng(1);
    for (auto [m, n, kk] : {std::tuple{1, 1, 1}, {3, 7, 5}, {4, 300, 9}, {9, 513, 17}, {64, 64, 576}}) {
        const auto a = random_buffer(m * kk, rng);
        const auto b = random_buffer(kk * n, rng);
        auto c_serial = random_buffer(m * n, rng);
        auto c_parallel = c_serial;
        k::serial::gemm(m, n, kk, a.data(), b.data(), c_serial.data());
        k::parallel::gemm(m, n, kk, a.data(), b.data(), c_parallel.data());
        expect_close(c_serial, c_parallel, 1e-12);
    }
}

TEST(Kernels, ConvParallelMatchesSerial) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int trial = 0; trial < 40; ++trial) {
        k::ConvGeometry g;
        g.in_channels = 1 + pick(rng);
        g.out_channels = 1 + pick(rng);
        g.in_h = 3 + 2 * pick(rng);
        g.in_w = 3 + 3 * pick(rng);
        g.kernel = trial % 3 == 0 ? 1 : 3;
        g.stride = 1 + trial % 2;
        g.padding = g.kernel == 3 ? trial % 2 : 0;
        ASSERT_TRUE(g.valid());
        const auto in = random_buffer(g.in_channels * g.in_h * g.in_w, rng);
        const auto w = random_buffer(g.out_channels * g.patch(), rng);
        const auto b = random_buffer(g.out_channels, rng);
        const std::size_t out_n = g.out_channels * g.out_h() * g.out_w();
        std::vector<double> out_s(out_n), out_p(out_n);
        k::serial::conv2d_forward(g, in.data(), w.data(), b.data(), out_s.data());
        k::parallel::conv2d_forward(g, in.data(), w.data(), b.data(), out_p.data());
        expect_close(out_s, out_p, 1e-12);

        const auto gout = random_buffer(out_n, rng);
        // Both versions accumulate, so start from the same nonzero buffers.
        auto gin_s = random_buffer(in.size(), rng), gw_s = random_buffer(w.size(), rng), gb_s = random_buffer(b.size(), rng);
        auto gin_p = gin_s, gw_p = gw_s, gb_p = gb_s;
        k::serial::conv2d_backward(g, in.data(), w.data(), gout.data(), gin_s.data(), gw_s.data(), gb_s.data());
        k::parallel::conv2d_backward(g, in.data(), w.data(), gout.data(), gin_p.data(), gw_p.data(), gb_p.data());
        expect_close(gin_s, gin_p, 1e-12);
        expect_close(gw_s, gw_p, 1e-12);
        expect_close(gb_s, gb_p, 1e-12);
    }
}

TEST(Kernels, ConvBackwardSkipsNullBuffers) {
    k::ConvGeometry g{2, 4, 4, 3, 3, 1, 1};
    std::mt19937_64 rng(3);
    const auto in = random_buffer(32, rng);
    const auto w = random_buffer(3 * 18, rng);
    const auto gout = random_buffer(48, rng);
    std::vector<double> gw_s(w.size()), gw_p(w.size());
    k::serial::conv2d_backward(g, in.data(), w.data(), gout.data(), nullptr, gw_s.data(), nullptr);
    k::parallel::conv2d_backward(g, in.data(), w.data(), gout.data(), nullptr, gw_p.data(), nullptr);
    expect_close(gw_s, gw_p, 1e-12);
}

TEST(Kernels, MaxCosineParallelMatchesSerial) {
    std::mt19937_64 rng(4);
    for (auto [c, n, d] : {std::tuple{1, 1, 1}, {8, 64, 20}, {5, 17, 300}}) {
        auto query = random_buffer(c * n, rng);
        const auto desc = random_buffer(d * c, rng);
        for (std::size_t i = 0; i < static_cast<std::size_t>(c); ++i) query[i * n] = 0.0;  // one zero pixel
        std::vector<double> out_s(n), out_p(n);
        k::serial::max_cosine(c, n, query.data(), d, desc.data(), out_s.data());
        k::parallel::max_cosine(c, n, query.data(), d, desc.data(), out_p.data());
        expect_close(out_s, out_p, 1e-12);
        for (double v : out_p) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Kernels, CosineExample) {
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    EXPECT_NEAR(k::cosine(a, b), 32.0 / std::sqrt(14.0 * 77.0), 1e-12);
    EXPECT_NEAR(k::cosine(a, b), 0.974632, 1e-6);
    const std::vector<double> zero{0, 0, 0};
    EXPECT_EQ(k::cosine(zero, b), 0.0);
}

TEST(Kernels, ThreadCapIsPositive) {
    EXPECT_GE(k::max_threads(), 1);
    k::set_max_threads(1);
    EXPECT_EQ(k::max_threads(), 1);
    k::set_max_threads(0);  // back to the environment default
    EXPECT_GE(k::max_threads(), 1);
}
