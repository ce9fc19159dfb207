#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "protoseg/kernels.hpp"

namespace protoseg::kernels {

bool ConvGeometry::valid() const {
    if (kernel < 1 || stride < 1 || in_channels < 1 || out_channels < 1) return false;
    return in_h + 2 * padding >= kernel && in_w + 2 * padding >= kernel;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double denom = std::max(std::sqrt(na), kCosineEps) * std::max(std::sqrt(nb), kCosineEps);
    return std::clamp(dot / denom, -1.0, 1.0);
}

namespace serial {

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = bias ? bias[o] : 0.0;
                for (std::size_t c = 0; c < g.in_channels; ++c) {
                    for (std::size_t i = 0; i < k; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                            auto iy = static_cast<long>(y * g.stride + i) - static_cast<long>(g.padding);
                            auto ix = static_cast<long>(x * g.stride + j) - static_cast<long>(g.padding);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) ||
                                ix >= static_cast<long>(g.in_w)) {
                                continue;
                            }
                            acc += weight[((o * g.in_channels + c) * k + i) * k + j] *
                                   in[(c * g.in_h + iy) * g.in_w + ix];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
}

void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight, const double* grad_out,
                     double* grad_in, double* grad_weight, double* grad_bias) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double go = grad_out[(o * oh + y) * ow + x];
                if (grad_bias) grad_bias[o] += go;
                for (std::size_t c = 0; c < g.in_channels; ++c) {
                    for (std::size_t i = 0; i < k; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                            auto iy = static_cast<long>(y * g.stride + i) - static_cast<long>(g.padding);
                            auto ix = static_cast<long>(x * g.stride + j) - static_cast<long>(g.padding);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) ||
                                ix >= static_cast<long>(g.in_w)) {
                                continue;
                            }
                            const std::size_t wi = ((o * g.in_channels + c) * k + i) * k + j;
                            const std::size_t ii = (c * g.in_h + iy) * g.in_w + ix;
                            if (grad_weight) grad_weight[wi] += go * in[ii];
                            if (grad_in) grad_in[ii] += go * weight[wi];
                        }
                    }
                }
            }
        }
    }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] += acc;
        }
    }
}

void max_cosine(std::size_t channels, std::size_t n_query, const double* query, std::size_t n_desc,
                const double* desc, double* out) {
    std::vector<double> q(channels);
    for (std::size_t p = 0; p < n_query; ++p) {
        for (std::size_t c = 0; c < channels; ++c) q[c] = query[c * n_query + p];
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t d = 0; d < n_desc; ++d) {
            best = std::max(best, cosine(q, std::span<const double>(desc + d * channels, channels)));
        }
        out[p] = best;
    }
}

}  // namespace serial
}  // namespace protoseg::kernels
