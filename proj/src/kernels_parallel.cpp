#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "protoseg/kernels.hpp"

namespace protoseg::kernels {

namespace {

std::atomic<int> g_max_threads{0};

int threads_from_env() {
    if (const char* env = std::getenv("PROTOSEG_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return std::min(n, omp_get_num_procs());
    }
    return omp_get_max_threads();
}

// Rows of C updated together; each B row load feeds this many FMAs.
constexpr std::size_t kRowTile = 4;
// Column block sized so a kRowTile x kColBlock slab of C stays in L1.
constexpr std::size_t kColBlock = 256;

void gemm_rows(std::size_t i0, std::size_t rows, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c) {
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
        const std::size_t jn = std::min(kColBlock, n - j0);
        if (rows == kRowTile) {
            double* c0 = c + (i0 + 0) * n + j0;
            double* c1 = c + (i0 + 1) * n + j0;
            double* c2 = c + (i0 + 2) * n + j0;
            double* c3 = c + (i0 + 3) * n + j0;
            for (std::size_t p = 0; p < k; ++p) {
                const double a0 = a[(i0 + 0) * k + p];
                const double a1 = a[(i0 + 1) * k + p];
                const double a2 = a[(i0 + 2) * k + p];
                const double a3 = a[(i0 + 3) * k + p];
                const double* brow = b + p * n + j0;
#pragma omp simd
                for (std::size_t j = 0; j < jn; ++j) {
                    const double bv = brow[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        } else {
            for (std::size_t r = 0; r < rows; ++r) {
                double* crow = c + (i0 + r) * n + j0;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = a[(i0 + r) * k + p];
                    const double* brow = b + p * n + j0;
#pragma omp simd
                    for (std::size_t j = 0; j < jn; ++j) crow[j] += av * brow[j];
                }
            }
        }
    }
}

// col(K x OH*OW) rows ordered (c, i, j) to match the weight layout.
void im2col(const ConvGeometry& g, const double* in, double* col) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel, npix = oh * ow;
    const auto pad = static_cast<long>(g.padding);
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (std::size_t row = 0; row < g.patch(); ++row) {
        const std::size_t c = row / (k * k), i = (row / k) % k, j = row % k;
        double* dst = col + row * npix;
        const double* src = in + c * g.in_h * g.in_w;
        for (std::size_t y = 0; y < oh; ++y) {
            const long iy = static_cast<long>(y * g.stride + i) - pad;
            double* d = dst + y * ow;
            if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
                std::fill(d, d + ow, 0.0);
                continue;
            }
            const double* s = src + iy * g.in_w;
            for (std::size_t x = 0; x < ow; ++x) {
                const long ix = static_cast<long>(x * g.stride + j) - pad;
                d[x] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? 0.0 : s[ix];
            }
        }
    }
}

// Scatter-add counterpart of im2col. Parallel over input channels so no two
// threads write the same element.
void col2im(const ConvGeometry& g, const double* col, double* grad_in) {
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel, npix = oh * ow;
    const auto pad = static_cast<long>(g.padding);
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        double* dst = grad_in + c * g.in_h * g.in_w;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                const double* src = col + ((c * k + i) * k + j) * npix;
                for (std::size_t y = 0; y < oh; ++y) {
                    const long iy = static_cast<long>(y * g.stride + i) - pad;
                    if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
                    double* d = dst + iy * g.in_w;
                    const double* s = src + y * ow;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const long ix = static_cast<long>(x * g.stride + j) - pad;
                        if (ix >= 0 && ix < static_cast<long>(g.in_w)) d[ix] += s[x];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.padding == 0; }

}  // namespace

int max_threads() {
    int n = g_max_threads.load(std::memory_order_relaxed);
    if (n <= 0) {
        n = threads_from_env();
        g_max_threads.store(n, std::memory_order_relaxed);
    }
    return n;
}

void set_max_threads(int n) { g_max_threads.store(n > 0 ? n : threads_from_env(), std::memory_order_relaxed); }

namespace parallel {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    const std::size_t tiles = (m + kRowTile - 1) / kRowTile;
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (std::size_t t = 0; t < tiles; ++t) {
        const std::size_t i0 = t * kRowTile;
        gemm_rows(i0, std::min(kRowTile, m - i0), n, k, a, b, c);
    }
}

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out) {
    const std::size_t npix = g.out_h() * g.out_w();
    for (std::size_t o = 0; o < g.out_channels; ++o) {
        std::fill(out + o * npix, out + (o + 1) * npix, bias ? bias[o] : 0.0);
    }
    if (is_pointwise(g)) {
        gemm(g.out_channels, npix, g.in_channels, weight, in, out);
        return;
    }
    std::vector<double> col(g.patch() * npix);
    im2col(g, in, col.data());
    gemm(g.out_channels, npix, g.patch(), weight, col.data(), out);
}

void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight, const double* grad_out,
                     double* grad_in, double* grad_weight, double* grad_bias) {
    const std::size_t npix = g.out_h() * g.out_w();
    const std::size_t kdim = g.patch();
    const std::size_t cout = g.out_channels;

    if (grad_bias) {
        for (std::size_t o = 0; o < cout; ++o) {
            double s = 0.0;
            const double* go = grad_out + o * npix;
#pragma omp simd reduction(+ : s)
            for (std::size_t p = 0; p < npix; ++p) s += go[p];
            grad_bias[o] += s;
        }
    }

    std::vector<double> col_storage;
    const double* col = in;
    if (!is_pointwise(g)) {
        col_storage.resize(kdim * npix);
        im2col(g, in, col_storage.data());
        col = col_storage.data();
    }

    if (grad_weight) {
        // grad_w[o, r] = <grad_out[o, :], col[r, :]>
#pragma omp parallel for num_threads(max_threads()) schedule(static)
        for (std::size_t o = 0; o < cout; ++o) {
            const double* go = grad_out + o * npix;
            for (std::size_t r = 0; r < kdim; ++r) {
                const double* cr = col + r * npix;
                double s = 0.0;
#pragma omp simd reduction(+ : s)
                for (std::size_t p = 0; p < npix; ++p) s += go[p] * cr[p];
                grad_weight[o * kdim + r] += s;
            }
        }
    }

    if (grad_in) {
        // grad_col = W^T * grad_out, then fold back.
        std::vector<double> wt(kdim * cout);
        for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t r = 0; r < kdim; ++r) wt[r * cout + o] = weight[o * kdim + r];
        }
        if (is_pointwise(g)) {
            gemm(kdim, npix, cout, wt.data(), grad_out, grad_in);
        } else {
            std::vector<double> gcol(kdim * npix, 0.0);
            gemm(kdim, npix, cout, wt.data(), grad_out, gcol.data());
            col2im(g, gcol.data(), grad_in);
        }
    }
}

void max_cosine(std::size_t channels, std::size_t n_query, const double* query, std::size_t n_desc,
                const double* desc, double* out) {
    // Normalize both sides once, then one GEMM gives every pairwise cosine.
    std::vector<double> qn(channels * n_query);
    std::vector<double> inv_q(n_query, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = query + c * n_query;
        for (std::size_t p = 0; p < n_query; ++p) inv_q[p] += src[p] * src[p];
    }
    for (double& v : inv_q) v = 1.0 / std::max(std::sqrt(v), kCosineEps);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < n_query; ++p) qn[c * n_query + p] = query[c * n_query + p] * inv_q[p];
    }
    std::vector<double> dn(n_desc * channels);
    for (std::size_t d = 0; d < n_desc; ++d) {
        double ss = 0.0;
        for (std::size_t c = 0; c < channels; ++c) ss += desc[d * channels + c] * desc[d * channels + c];
        const double inv = 1.0 / std::max(std::sqrt(ss), kCosineEps);
        for (std::size_t c = 0; c < channels; ++c) dn[d * channels + c] = desc[d * channels + c] * inv;
    }
    std::vector<double> sim(n_desc * n_query, 0.0);
    gemm(n_desc, n_query, channels, dn.data(), qn.data(), sim.data());

    std::fill(out, out + n_query, -std::numeric_limits<double>::infinity());
    for (std::size_t d = 0; d < n_desc; ++d) {
        const double* row = sim.data() + d * n_query;
        for (std::size_t p = 0; p < n_query; ++p) out[p] = std::max(out[p], row[p]);
    }
    for (std::size_t p = 0; p < n_query; ++p) out[p] = std::clamp(out[p], -1.0, 1.0);
}

}  // namespace parallel
}  // namespace protoseg::kernels
