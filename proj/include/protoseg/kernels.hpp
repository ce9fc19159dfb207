#pragma once

// Hot loops of the tensor engine. Each kernel exists twice: a serial
// reference written as the textbook loop nest (kept for tests and as the
// benchmark baseline) and an OpenMP version the engine dispatches to.
// Both take raw row-major buffers; shape checking happens in ops.

#include <cstddef>
#include <span>

namespace protoseg::kernels {

/// Cosine denominator guard shared by every cosine kernel.
inline constexpr double kCosineEps = 1e-8;

struct ConvGeometry {
    std::size_t in_channels = 0;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
    std::size_t patch() const { return in_channels * kernel * kernel; }
    bool valid() const;
};

namespace serial {

// out[o,y,x] = bias[o] + sum_{c,i,j} w[o,c,i,j] * in[c, y*s+i-p, x*s+j-p]
void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out);

// Accumulates (+=) into every non-null gradient buffer.
void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight, const double* grad_out,
                     double* grad_in, double* grad_weight, double* grad_bias);

// C(MxN) += A(MxK) * B(KxN)
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

// out[q] = max_d cos(query[:, q], desc[d, :]); query is channel-major (C x N),
// descriptors are row-major (D x C).
void max_cosine(std::size_t channels, std::size_t n_query, const double* query, std::size_t n_desc,
                const double* desc, double* out);

}  // namespace serial

namespace parallel {

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out);

void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight, const double* grad_out,
                     double* grad_in, double* grad_weight, double* grad_bias);

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

void max_cosine(std::size_t channels, std::size_t n_query, const double* query, std::size_t n_desc,
                const double* desc, double* out);

}  // namespace parallel

/// Cosine of two equal-length vectors with the shared eps guard, clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b);

/// Worker cap for OpenMP regions; reads PROTOSEG_THREADS once.
int max_threads();
void set_max_threads(int n);

}  // namespace protoseg::kernels
