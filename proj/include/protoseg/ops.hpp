#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protoseg/tensor.hpp"

namespace protoseg {

struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_size = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;

    Shape weight_shape() const { return {out_channels, in_channels, kernel_size, kernel_size}; }
    std::size_t fan_in() const { return in_channels * kernel_size * kernel_size; }
    /// Throws ShapeMismatch when the output would be empty.
    std::size_t output_size(std::size_t in) const;
};

// Elementwise. Shapes must match exactly; the only broadcast is a one-element
// tensor against anything.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Zero-padded cross-correlation of a C_in x H x W input.
Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weight, const Tensor& bias);

/// Stacks C_i x H x W (or H x W, counted as one channel) along channels.
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Channel `index` of a C x H x W tensor, as H x W.
Tensor channel(const Tensor& x, std::size_t index);
/// x[c, y, x] * e[y, x] for every channel c.
Tensor mul_channelwise(const Tensor& x, const Tensor& e);

/// Per-pixel softmax over the leading axis of a K x H x W tensor.
Tensor softmax_channel(const Tensor& x);

/// Half-pixel (align_corners = false) bilinear resize of C x H x W or H x W.
Tensor bilinear_resize(const Tensor& x, std::size_t target_h, std::size_t target_w);

/// Mean per-pixel cross-entropy of 2 x H x W logits against an H x W mask.
/// Channel order is [foreground, background]: mask value 1 selects channel 0.
Tensor cross_entropy_2class(const Tensor& logits, const Tensor& target);

/// Cosine between every pixel descriptor of x (C x H x W) and a fixed vector;
/// differentiable in x only.
Tensor cosine_map(const Tensor& x, std::span<const double> v);

}  // namespace protoseg
