#pragma once

// Dual prior masks: for every query pixel, the best cosine affinity to any
// support foreground descriptor and to any support background descriptor.

#include <cstddef>
#include <span>
#include <vector>

#include "protoseg/mask.hpp"
#include "protoseg/tensor.hpp"

namespace protoseg {

/// C x H x W activations from one backbone level.
struct FeatureMap {
    Tensor values;
    int level_id = 0;

    std::size_t channels() const { return values.dim(0); }
    std::size_t height() const { return values.dim(1); }
    std::size_t width() const { return values.dim(2); }
};

/// Row-major list of equal-length descriptors.
class DescriptorSet {
public:
    explicit DescriptorSet(std::size_t dim = 0) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return dim_ ? values_.size() / dim_ : 0; }
    bool empty() const { return values_.empty(); }
    std::span<const double> operator[](std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    std::span<const double> flat() const { return values_; }
    void push_back(std::span<const double> d);
    void append(const DescriptorSet& other);

private:
    std::size_t dim_;
    std::vector<double> values_;
};

struct PixelPartition {
    DescriptorSet foreground;
    DescriptorSet background;
};

struct DualPriorMask {
    Tensor foreground;  // H x W, channel 0 of the stacked mask
    Tensor background;  // H x W, channel 1

    std::size_t height() const { return foreground.dim(0); }
    std::size_t width() const { return foreground.dim(1); }
    /// 2 x H x W, foreground first.
    Tensor stacked() const;
};

/// Bilinear resize followed by a 0.5 threshold.
SupportMask align_mask(const SupportMask& mask, std::size_t target_h, std::size_t target_w);

/// align_mask, except that a nonempty mask never aligns to an empty one: if
/// thresholding loses every pixel, the target cells with the largest box
/// coverage of the source foreground are marked instead.
SupportMask align_mask_nonempty(const SupportMask& mask, std::size_t target_h, std::size_t target_w);

/// Splits pixel descriptors by mask in row-major scan order. Throws
/// EmptyForeground when the mask has no foreground pixel.
PixelPartition partition_support(const FeatureMap& features, const SupportMask& mask);

/// Foreground descriptors only, without the empty check.
DescriptorSet masked_descriptors(const FeatureMap& features, const SupportMask& mask);

double cosine(std::span<const double> a, std::span<const double> b);

/// Per query pixel, the max cosine against `descriptors`. Throws EmptyDescriptorSet.
Tensor prior_map(const FeatureMap& query, const DescriptorSet& descriptors);

/// Background channel falls back to -1 everywhere when the mask covers the frame.
DualPriorMask dual_prior(const FeatureMap& query, const FeatureMap& support, const SupportMask& mask);

/// Channelwise mean over shots. Throws EmptyList / ShapeMismatch.
DualPriorMask kshot_average(std::span<const DualPriorMask> masks);

/// Bilinear resize of both channels; prior values never carry gradients.
DualPriorMask resize_prior(const DualPriorMask& prior, std::size_t h, std::size_t w);

}  // namespace protoseg
