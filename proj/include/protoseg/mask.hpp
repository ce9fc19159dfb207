#pragma once

#include <cstddef>

#include "protoseg/tensor.hpp"

namespace protoseg {

/// H x W tensor with entries in {0, 1}; 1 marks foreground.
class BinaryMask {
public:
    BinaryMask() = default;
    /// Throws ShapeMismatch unless `values` is rank 2 and binary.
    explicit BinaryMask(Tensor values);

    /// Entries >= threshold become 1.
    static Tensor threshold(const Tensor& values, double threshold);

    const Tensor& values() const { return values_; }
    std::size_t height() const { return values_.dim(0); }
    std::size_t width() const { return values_.dim(1); }
    std::size_t foreground_count() const;
    bool defined() const { return values_.defined(); }

private:
    Tensor values_;
};

/// Annotation of a support image.
class SupportMask : public BinaryMask {
public:
    using BinaryMask::BinaryMask;
};

/// Predicted or ground-truth query segmentation.
class SegmentationMask : public BinaryMask {
public:
    using BinaryMask::BinaryMask;
};

}  // namespace protoseg
