#include "protoseg/mask.hpp"

#include "protoseg/error.hpp"

namespace protoseg {

BinaryMask::BinaryMask(Tensor values) : values_(std::move(values)) {
    if (values_.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "mask must be H x W, got " + shape_to_string(values_.shape()));
    for (double v : values_.data()) {
        if (v != 0.0 && v != 1.0) throw Error(ErrorKind::ShapeMismatch, "mask must be binary");
    }
}

Tensor BinaryMask::threshold(const Tensor& values, double threshold) {
    Tensor out(values.shape());
    auto src = values.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] >= threshold ? 1.0 : 0.0;
    return out;
}

std::size_t BinaryMask::foreground_count() const {
    std::size_t n = 0;
    for (double v : values_.data()) n += v == 1.0;
    return n;
}

}  // namespace protoseg
