#include "protoseg/dpmg.hpp"

#include <algorithm>

#include "protoseg/error.hpp"
#include "protoseg/kernels.hpp"
#include "protoseg/ops.hpp"

namespace protoseg {

void DescriptorSet::push_back(std::span<const double> d) {
    if (d.size() != dim_) throw Error(ErrorKind::ShapeMismatch, "descriptor dimension mismatch");
    values_.insert(values_.end(), d.begin(), d.end());
}

void DescriptorSet::append(const DescriptorSet& other) {
    if (other.empty()) return;
    if (other.dim_ != dim_) throw Error(ErrorKind::ShapeMismatch, "descriptor dimension mismatch");
    values_.insert(values_.end(), other.values_.begin(), other.values_.end());
}

Tensor DualPriorMask::stacked() const {
    NoGradGuard guard;
    return concat_channels({foreground, background});
}

SupportMask align_mask(const SupportMask& mask, std::size_t target_h, std::size_t target_w) {
    if (mask.height() == target_h && mask.width() == target_w) return mask;
    NoGradGuard guard;
    return SupportMask(BinaryMask::threshold(bilinear_resize(mask.values(), target_h, target_w), 0.5));
}

SupportMask align_mask_nonempty(const SupportMask& mask, std::size_t target_h, std::size_t target_w) {
    SupportMask aligned = align_mask(mask, target_h, target_w);
    if (aligned.foreground_count() > 0 || mask.foreground_count() == 0) return aligned;
    const std::size_t h = mask.height(), w = mask.width();
    auto src = mask.values().data();
    std::vector<double> coverage(target_h * target_w, 0.0);
    // Each source pixel centre lands in exactly one target cell.
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t ty = std::min(target_h - 1, (2 * y + 1) * target_h / (2 * h));
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t tx = std::min(target_w - 1, (2 * x + 1) * target_w / (2 * w));
            coverage[ty * target_w + tx] += src[y * w + x];
        }
    }
    const double best = *std::max_element(coverage.begin(), coverage.end());
    Tensor out({target_h, target_w});
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < coverage.size(); ++i) o[i] = coverage[i] == best ? 1.0 : 0.0;
    return SupportMask(std::move(out));
}

namespace {

void require_aligned(const FeatureMap& f, const SupportMask& m) {
    if (f.height() != m.height() || f.width() != m.width()) {
        throw Error(ErrorKind::ShapeMismatch, "mask " + shape_to_string(m.values().shape()) +
                                                  " not aligned to features " + shape_to_string(f.values.shape()));
    }
}

}  // namespace

PixelPartition partition_support(const FeatureMap& features, const SupportMask& mask) {
    require_aligned(features, mask);
    const std::size_t c = features.channels(), plane = features.height() * features.width();
    PixelPartition part{DescriptorSet(c), DescriptorSet(c)};
    auto fv = features.values.data();
    auto mv = mask.values().data();
    std::vector<double> d(c);
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t k = 0; k < c; ++k) d[k] = fv[k * plane + p];
        (mv[p] == 1.0 ? part.foreground : part.background).push_back(d);
    }
    if (part.foreground.empty()) throw Error(ErrorKind::EmptyForeground, "support mask has no foreground pixel");
    return part;
}

DescriptorSet masked_descriptors(const FeatureMap& features, const SupportMask& mask) {
    require_aligned(features, mask);
    const std::size_t c = features.channels(), plane = features.height() * features.width();
    DescriptorSet out(c);
    auto fv = features.values.data();
    auto mv = mask.values().data();
    std::vector<double> d(c);
    for (std::size_t p = 0; p < plane; ++p) {
        if (mv[p] != 1.0) continue;
        for (std::size_t k = 0; k < c; ++k) d[k] = fv[k * plane + p];
        out.push_back(d);
    }
    return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorKind::ShapeMismatch, "cosine of unequal dimensions");
    return kernels::cosine(a, b);
}

Tensor prior_map(const FeatureMap& query, const DescriptorSet& descriptors) {
    if (descriptors.empty()) throw Error(ErrorKind::EmptyDescriptorSet, "prior map needs at least one descriptor");
    if (descriptors.dim() != query.channels()) throw Error(ErrorKind::ShapeMismatch, "descriptor/query channel mismatch");
    Tensor out({query.height(), query.width()});
    kernels::parallel::max_cosine(query.channels(), query.height() * query.width(), query.values.data().data(),
                                  descriptors.size(), descriptors.flat().data(), out.mutable_data().data());
    return out;
}

DualPriorMask dual_prior(const FeatureMap& query, const FeatureMap& support, const SupportMask& mask) {
    if (query.channels() != support.channels()) throw Error(ErrorKind::ShapeMismatch, "query/support channel mismatch");
    PixelPartition part = partition_support(support, mask);
    DualPriorMask out;
    out.foreground = prior_map(query, part.foreground);
    out.background = part.background.empty() ? Tensor::full({query.height(), query.width()}, -1.0)
                                             : prior_map(query, part.background);
    return out;
}

DualPriorMask kshot_average(std::span<const DualPriorMask> masks) {
    if (masks.empty()) throw Error(ErrorKind::EmptyList, "k-shot average of no masks");
    const Shape& shape = masks.front().foreground.shape();
    Tensor fg(shape), bg(shape);
    auto f = fg.mutable_data();
    auto b = bg.mutable_data();
    for (const auto& m : masks) {
        if (m.foreground.shape() != shape || m.background.shape() != shape) {
            throw Error(ErrorKind::ShapeMismatch, "k-shot masks differ in shape");
        }
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] += m.foreground.data()[i];
            b[i] += m.background.data()[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(masks.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] *= inv;
        b[i] *= inv;
    }
    return {fg, bg};
}

DualPriorMask resize_prior(const DualPriorMask& prior, std::size_t h, std::size_t w) {
    NoGradGuard guard;
    return {bilinear_resize(prior.foreground, h, w), bilinear_resize(prior.background, h, w)};
}

}  // namespace protoseg
