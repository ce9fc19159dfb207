#pragma once

#include <cstddef>
#include <span>

#include "protoseg/dpmg.hpp"

namespace protoseg {

inline constexpr std::size_t kDefaultPrototypes = 3;
inline constexpr std::size_t kDefaultKMeansIterations = 10;

/// P support prototypes of dimension C. Plain data; never tracks gradients.
struct PrototypeSet {
    DescriptorSet prototypes;

    std::size_t count() const { return prototypes.size(); }
    std::size_t dim() const { return prototypes.dim(); }
    std::span<const double> operator[](std::size_t i) const { return prototypes[i]; }
};

/// Query features followed by P similarity maps and the 2 prior channels.
struct ClassAwareFeature {
    Tensor values;  // (C + P + 2) x H x W
};

/// Seeded k-means over foreground descriptors: centroids start at evenly
/// spaced descriptors in scan order, pixels join the centroid of highest
/// cosine (lowest index on ties), centroids move to the arithmetic mean of
/// their members and stay put when they lose all members. With fewer than P
/// descriptors each one is its own centroid and the masked average fills the
/// remaining slots. Throws EmptyForeground.
PrototypeSet cluster_prototypes(const DescriptorSet& foreground, std::size_t count,
                                std::size_t iterations = kDefaultKMeansIterations);

PrototypeSet extract_prototypes(const FeatureMap& support, const SupportMask& mask,
                                std::size_t count = kDefaultPrototypes,
                                std::size_t iterations = kDefaultKMeansIterations);

/// Prototypes for a k-shot episode: foreground descriptors of all shots are
/// pooled before clustering.
PrototypeSet extract_prototypes(std::span<const FeatureMap> supports, std::span<const SupportMask> masks,
                                std::size_t count = kDefaultPrototypes,
                                std::size_t iterations = kDefaultKMeansIterations);

/// Channel layout: [query C; cosine to prototype 0..P-1; prior fg; prior bg].
/// Gradients flow into the query features (both the copied channels and the
/// similarity maps); prototypes and prior are constants.
ClassAwareFeature fuse(const FeatureMap& query, const PrototypeSet& prototypes, const DualPriorMask& prior);

}  // namespace protoseg
