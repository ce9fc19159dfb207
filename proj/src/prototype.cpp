#include "protoseg/prototype.hpp"

#include <algorithm>
#include <vector>

#include "protoseg/error.hpp"
#include "protoseg/ops.hpp"

namespace protoseg {

namespace {

DescriptorSet mean_descriptor(const DescriptorSet& set) {
    std::vector<double> acc(set.dim(), 0.0);
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto d = set[i];
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += d[k];
    }
    for (double& v : acc) v /= static_cast<double>(set.size());
    DescriptorSet out(set.dim());
    out.push_back(acc);
    return out;
}

}  // namespace

PrototypeSet cluster_prototypes(const DescriptorSet& foreground, std::size_t count, std::size_t iterations) {
    if (foreground.empty()) throw Error(ErrorKind::EmptyForeground, "no foreground descriptors to cluster");
    if (count == 0) throw Error(ErrorKind::ConfigError, "prototype count must be >= 1");
    const std::size_t n = foreground.size(), dim = foreground.dim();
    const std::size_t k = std::min(count, n);

    std::vector<std::vector<double>> centroids(k);
    for (std::size_t j = 0; j < k; ++j) {
        auto d = foreground[j * n / k];
        centroids[j].assign(d.begin(), d.end());
    }

    std::vector<std::size_t> assign(n, 0);
    for (std::size_t it = 0; it < iterations && k > 1; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_cos = cosine(foreground[i], centroids[0]);
            for (std::size_t j = 1; j < k; ++j) {
                const double c = cosine(foreground[i], centroids[j]);
                if (c > best_cos) {
                    best_cos = c;
                    best = j;
                }
            }
            assign[i] = best;
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> members(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto d = foreground[i];
            for (std::size_t c = 0; c < dim; ++c) sums[assign[i]][c] += d[c];
            ++members[assign[i]];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (members[j] == 0) continue;
            for (std::size_t c = 0; c < dim; ++c) centroids[j][c] = sums[j][c] / static_cast<double>(members[j]);
        }
    }
    if (k == 1) {
        // One centroid absorbs every descriptor: the masked average.
        DescriptorSet avg = mean_descriptor(foreground);
        centroids[0].assign(avg[0].begin(), avg[0].end());
    }

    PrototypeSet out{DescriptorSet(dim)};
    for (const auto& c : centroids) out.prototypes.push_back(c);
    if (k < count) {
        DescriptorSet avg = mean_descriptor(foreground);
        for (std::size_t j = k; j < count; ++j) out.prototypes.push_back(avg[0]);
    }
    return out;
}

PrototypeSet extract_prototypes(const FeatureMap& support, const SupportMask& mask, std::size_t count,
                                std::size_t iterations) {
    return cluster_prototypes(masked_descriptors(support, mask), count, iterations);
}

PrototypeSet extract_prototypes(std::span<const FeatureMap> supports, std::span<const SupportMask> masks,
                                std::size_t count, std::size_t iterations) {
    if (supports.empty() || supports.size() != masks.size()) {
        throw Error(ErrorKind::EmptyList, "prototype extraction needs one mask per support map");
    }
    DescriptorSet pooled(supports.front().channels());
    for (std::size_t s = 0; s < supports.size(); ++s) {
        DescriptorSet fg = masked_descriptors(supports[s], masks[s]);
        if (fg.empty()) throw Error(ErrorKind::EmptyForeground, "support shot " + std::to_string(s) + " has no foreground");
        pooled.append(fg);
    }
    return cluster_prototypes(pooled, count, iterations);
}

ClassAwareFeature fuse(const FeatureMap& query, const PrototypeSet& prototypes, const DualPriorMask& prior) {
    if (prototypes.dim() != query.channels()) throw Error(ErrorKind::ShapeMismatch, "prototype/query channel mismatch");
    if (prior.height() != query.height() || prior.width() != query.width()) {
        throw Error(ErrorKind::ShapeMismatch, "prior mask not resized to query resolution");
    }
    std::vector<Tensor> parts;
    parts.reserve(prototypes.count() + 3);
    parts.push_back(query.values);
    for (std::size_t j = 0; j < prototypes.count(); ++j) parts.push_back(cosine_map(query.values, prototypes[j]));
    parts.push_back(prior.foreground.detach());
    parts.push_back(prior.background.detach());
    return {concat_channels(parts)};
}

}  // namespace protoseg
