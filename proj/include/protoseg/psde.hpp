#pragma once

// Hierarchical decoding: a residual head produces coarse logits at the
// deepest level; each shallower level erases confidently-foreground pixels
// from its class-aware features, decodes the remainder with its own head and
// adds the result onto the upsampled previous logits.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "protoseg/mask.hpp"
#include "protoseg/ops.hpp"
#include "protoseg/prototype.hpp"

namespace protoseg {

/// 2 x H x W logits: channel 0 foreground, channel 1 background.
struct ParsingLogits {
    Tensor values;

    std::size_t height() const { return values.dim(1); }
    std::size_t width() const { return values.dim(2); }
};

/// H x W map of 1 - softmax foreground probability; entries in (0, 1).
struct NegativeWeightMap {
    Tensor values;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct ResidualBlockParams {
    Tensor conv1_weight, conv1_bias;
    Tensor conv2_weight, conv2_bias;
};

/// 1x1 projection to `width`, residual blocks of two 3x3 convs, 1x1 output to 2.
struct HeadParams {
    Tensor proj_weight, proj_bias;
    std::vector<ResidualBlockParams> blocks;
    Tensor out_weight, out_bias;

    std::size_t in_channels() const { return proj_weight.dim(1); }
    std::size_t width() const { return proj_weight.dim(0); }

    /// Weights and biases uniform in [-g/sqrt(fan_in), g/sqrt(fan_in)], g = gain.
    static HeadParams init(std::size_t in_channels, std::size_t width, std::size_t blocks, std::mt19937_64& rng,
                           double gain = 1.0);
    static HeadParams zeros(std::size_t in_channels, std::size_t width, std::size_t blocks);

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Uniform fan-in initialization shared by every conv layer.
Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng, double gain = 1.0);

ParsingLogits coarse_head(const ClassAwareFeature& x, const HeadParams& params);

NegativeWeightMap negative_weight(const ParsingLogits& r);

ParsingLogits erase_and_activate(const ClassAwareFeature& x, const NegativeWeightMap& e, const HeadParams& params);

ParsingLogits merge(const ParsingLogits& r_i, const ParsingLogits& r_ii);

/// Foreground iff R_P > R_N strictly; exact ties go to background.
SegmentationMask predict(const ParsingLogits& r);

struct DecodeOptions {
    /// When false, every level sees an all-ones weight map (no erasing).
    bool erase = true;
};

/// `features` and `heads` are ordered deepest first. Returns one merged
/// result per level; entry 0 is the coarse head output.
std::vector<ParsingLogits> decode_pyramid(const std::vector<ClassAwareFeature>& features,
                                          const std::vector<HeadParams>& heads, DecodeOptions options = {});

}  // namespace protoseg
