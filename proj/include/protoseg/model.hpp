#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "protoseg/dpmg.hpp"
#include "protoseg/episodes.hpp"
#include "protoseg/ops.hpp"
#include "protoseg/prototype.hpp"
#include "protoseg/psde.hpp"

namespace protoseg {

struct ModelConfig {
    std::size_t levels = 4;  // decoder levels fed from the deepest backbone stages
    std::vector<std::size_t> stage_widths = {16, 32, 64, 64};
    std::size_t prototypes = kDefaultPrototypes;
    std::size_t kmeans_iterations = kDefaultKMeansIterations;
    std::size_t head_width = 64;
    std::size_t head_blocks = 2;
    bool use_fg_prior = true;
    bool use_bg_prior = true;
    bool erase = true;
    double init_gain = 1.0;  // scales the fan-in init bound of every layer

    /// Backbone stages: max(4, levels). Widths past the listed ones repeat the last.
    std::size_t stages() const;
    std::size_t stage_width(std::size_t stage) const;
    /// Throws ConfigError.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

inline constexpr std::size_t kMinImageSize = 16;

struct ConvLayer {
    ConvSpec spec;
    Tensor weight;
    Tensor bias;
};

/// Stage s: conv3x3 (stride 2 for the first three stages, 1 after) then
/// conv3x3, each followed by relu.
struct BackboneParams {
    std::vector<std::vector<ConvLayer>> stages;

    static BackboneParams init(const ModelConfig& cfg, std::mt19937_64& rng);
    static BackboneParams zeros(const ModelConfig& cfg);
    void collect(std::vector<NamedTensor>& out) const;
};

/// Feature maps of every stage, shallow to deep. Input is centred (x - 0.5)
/// before the first conv. Throws ImageTooSmall when H or W < 16.
std::vector<FeatureMap> backbone_forward(const Tensor& image, const BackboneParams& params);

class SegmentationModel {
public:
    SegmentationModel() = default;
    /// Seeded initialization of every parameter.
    static SegmentationModel init(const ModelConfig& cfg, std::uint64_t seed);
    static SegmentationModel zeros(const ModelConfig& cfg);

    const ModelConfig& config() const { return config_; }
    const BackboneParams& backbone() const { return backbone_; }
    /// One head per decoder level, deepest first.
    const std::vector<HeadParams>& heads() const { return heads_; }

    /// Every trainable tensor with a stable name, in a fixed order.
    std::vector<NamedTensor> parameters() const;

private:
    ModelConfig config_;
    BackboneParams backbone_;
    std::vector<HeadParams> heads_;
};

/// Support-derived constants of an episode: the dual prior at the deepest
/// level and one prototype set per decoder level (deepest first).
struct Guidance {
    DualPriorMask prior;
    std::vector<PrototypeSet> prototypes;
};

struct LossReport {
    std::vector<Tensor> per_level;  // deepest first
    Tensor total;

    std::vector<double> values() const;
};

struct ForwardResult {
    std::vector<ParsingLogits> logits;  // per level at feature resolution, deepest first
    SegmentationMask prediction;        // at query image resolution
    LossReport loss;
    Guidance guidance;
};

/// Guidance from the support shots, computed without gradient tracking.
Guidance compute_guidance(const SegmentationModel& model, const Episode& ep);

/// Full episode pass. With `guidance` given, it replaces the support branch
/// (used to hold the guidance fixed while perturbing parameters).
ForwardResult episode_forward(const SegmentationModel& model, const Episode& ep, const Guidance* guidance = nullptr);

/// Prediction only, under no-grad.
SegmentationMask segment(const SegmentationModel& model, const Episode& ep);

struct OptimState {
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<Tensor> velocity;  // mirrors the parameter list

    /// Zero velocity buffers shaped like `params`.
    void reset(const std::vector<NamedTensor>& params);
};

/// v <- momentum * v + grad + weight_decay * p; p <- p - lr * v, in place.
/// Throws MissingGradient when a parameter has no gradient.
void sgd_step(const std::vector<NamedTensor>& params, OptimState& state);

}  // namespace protoseg
