#include "protoseg/model.hpp"

#include <algorithm>

#include "protoseg/error.hpp"

namespace protoseg {

std::size_t ModelConfig::stages() const { return std::max<std::size_t>(4, levels); }

std::size_t ModelConfig::stage_width(std::size_t stage) const {
    if (stage_widths.empty()) return 0;
    return stage_widths[std::min(stage, stage_widths.size() - 1)];
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
    if (levels < 1) fail("levels must be >= 1");
    if (stage_widths.empty()) fail("stage_widths must not be empty");
    for (std::size_t w : stage_widths) {
        if (w == 0) fail("stage widths must be positive");
    }
    if (prototypes < 1) fail("prototypes must be >= 1");
    if (head_width < 1) fail("head_width must be >= 1");
    if (!(init_gain > 0.0)) fail("init_gain must be positive");
}

namespace {

std::size_t stage_stride(std::size_t stage) { return stage < 3 ? 2 : 1; }

template <typename MakeParam>
BackboneParams build_backbone(const ModelConfig& cfg, MakeParam make) {
    cfg.validate();
    BackboneParams p;
    std::size_t in = 3;
    for (std::size_t s = 0; s < cfg.stages(); ++s) {
        const std::size_t w = cfg.stage_width(s);
        std::vector<ConvLayer> stage;
        for (std::size_t l = 0; l < 2; ++l) {
            ConvSpec spec{l == 0 ? in : w, w, 3, l == 0 ? stage_stride(s) : 1, 1};
            stage.push_back({spec, make(spec.weight_shape(), spec.fan_in()), make(Shape{w}, spec.fan_in())});
        }
        p.stages.push_back(std::move(stage));
        in = w;
    }
    return p;
}

// Channel count of the class-aware feature at decoder level t (deepest first).
std::size_t head_inputs(const ModelConfig& cfg, std::size_t t) {
    return cfg.stage_width(cfg.stages() - 1 - t) + cfg.prototypes + 2;
}

}  // namespace

BackboneParams BackboneParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
    return build_backbone(cfg, [&](Shape shape, std::size_t fan_in) {
        return init_uniform(std::move(shape), fan_in, rng, cfg.init_gain);
    });
}

BackboneParams BackboneParams::zeros(const ModelConfig& cfg) {
    return build_backbone(cfg, [](Shape shape, std::size_t) { return Tensor::zeros(std::move(shape)).set_requires_grad(true); });
}

void BackboneParams::collect(std::vector<NamedTensor>& out) const {
    for (std::size_t s = 0; s < stages.size(); ++s) {
        for (std::size_t l = 0; l < stages[s].size(); ++l) {
            const std::string base = "backbone.stage" + std::to_string(s) + ".conv" + std::to_string(l);
            out.push_back({base + ".weight", stages[s][l].weight});
            out.push_back({base + ".bias", stages[s][l].bias});
        }
    }
}

std::vector<FeatureMap> backbone_forward(const Tensor& image, const BackboneParams& params) {
    if (image.ndim() != 3 || image.dim(0) != 3) {
        throw Error(ErrorKind::ShapeMismatch, "backbone expects 3 x H x W, got " + shape_to_string(image.shape()));
    }
    if (image.dim(1) < kMinImageSize || image.dim(2) < kMinImageSize) {
        throw Error(ErrorKind::ImageTooSmall, "image " + shape_to_string(image.shape()) + " smaller than 16 x 16");
    }
    std::vector<FeatureMap> out;
    Tensor x = add_scalar(image, -0.5);
    for (std::size_t s = 0; s < params.stages.size(); ++s) {
        for (const auto& layer : params.stages[s]) x = relu(conv2d(x, layer.spec, layer.weight, layer.bias));
        out.push_back({x, static_cast<int>(s)});
    }
    return out;
}

SegmentationModel SegmentationModel::init(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SegmentationModel m;
    m.config_ = cfg;
    m.backbone_ = BackboneParams::init(cfg, rng);
    for (std::size_t t = 0; t < cfg.levels; ++t) {
        m.heads_.push_back(HeadParams::init(head_inputs(cfg, t), cfg.head_width, cfg.head_blocks, rng, cfg.init_gain));
    }
    return m;
}

SegmentationModel SegmentationModel::zeros(const ModelConfig& cfg) {
    SegmentationModel m;
    m.config_ = cfg;
    m.backbone_ = BackboneParams::zeros(cfg);
    for (std::size_t t = 0; t < cfg.levels; ++t) {
        m.heads_.push_back(HeadParams::zeros(head_inputs(cfg, t), cfg.head_width, cfg.head_blocks));
    }
    return m;
}

std::vector<NamedTensor> SegmentationModel::parameters() const {
    std::vector<NamedTensor> out;
    backbone_.collect(out);
    for (std::size_t t = 0; t < heads_.size(); ++t) heads_[t].collect("head" + std::to_string(t), out);
    return out;
}

std::vector<double> LossReport::values() const {
    std::vector<double> v;
    for (const auto& l : per_level) v.push_back(l.item());
    return v;
}

namespace {

// Decoder inputs: the last `levels` stages, deepest first.
std::vector<FeatureMap> decoder_levels(const std::vector<FeatureMap>& pyramid, std::size_t levels) {
    return {pyramid.rbegin(), pyramid.rbegin() + static_cast<std::ptrdiff_t>(levels)};
}

Guidance guidance_for(const SegmentationModel& model, const Episode& ep, const FeatureMap& query_deep) {
    ep.validate();
    NoGradGuard guard;
    const ModelConfig& cfg = model.config();
    std::vector<std::vector<FeatureMap>> shots;  // [shot][level]
    for (const auto& shot : ep.support) {
        shots.push_back(decoder_levels(backbone_forward(shot.image, model.backbone()), cfg.levels));
    }
    const FeatureMap query{query_deep.values.detach(), query_deep.level_id};
    Guidance g;
    std::vector<DualPriorMask> priors;
    for (std::size_t s = 0; s < shots.size(); ++s) {
        const FeatureMap& deep = shots[s][0];
        priors.push_back(dual_prior(query, deep, align_mask_nonempty(ep.support[s].mask, deep.height(), deep.width())));
    }
    g.prior = kshot_average(priors);
    for (std::size_t t = 0; t < cfg.levels; ++t) {
        std::vector<FeatureMap> feats;
        std::vector<SupportMask> masks;
        for (std::size_t s = 0; s < shots.size(); ++s) {
            const FeatureMap& f = shots[s][t];
            feats.push_back(f);
            masks.push_back(align_mask_nonempty(ep.support[s].mask, f.height(), f.width()));
        }
        g.prototypes.push_back(extract_prototypes(feats, masks, cfg.prototypes, cfg.kmeans_iterations));
    }
    return g;
}

}  // namespace

Guidance compute_guidance(const SegmentationModel& model, const Episode& ep) {
    NoGradGuard guard;
    const auto pyramid = backbone_forward(ep.query_image, model.backbone());
    return guidance_for(model, ep, pyramid.back());
}

ForwardResult episode_forward(const SegmentationModel& model, const Episode& ep, const Guidance* guidance) {
    const ModelConfig& cfg = model.config();
    ForwardResult r;
    const auto levels = decoder_levels(backbone_forward(ep.query_image, model.backbone()), cfg.levels);
    r.guidance = guidance ? *guidance : guidance_for(model, ep, levels[0]);
    if (r.guidance.prototypes.size() != cfg.levels) {
        throw Error(ErrorKind::WrongLevelCount, "guidance has " + std::to_string(r.guidance.prototypes.size()) +
                                                    " prototype sets for " + std::to_string(cfg.levels) + " levels");
    }

    std::vector<ClassAwareFeature> fused;
    for (std::size_t t = 0; t < cfg.levels; ++t) {
        DualPriorMask prior = resize_prior(r.guidance.prior, levels[t].height(), levels[t].width());
        if (!cfg.use_fg_prior) prior.foreground = Tensor::zeros(prior.foreground.shape());
        if (!cfg.use_bg_prior) prior.background = Tensor::zeros(prior.background.shape());
        fused.push_back(fuse(levels[t], r.guidance.prototypes[t], prior));
    }
    r.logits = decode_pyramid(fused, model.heads(), DecodeOptions{cfg.erase});

    const std::size_t h = ep.query_mask.height(), w = ep.query_mask.width();
    const Tensor& target = ep.query_mask.values();
    for (const auto& logits : r.logits) {
        Tensor loss = cross_entropy_2class(bilinear_resize(logits.values, h, w), target);
        r.loss.total = r.loss.total.defined() ? add(r.loss.total, loss) : loss;
        r.loss.per_level.push_back(std::move(loss));
    }
    {
        NoGradGuard guard;
        r.prediction = predict(ParsingLogits{bilinear_resize(r.logits.back().values, h, w)});
    }
    return r;
}

SegmentationMask segment(const SegmentationModel& model, const Episode& ep) {
    NoGradGuard guard;
    return episode_forward(model, ep).prediction;
}

void OptimState::reset(const std::vector<NamedTensor>& params) {
    velocity.clear();
    for (const auto& p : params) velocity.push_back(Tensor::zeros(p.value.shape()));
}

void sgd_step(const std::vector<NamedTensor>& params, OptimState& state) {
    if (state.velocity.size() != params.size()) {
        throw Error(ErrorKind::ShapeMismatch, "optimizer state tracks " + std::to_string(state.velocity.size()) +
                                                  " tensors, model has " + std::to_string(params.size()));
    }
    for (const auto& p : params) {
        if (!p.value.has_grad()) throw Error(ErrorKind::MissingGradient, "no gradient for " + p.name);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor param = params[i].value;
        if (state.velocity[i].shape() != param.shape()) {
            throw Error(ErrorKind::ShapeMismatch, "velocity shape differs for " + params[i].name);
        }
        auto p = param.mutable_data();
        auto g = param.grad();
        auto v = state.velocity[i].mutable_data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = state.momentum * v[j] + g[j] + state.weight_decay * p[j];
            p[j] -= state.lr * v[j];
        }
    }
}

}  // namespace protoseg
