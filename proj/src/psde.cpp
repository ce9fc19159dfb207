#include "protoseg/psde.hpp"

#include <cmath>

#include "protoseg/error.hpp"

namespace protoseg {

Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng, double gain) {
    const double s = gain / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -s, s, rng).set_requires_grad(true);
}

namespace {

ConvSpec pointwise(std::size_t in, std::size_t out) { return {in, out, 1, 1, 0}; }
ConvSpec same3x3(std::size_t in, std::size_t out) { return {in, out, 3, 1, 1}; }

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape)).set_requires_grad(true); }

}  // namespace

HeadParams HeadParams::init(std::size_t in_channels, std::size_t width, std::size_t blocks, std::mt19937_64& rng,
                            double gain) {
    HeadParams p;
    auto conv = [&](const ConvSpec& spec, Tensor& w, Tensor& b) {
        w = init_uniform(spec.weight_shape(), spec.fan_in(), rng, gain);
        b = init_uniform({spec.out_channels}, spec.fan_in(), rng, gain);
    };
    conv(pointwise(in_channels, width), p.proj_weight, p.proj_bias);
    p.blocks.resize(blocks);
    for (auto& blk : p.blocks) {
        conv(same3x3(width, width), blk.conv1_weight, blk.conv1_bias);
        conv(same3x3(width, width), blk.conv2_weight, blk.conv2_bias);
    }
    conv(pointwise(width, 2), p.out_weight, p.out_bias);
    return p;
}

HeadParams HeadParams::zeros(std::size_t in_channels, std::size_t width, std::size_t blocks) {
    HeadParams p;
    p.proj_weight = zeros_param(pointwise(in_channels, width).weight_shape());
    p.proj_bias = zeros_param({width});
    p.blocks.resize(blocks);
    for (auto& blk : p.blocks) {
        blk.conv1_weight = zeros_param(same3x3(width, width).weight_shape());
        blk.conv1_bias = zeros_param({width});
        blk.conv2_weight = zeros_param(same3x3(width, width).weight_shape());
        blk.conv2_bias = zeros_param({width});
    }
    p.out_weight = zeros_param(pointwise(width, 2).weight_shape());
    p.out_bias = zeros_param({2});
    return p;
}

void HeadParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".proj.weight", proj_weight});
    out.push_back({prefix + ".proj.bias", proj_bias});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string b = prefix + ".block" + std::to_string(i);
        out.push_back({b + ".conv1.weight", blocks[i].conv1_weight});
        out.push_back({b + ".conv1.bias", blocks[i].conv1_bias});
        out.push_back({b + ".conv2.weight", blocks[i].conv2_weight});
        out.push_back({b + ".conv2.bias", blocks[i].conv2_bias});
    }
    out.push_back({prefix + ".out.weight", out_weight});
    out.push_back({prefix + ".out.bias", out_bias});
}

namespace {

Tensor run_head(const Tensor& x, const HeadParams& p) {
    if (x.ndim() != 3 || x.dim(0) != p.in_channels()) {
        throw Error(ErrorKind::ShapeMismatch, "head expects " + std::to_string(p.in_channels()) + " channels, got " +
                                                  shape_to_string(x.shape()));
    }
    const std::size_t width = p.width();
    Tensor y = relu(conv2d(x, pointwise(p.in_channels(), width), p.proj_weight, p.proj_bias));
    for (const auto& blk : p.blocks) {
        Tensor r = relu(conv2d(y, same3x3(width, width), blk.conv1_weight, blk.conv1_bias));
        r = conv2d(r, same3x3(width, width), blk.conv2_weight, blk.conv2_bias);
        y = relu(add(y, r));
    }
    return conv2d(y, pointwise(width, 2), p.out_weight, p.out_bias);
}

}  // namespace

ParsingLogits coarse_head(const ClassAwareFeature& x, const HeadParams& params) {
    return {run_head(x.values, params)};
}

NegativeWeightMap negative_weight(const ParsingLogits& r) {
    Tensor fg = channel(softmax_channel(r.values), 0);
    return {add_scalar(scale(fg, -1.0), 1.0)};
}

ParsingLogits erase_and_activate(const ClassAwareFeature& x, const NegativeWeightMap& e, const HeadParams& params) {
    return {run_head(mul_channelwise(x.values, e.values), params)};
}

ParsingLogits merge(const ParsingLogits& r_i, const ParsingLogits& r_ii) { return {add(r_i.values, r_ii.values)}; }

SegmentationMask predict(const ParsingLogits& r) {
    if (r.values.ndim() != 3 || r.values.dim(0) != 2) {
        throw Error(ErrorKind::ShapeMismatch, "predict expects 2 x H x W logits");
    }
    const std::size_t plane = r.height() * r.width();
    auto v = r.values.data();
    Tensor out({r.height(), r.width()});
    auto o = out.mutable_data();
    for (std::size_t p = 0; p < plane; ++p) o[p] = v[p] > v[plane + p] ? 1.0 : 0.0;
    return SegmentationMask(std::move(out));
}

std::vector<ParsingLogits> decode_pyramid(const std::vector<ClassAwareFeature>& features,
                                          const std::vector<HeadParams>& heads, DecodeOptions options) {
    if (features.empty() || features.size() != heads.size()) {
        throw Error(ErrorKind::WrongLevelCount, std::to_string(features.size()) + " feature levels for " +
                                                    std::to_string(heads.size()) + " heads");
    }
    std::vector<ParsingLogits> results;
    results.reserve(features.size());
    results.push_back(coarse_head(features[0], heads[0]));
    for (std::size_t t = 1; t < features.size(); ++t) {
        const Tensor& x = features[t].values;
        ParsingLogits up{bilinear_resize(results.back().values, x.dim(1), x.dim(2))};
        NegativeWeightMap e = options.erase ? negative_weight(up)
                                            : NegativeWeightMap{Tensor::ones({x.dim(1), x.dim(2)})};
        results.push_back(merge(up, erase_and_activate(features[t], e, heads[t])));
    }
    return results;
}

}  // namespace protoseg
