#include "protoseg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "protoseg/error.hpp"
#include "protoseg/kernels.hpp"

namespace protoseg {

using detail::make_result;
using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_to_string(a.shape()) + " vs " +
                                                  shape_to_string(b.shape()));
    }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.ndim() != rank) {
        throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) +
                                                  ", got " + shape_to_string(x.shape()));
    }
}

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

// Shared body for add/sub/mul with one-element broadcast on either side.
template <typename F, typename Da, typename Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, Da dfa, Db dfb) {
    const bool a_s = is_scalar(a) && !is_scalar(b);
    const bool b_s = is_scalar(b) && !is_scalar(a);
    if (!a_s && !b_s) require_same_shape(a, b, name);
    const Tensor& big = a_s ? b : a;
    const std::size_t n = big.numel();
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[a_s ? 0 : i], bv[b_s ? 0 : i]);

    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(big.shape(), std::move(out), {a, b}, [=](const TensorImpl& o) {
        if (ai->requires_grad) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                ga[a_s ? 0 : i] += o.grad[i] * dfa(ai->data[a_s ? 0 : i], bi->data[b_s ? 0 : i]);
            }
        }
        if (bi->requires_grad) {
            auto gb = bi->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                gb[b_s ? 0 : i] += o.grad[i] * dfb(ai->data[a_s ? 0 : i], bi->data[b_s ? 0 : i]);
            }
        }
    });
}

}  // namespace

std::size_t ConvSpec::output_size(std::size_t in) const {
    if (kernel_size < 1 || stride < 1) throw Error(ErrorKind::ShapeMismatch, "conv kernel and stride must be >= 1");
    if (in + 2 * padding < kernel_size) {
        throw Error(ErrorKind::ShapeMismatch, "conv input " + std::to_string(in) + " smaller than kernel");
    }
    return (in + 2 * padding - kernel_size) / stride + 1;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v *= s;
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [ai, s](const TensorImpl& o) {
        auto g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * o.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v += s;
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [ai](const TensorImpl& o) { ai->accumulate_grad(o.grad); });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    ImplPtr xi = x.impl();
    return make_result(x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
        auto g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xi->data[i] > 0.0) g[i] += o.grad[i];
        }
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    ImplPtr xi = x.impl();
    return make_result({1}, {s}, {x}, [xi](const TensorImpl& o) {
        auto g = xi->grad_buffer();
        for (double& v : g) v += o.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 3, "conv2d");
    if (input.dim(0) != spec.in_channels) {
        throw Error(ErrorKind::ShapeMismatch, "conv2d: input has " + std::to_string(input.dim(0)) +
                                                  " channels, spec expects " + std::to_string(spec.in_channels));
    }
    if (weight.shape() != spec.weight_shape()) {
        throw Error(ErrorKind::ShapeMismatch, "conv2d: weight " + shape_to_string(weight.shape()) + " vs spec " +
                                                  shape_to_string(spec.weight_shape()));
    }
    if (bias.shape() != Shape{spec.out_channels}) {
        throw Error(ErrorKind::ShapeMismatch, "conv2d: bias shape " + shape_to_string(bias.shape()));
    }
    kernels::ConvGeometry g{spec.in_channels, input.dim(1), input.dim(2), spec.out_channels,
                            spec.kernel_size, spec.stride,  spec.padding};
    const std::size_t oh = spec.output_size(g.in_h), ow = spec.output_size(g.in_w);
    std::vector<double> out(spec.out_channels * oh * ow);
    kernels::parallel::conv2d_forward(g, input.data().data(), weight.data().data(), bias.data().data(), out.data());

    ImplPtr xi = input.impl(), wi = weight.impl(), bi = bias.impl();
    return make_result({spec.out_channels, oh, ow}, std::move(out), {input, weight, bias},
                       [g, xi, wi, bi](const TensorImpl& o) {
                           kernels::parallel::conv2d_backward(
                               g, xi->data.data(), wi->data.data(), o.grad.data(),
                               xi->requires_grad ? xi->grad_buffer().data() : nullptr,
                               wi->requires_grad ? wi->grad_buffer().data() : nullptr,
                               bi->requires_grad ? bi->grad_buffer().data() : nullptr);
                       });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorKind::EmptyList, "concat_channels of nothing");
    auto spatial = [](const Tensor& t) -> std::pair<std::size_t, std::size_t> {
        if (t.ndim() == 2) return {t.dim(0), t.dim(1)};
        if (t.ndim() == 3) return {t.dim(1), t.dim(2)};
        throw Error(ErrorKind::ShapeMismatch, "concat_channels: rank must be 2 or 3");
    };
    const auto [h, w] = spatial(parts.front());
    std::size_t channels = 0;
    for (const auto& p : parts) {
        if (spatial(p) != std::pair{h, w}) throw Error(ErrorKind::ShapeMismatch, "concat_channels: spatial mismatch");
        channels += p.numel() / (h * w);
    }
    std::vector<double> out;
    out.reserve(channels * h * w);
    std::vector<ImplPtr> impls;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        impls.push_back(p.impl());
    }
    return make_result({channels, h, w}, std::move(out), parts, [impls](const TensorImpl& o) {
        std::size_t offset = 0;
        for (const auto& pi : impls) {
            const std::size_t n = pi->data.size();
            if (pi->requires_grad) pi->accumulate_grad(std::span<const double>(o.grad).subspan(offset, n));
            offset += n;
        }
    });
}

Tensor channel(const Tensor& x, std::size_t index) {
    require_rank(x, 3, "channel");
    if (index >= x.dim(0)) throw Error(ErrorKind::ShapeMismatch, "channel index out of range");
    const std::size_t plane = x.dim(1) * x.dim(2);
    auto src = x.data().subspan(index * plane, plane);
    ImplPtr xi = x.impl();
    return make_result({x.dim(1), x.dim(2)}, std::vector<double>(src.begin(), src.end()), {x},
                       [xi, index, plane](const TensorImpl& o) {
                           auto g = xi->grad_buffer();
                           for (std::size_t i = 0; i < plane; ++i) g[index * plane + i] += o.grad[i];
                       });
}

Tensor mul_channelwise(const Tensor& x, const Tensor& e) {
    require_rank(x, 3, "mul_channelwise");
    require_rank(e, 2, "mul_channelwise");
    if (e.dim(0) != x.dim(1) || e.dim(1) != x.dim(2)) {
        throw Error(ErrorKind::ShapeMismatch, "mul_channelwise: map " + shape_to_string(e.shape()) +
                                                  " vs features " + shape_to_string(x.shape()));
    }
    const std::size_t c = x.dim(0), plane = e.numel();
    std::vector<double> out(x.numel());
    auto xv = x.data();
    auto ev = e.data();
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < plane; ++i) out[k * plane + i] = xv[k * plane + i] * ev[i];
    }
    ImplPtr xi = x.impl(), ei = e.impl();
    return make_result(x.shape(), std::move(out), {x, e}, [xi, ei, c, plane](const TensorImpl& o) {
        if (xi->requires_grad) {
            auto g = xi->grad_buffer();
            for (std::size_t k = 0; k < c; ++k) {
                for (std::size_t i = 0; i < plane; ++i) g[k * plane + i] += o.grad[k * plane + i] * ei->data[i];
            }
        }
        if (ei->requires_grad) {
            auto g = ei->grad_buffer();
            for (std::size_t k = 0; k < c; ++k) {
                for (std::size_t i = 0; i < plane; ++i) g[i] += o.grad[k * plane + i] * xi->data[k * plane + i];
            }
        }
    });
}

Tensor softmax_channel(const Tensor& x) {
    require_rank(x, 3, "softmax_channel");
    const std::size_t k = x.dim(0), plane = x.dim(1) * x.dim(2);
    if (k < 2) throw Error(ErrorKind::ShapeMismatch, "softmax_channel needs at least 2 channels");
    auto xv = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t p = 0; p < plane; ++p) {
        double mx = xv[p];
        for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, xv[c * plane + p]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            out[c * plane + p] = std::exp(xv[c * plane + p] - mx);
            z += out[c * plane + p];
        }
        for (std::size_t c = 0; c < k; ++c) out[c * plane + p] /= z;
    }
    ImplPtr xi = x.impl();
    // The output impl handed to backward holds the softmax values themselves.
    return make_result(x.shape(), std::move(out), {x}, [xi, k, plane](const TensorImpl& o) {
        const auto& y = o.data;
        auto g = xi->grad_buffer();
        for (std::size_t p = 0; p < plane; ++p) {
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) dot += o.grad[c * plane + p] * y[c * plane + p];
            for (std::size_t c = 0; c < k; ++c) g[c * plane + p] += y[c * plane + p] * (o.grad[c * plane + p] - dot);
        }
    });
}

namespace {

struct Tap {
    std::size_t lo, hi;
    double w_hi;
};

// PyTorch-style half-pixel source coordinates, clamped at the low edge.
std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
        double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        auto lo = static_cast<std::size_t>(src);
        if (lo > in - 1) lo = in - 1;
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[d] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t target_h, std::size_t target_w) {
    if (target_h < 1 || target_w < 1) throw Error(ErrorKind::ShapeMismatch, "bilinear_resize: empty target");
    if (x.ndim() != 2 && x.ndim() != 3) throw Error(ErrorKind::ShapeMismatch, "bilinear_resize: rank must be 2 or 3");
    const bool planar = x.ndim() == 2;
    const std::size_t c = planar ? 1 : x.dim(0);
    const std::size_t h = planar ? x.dim(0) : x.dim(1);
    const std::size_t w = planar ? x.dim(1) : x.dim(2);
    Shape out_shape = planar ? Shape{target_h, target_w} : Shape{c, target_h, target_w};
    ImplPtr xi = x.impl();

    if (h == target_h && w == target_w) {
        return make_result(out_shape, std::vector<double>(x.data().begin(), x.data().end()), {x},
                           [xi](const TensorImpl& o) { xi->accumulate_grad(o.grad); });
    }

    auto ty = resize_taps(h, target_h);
    auto tx = resize_taps(w, target_w);
    auto xv = x.data();
    std::vector<double> out(c * target_h * target_w);
    for (std::size_t k = 0; k < c; ++k) {
        const double* src = xv.data() + k * h * w;
        double* dst = out.data() + k * target_h * target_w;
        for (std::size_t y = 0; y < target_h; ++y) {
            const Tap& a = ty[y];
            for (std::size_t xx = 0; xx < target_w; ++xx) {
                const Tap& b = tx[xx];
                const double top = src[a.lo * w + b.lo] * (1.0 - b.w_hi) + src[a.lo * w + b.hi] * b.w_hi;
                const double bot = src[a.hi * w + b.lo] * (1.0 - b.w_hi) + src[a.hi * w + b.hi] * b.w_hi;
                dst[y * target_w + xx] = top * (1.0 - a.w_hi) + bot * a.w_hi;
            }
        }
    }
    return make_result(out_shape, std::move(out), {x}, [xi, ty, tx, c, h, w, target_h, target_w](const TensorImpl& o) {
        auto g = xi->grad_buffer();
        for (std::size_t k = 0; k < c; ++k) {
            double* dst = g.data() + k * h * w;
            const double* go = o.grad.data() + k * target_h * target_w;
            for (std::size_t y = 0; y < target_h; ++y) {
                const Tap& a = ty[y];
                for (std::size_t xx = 0; xx < target_w; ++xx) {
                    const Tap& b = tx[xx];
                    const double v = go[y * target_w + xx];
                    dst[a.lo * w + b.lo] += v * (1.0 - a.w_hi) * (1.0 - b.w_hi);
                    dst[a.lo * w + b.hi] += v * (1.0 - a.w_hi) * b.w_hi;
                    dst[a.hi * w + b.lo] += v * a.w_hi * (1.0 - b.w_hi);
                    dst[a.hi * w + b.hi] += v * a.w_hi * b.w_hi;
                }
            }
        }
    });
}

Tensor cross_entropy_2class(const Tensor& logits, const Tensor& target) {
    require_rank(logits, 3, "cross_entropy_2class");
    require_rank(target, 2, "cross_entropy_2class");
    if (logits.dim(0) != 2 || logits.dim(1) != target.dim(0) || logits.dim(2) != target.dim(1)) {
        throw Error(ErrorKind::ShapeMismatch, "cross_entropy_2class: logits " + shape_to_string(logits.shape()) +
                                                  " vs target " + shape_to_string(target.shape()));
    }
    const std::size_t plane = target.numel();
    auto lv = logits.data();
    auto tv = target.data();
    double total = 0.0;
    std::vector<double> fg_prob(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        const double fg = lv[p], bg = lv[plane + p];
        const double mx = std::max(fg, bg);
        const double lse = mx + std::log(std::exp(fg - mx) + std::exp(bg - mx));
        fg_prob[p] = std::exp(fg - lse);
        total += lse - (tv[p] > 0.5 ? fg : bg);
    }
    const double inv_n = 1.0 / static_cast<double>(plane);
    ImplPtr li = logits.impl(), ti = target.impl();
    return make_result({1}, {total * inv_n}, {logits}, [li, ti, fg_prob = std::move(fg_prob), plane, inv_n](const TensorImpl& o) {
        auto g = li->grad_buffer();
        const double up = o.grad[0] * inv_n;
        for (std::size_t p = 0; p < plane; ++p) {
            const double is_fg = ti->data[p] > 0.5 ? 1.0 : 0.0;
            // d/d fg = p_fg - [fg]; d/d bg = p_bg - [bg] = -(d/d fg)
            const double d = fg_prob[p] - is_fg;
            g[p] += up * d;
            g[plane + p] -= up * d;
        }
    });
}

Tensor cosine_map(const Tensor& x, std::span<const double> v) {
    require_rank(x, 3, "cosine_map");
    const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    if (v.size() != c) throw Error(ErrorKind::ShapeMismatch, "cosine_map: descriptor length mismatch");
    double vv = 0.0;
    for (double a : v) vv += a * a;
    const double vnorm = std::max(std::sqrt(vv), kernels::kCosineEps);

    auto xv = x.data();
    std::vector<double> dots(plane, 0.0), norms(plane, 0.0), out(plane);
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < plane; ++p) {
            const double xe = xv[k * plane + p];
            dots[p] += xe * v[k];
            norms[p] += xe * xe;
        }
    }
    std::vector<bool> clamped(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        norms[p] = std::sqrt(norms[p]);
        const double raw = dots[p] / (std::max(norms[p], kernels::kCosineEps) * vnorm);
        out[p] = std::clamp(raw, -1.0, 1.0);
        clamped[p] = raw != out[p];
    }
    ImplPtr xi = x.impl();
    std::vector<double> vcopy(v.begin(), v.end());
    return make_result({x.dim(1), x.dim(2)}, std::move(out), {x},
                       [xi, vcopy = std::move(vcopy), dots = std::move(dots), norms = std::move(norms),
                        clamped = std::move(clamped), vnorm, c, plane](const TensorImpl& o) {
                           auto g = xi->grad_buffer();
                           for (std::size_t p = 0; p < plane; ++p) {
                               if (clamped[p]) continue;
                               const double up = o.grad[p];
                               const double n = norms[p];
                               if (n > kernels::kCosineEps) {
                                   const double a = up / (n * vnorm);
                                   const double b = up * dots[p] / (n * n * n * vnorm);
                                   for (std::size_t k = 0; k < c; ++k) {
                                       g[k * plane + p] += a * vcopy[k] - b * xi->data[k * plane + p];
                                   }
                               } else {
                                   const double a = up / (kernels::kCosineEps * vnorm);
                                   for (std::size_t k = 0; k < c; ++k) g[k * plane + p] += a * vcopy[k];
                               }
                           }
                       });
}

}  // namespace protoseg
