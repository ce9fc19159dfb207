#include "protoseg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "protoseg/error.hpp"

namespace protoseg {

std::string_view to_string(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::Disc: return "disc";
        case ShapeFamily::Square: return "square";
        case ShapeFamily::Triangle: return "triangle";
        case ShapeFamily::Ring: return "ring";
        case ShapeFamily::Cross: return "cross";
        case ShapeFamily::Bar: return "bar";
    }
    return "unknown";
}

std::string_view to_string(TextureKind t) {
    switch (t) {
        case TextureKind::Flat: return "flat";
        case TextureKind::Gradient: return "gradient";
        case TextureKind::Noise: return "noise";
        case TextureKind::Stripes: return "stripes";
        case TextureKind::Checker: return "checker";
    }
    return "unknown";
}

bool ShapeInstance::contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dx + s * dy;  // rotate into the shape frame
    const double v = -s * dx + c * dy;
    const double r = radius;
    switch (family) {
        case ShapeFamily::Disc: return u * u + v * v <= r * r;
        case ShapeFamily::Square: return std::abs(u) <= 0.75 * r && std::abs(v) <= 0.75 * r;
        case ShapeFamily::Triangle: {
            // Equilateral, circumradius r, apex along -v. Inside iff every edge
            // normal projection is within the inradius r/2.
            for (int i = 0; i < 3; ++i) {
                const double a = -std::numbers::pi / 2 + std::numbers::pi / 3 + i * 2 * std::numbers::pi / 3;
                if (u * std::cos(a) + v * std::sin(a) > 0.5 * r) return false;
            }
            return true;
        }
        case ShapeFamily::Ring: {
            const double d2 = u * u + v * v;
            return d2 <= r * r && d2 >= 0.3 * r * r;
        }
        case ShapeFamily::Cross:
            return (std::abs(u) <= 0.3 * r && std::abs(v) <= r) || (std::abs(v) <= 0.3 * r && std::abs(u) <= r);
        case ShapeFamily::Bar: return std::abs(u) <= r && std::abs(v) <= 0.35 * r;
    }
    return false;
}

Tensor rasterize(const ShapeInstance& shape, std::size_t height, std::size_t width) {
    Tensor m({height, width});
    auto d = m.mutable_data();
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            d[y * width + x] = shape.contains(x + 0.5, y + 0.5) ? 1.0 : 0.0;
        }
    }
    return m;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

using Color = std::array<double, 3>;

double between(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform_real(rng); }

Color random_color(std::mt19937_64& rng) { return {uniform_real(rng), uniform_real(rng), uniform_real(rng)}; }

double distance(const Color& a, const Color& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

// A color at least `min_dist` from every color in `avoid` (best of 32 tries otherwise).
Color distinct_color(std::mt19937_64& rng, const std::vector<Color>& avoid, double min_dist) {
    Color best{};
    double best_d = -1.0;
    for (int attempt = 0; attempt < 32; ++attempt) {
        Color c = random_color(rng);
        double d = 1e9;
        for (const auto& a : avoid) d = std::min(d, distance(c, a));
        if (d >= min_dist) return c;
        if (d > best_d) best_d = d, best = c;
    }
    return best;
}

struct Background {
    std::vector<double> pixels;  // 3 x H x W
    std::vector<Color> palette;
};

Background paint_background(TextureKind kind, std::size_t n, std::mt19937_64& rng) {
    Background bg;
    const std::size_t plane = n * n;
    bg.pixels.assign(3 * plane, 0.0);
    const Color a = random_color(rng);
    const Color b = distinct_color(rng, {a}, 0.25);
    bg.palette = {a};
    auto set = [&](std::size_t x, std::size_t y, const Color& c) {
        for (std::size_t ch = 0; ch < 3; ++ch) bg.pixels[ch * plane + y * n + x] = c[ch];
    };
    auto mix = [](const Color& p, const Color& q, double t) {
        return Color{p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t, p[2] + (q[2] - p[2]) * t};
    };
    switch (kind) {
        case TextureKind::Flat:
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) set(x, y, a);
            break;
        case TextureKind::Gradient: {
            const double theta = between(rng, 0.0, 2 * std::numbers::pi);
            const double gx = std::cos(theta), gy = std::sin(theta);
            const double half = 0.5 * static_cast<double>(n);
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    const double t = 0.5 + ((x + 0.5 - half) * gx + (y + 0.5 - half) * gy) / (2.0 * half * std::sqrt(2.0));
                    set(x, y, mix(a, b, std::clamp(t, 0.0, 1.0)));
                }
            }
            bg.palette.push_back(b);
            break;
        }
        case TextureKind::Noise:
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    Color c;
                    for (std::size_t ch = 0; ch < 3; ++ch) c[ch] = std::clamp(a[ch] + between(rng, -0.12, 0.12), 0.0, 1.0);
                    set(x, y, c);
                }
            }
            break;
        case TextureKind::Stripes: {
            const double period = between(rng, 4.0, 10.0);
            const double theta = between(rng, 0.0, std::numbers::pi);
            const double gx = std::cos(theta), gy = std::sin(theta);
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    const double p = ((x + 0.5) * gx + (y + 0.5) * gy) / period;
                    set(x, y, (static_cast<long>(std::floor(p)) & 1) ? b : a);
                }
            }
            bg.palette.push_back(b);
            break;
        }
        case TextureKind::Checker: {
            const std::size_t cell = 4 + uniform_index(rng, 5);
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) set(x, y, ((x / cell + y / cell) & 1) ? b : a);
            bg.palette.push_back(b);
            break;
        }
    }
    return bg;
}

ShapeInstance place(ShapeFamily family, double radius, std::size_t n, std::mt19937_64& rng) {
    ShapeInstance s;
    s.family = family;
    s.radius = radius;
    s.cx = between(rng, radius, static_cast<double>(n) - radius);
    s.cy = between(rng, radius, static_cast<double>(n) - radius);
    s.angle = between(rng, 0.0, 2 * std::numbers::pi);
    return s;
}

bool family_known(const SyntheticSpec& spec, int class_id) {
    return std::any_of(spec.shape_families.begin(), spec.shape_families.end(),
                       [&](ShapeFamily f) { return static_cast<int>(f) == class_id; });
}

// Positions (1-based) of the families that may serve as distractors; empty means all.
std::vector<int> distractor_group(const SyntheticSpec& spec, int class_id) {
    if (spec.distractor_folds <= 1) return {};
    const auto n = static_cast<int>(spec.shape_families.size());
    const auto pos = std::find_if(spec.shape_families.begin(), spec.shape_families.end(),
                                  [&](ShapeFamily f) { return static_cast<int>(f) == class_id; }) -
                     spec.shape_families.begin();
    SplitConfig split{n, static_cast<int>(spec.distractor_folds), 0, SplitRole::Test, spec.distractor_split};
    for (; split.fold_index < split.num_folds; ++split.fold_index) {
        auto fold = fold_classes(split);
        if (std::find(fold.begin(), fold.end(), static_cast<int>(pos) + 1) != fold.end()) return fold;
    }
    return {};
}

}  // namespace

LabeledImage generate_synthetic_image(const SyntheticSpec& spec, int class_id, std::size_t index) {
    if (!family_known(spec, class_id)) {
        throw Error(ErrorKind::UnknownClass, "class " + std::to_string(class_id) + " is not a shape family of this spec");
    }
    if (spec.image_size < 8 || spec.textures.empty()) throw Error(ErrorKind::ConfigError, "invalid synthetic spec");
    const std::size_t n = spec.image_size;
    const std::size_t plane = n * n;
    std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64((static_cast<std::uint64_t>(class_id) << 40) + index)));

    const TextureKind texture = spec.textures[uniform_index(rng, spec.textures.size())];
    Background bg = paint_background(texture, n, rng);
    std::vector<double>& px = bg.pixels;

    const double side = static_cast<double>(n);
    const double radius = side * between(rng, spec.min_radius, spec.max_radius);
    const ShapeInstance target = place(static_cast<ShapeFamily>(class_id), radius, n, rng);

    std::vector<ShapeFamily> others;
    const std::vector<int> group = distractor_group(spec, class_id);
    for (std::size_t i = 0; i < spec.shape_families.size(); ++i) {
        const ShapeFamily f = spec.shape_families[i];
        if (static_cast<int>(f) == class_id) continue;
        if (group.empty() || std::find(group.begin(), group.end(), static_cast<int>(i) + 1) != group.end()) {
            others.push_back(f);
        }
    }
    std::vector<Color> used = bg.palette;
    std::vector<ShapeInstance> placed{target};
    auto paint = [&](const ShapeInstance& s, const Color& c, Tensor* mask) {
        Tensor m = rasterize(s, n, n);
        auto md = m.data();
        for (std::size_t p = 0; p < plane; ++p) {
            if (md[p] == 1.0) {
                for (std::size_t ch = 0; ch < 3; ++ch) px[ch * plane + p] = c[ch];
            }
        }
        if (mask) *mask = std::move(m);
    };
    if (!others.empty()) {
        for (std::size_t d = 0; d < spec.distractors; ++d) {
            const ShapeFamily fam = others[uniform_index(rng, others.size())];
            const double r = radius * spec.distractor_scale * between(rng, 0.8, 1.2);
            for (int attempt = 0; attempt < 64; ++attempt) {
                ShapeInstance s = place(fam, r, n, rng);
                const bool clear = std::all_of(placed.begin(), placed.end(), [&](const ShapeInstance& o) {
                    return std::hypot(s.cx - o.cx, s.cy - o.cy) >= s.radius + o.radius + 2.0;
                });
                if (!clear) continue;
                const Color c = distinct_color(rng, used, 0.3);
                used.push_back(c);
                paint(s, c, nullptr);
                placed.push_back(s);
                break;
            }
        }
    }
    Tensor mask;
    paint(target, distinct_color(rng, used, 0.35), &mask);

    Tensor image({3, n, n});
    auto out = image.mutable_data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<double>(std::lround(std::clamp(px[i], 0.0, 1.0) * 255.0)) / 255.0;
    }
    return {std::move(image), SegmentationMask(std::move(mask)), class_id};
}

std::vector<LabeledImage> generate_synthetic(const SyntheticSpec& spec, int class_id, std::size_t count) {
    if (!family_known(spec, class_id)) {
        throw Error(ErrorKind::UnknownClass, "class " + std::to_string(class_id) + " is not a shape family of this spec");
    }
    std::vector<LabeledImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(generate_synthetic_image(spec, class_id, i));
    return out;
}

std::vector<LabeledImage> generate_synthetic_dataset(const SyntheticSpec& spec, std::size_t count_per_class) {
    std::vector<LabeledImage> out;
    for (ShapeFamily f : spec.shape_families) {
        auto items = generate_synthetic(spec, static_cast<int>(f), count_per_class);
        std::move(items.begin(), items.end(), std::back_inserter(out));
    }
    return out;
}

}  // namespace protoseg
