#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "protoseg/episodes.hpp"
#include "protoseg/tensor.hpp"

namespace protoseg {

/// Shape families double as class ids (1-based).
enum class ShapeFamily { Disc = 1, Square = 2, Triangle = 3, Ring = 4, Cross = 5, Bar = 6 };

enum class TextureKind { Flat, Gradient, Noise, Stripes, Checker };

std::string_view to_string(ShapeFamily f);
std::string_view to_string(TextureKind t);

struct SyntheticSpec {
    std::size_t image_size = 64;
    std::vector<ShapeFamily> shape_families = {ShapeFamily::Disc,  ShapeFamily::Square, ShapeFamily::Triangle,
                                               ShapeFamily::Ring,  ShapeFamily::Cross,  ShapeFamily::Bar};
    std::vector<TextureKind> textures = {TextureKind::Flat, TextureKind::Gradient, TextureKind::Noise,
                                         TextureKind::Stripes, TextureKind::Checker};
    std::size_t distractors = 1;
    std::uint64_t seed = 0;
    // Target size as a fraction of the image side (circumradius).
    double min_radius = 0.14;
    double max_radius = 0.26;
    // Distractor radius relative to the target radius.
    double distractor_scale = 0.6;
    // With more than one fold, distractors come only from the target's own fold of
    // shape_families (positions 1..n split as fold_classes does), so no class ever
    // appears inside another fold's images.
    std::size_t distractor_folds = 1;
    SplitMode distractor_split = SplitMode::Contiguous;
};

/// A placed shape in continuous pixel coordinates; pixel (x, y) covers
/// [x, x+1) x [y, y+1) and is sampled at its centre.
struct ShapeInstance {
    ShapeFamily family = ShapeFamily::Disc;
    double cx = 0.0;
    double cy = 0.0;
    double radius = 1.0;
    double angle = 0.0;  // radians

    bool contains(double x, double y) const;
};

/// H x W binary mask of the pixels whose centres fall inside the shape.
Tensor rasterize(const ShapeInstance& shape, std::size_t height, std::size_t width);

/// Image `index` of class `class_id`; a pure function of (spec, class_id, index).
LabeledImage generate_synthetic_image(const SyntheticSpec& spec, int class_id, std::size_t index);

/// Throws UnknownClass if class_id is not one of spec.shape_families.
std::vector<LabeledImage> generate_synthetic(const SyntheticSpec& spec, int class_id, std::size_t count);

/// `count_per_class` images for every family of the spec, grouped by class.
std::vector<LabeledImage> generate_synthetic_dataset(const SyntheticSpec& spec, std::size_t count_per_class);

}  // namespace protoseg
