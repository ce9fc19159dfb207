#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protoseg/mask.hpp"
#include "protoseg/tensor.hpp"

namespace protoseg {

/// One annotated image: 3 x H x W in [0, 1] plus the binary mask of its class.
struct LabeledImage {
    Tensor image;
    SegmentationMask mask;
    int class_id = 0;
};

struct SupportShot {
    Tensor image;
    SupportMask mask;
};

/// k support pairs and one query pair, all of one class.
struct Episode {
    std::vector<SupportShot> support;
    Tensor query_image;
    SegmentationMask query_mask;
    int class_id = 0;

    std::size_t shots() const { return support.size(); }
    /// Throws EmptyForeground / ShapeMismatch / EmptyList on a malformed episode.
    void validate() const;
};

enum class SplitMode {
    Contiguous,   // fold j holds classes j*n/F+1 .. (j+1)*n/F
    Interleaved,  // fold j holds classes F*(i-1)+1+j, i = 1..n/F
};

enum class SplitRole { Train, Test };

struct SplitConfig {
    int num_classes = 20;
    int num_folds = 4;
    int fold_index = 0;
    SplitRole role = SplitRole::Test;
    SplitMode mode = SplitMode::Contiguous;
};

/// Test role: the classes of fold `fold_index`. Train role: every other fold.
/// Throws IndivisibleClassCount, or ConfigError for a fold out of range.
std::vector<int> fold_classes(const SplitConfig& cfg);

/// Seed of the i-th episode drawn from a base seed.
constexpr std::uint64_t episode_seed(std::uint64_t base_seed, std::uint64_t index) { return base_seed ^ index; }

/// Unbiased draw in [0, n) that is stable across standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);
double uniform_real(std::mt19937_64& rng);

/// Draws k + 1 distinct images of `class_id` uniformly without replacement;
/// the first draw is the query. Throws InsufficientSamples.
Episode sample_episode(std::span<const LabeledImage> pool, int class_id, std::size_t k, std::uint64_t seed);

/// Reverses the width axis of a C x H x W or H x W tensor.
Tensor flip_width(const Tensor& t);
std::pair<Tensor, SegmentationMask> horizontal_flip(const Tensor& image, const SegmentationMask& mask);

/// Flips each member of the episode independently with probability 0.5.
Episode random_flip(const Episode& episode, std::mt19937_64& rng);

// Dataset directory: index.txt with lines "class_id<TAB>image_path<TAB>mask_path"
// (paths relative to the index), RGB images as P6 and masks as P5.

struct IndexEntry {
    int class_id = 0;
    std::string image_path;
    std::string mask_path;

    bool operator==(const IndexEntry&) const = default;
};

std::vector<IndexEntry> read_index(const std::filesystem::path& index_file);
void write_index(const std::filesystem::path& index_file, std::span<const IndexEntry> entries);

/// Writes images/NNNNNN.ppm, masks/NNNNNN.pgm and index.txt under `dir`.
std::vector<IndexEntry> write_dataset(const std::filesystem::path& dir, std::span<const LabeledImage> items);

/// Accepts a dataset directory or an index file.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& path);

/// Distinct class ids present in a pool, ascending.
std::vector<int> pool_classes(std::span<const LabeledImage> pool);

}  // namespace protoseg
