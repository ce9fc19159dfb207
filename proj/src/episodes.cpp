#include "protoseg/episodes.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "protoseg/error.hpp"
#include "protoseg/image_io.hpp"

namespace fs = std::filesystem;

namespace protoseg {

void Episode::validate() const {
    if (support.empty()) throw Error(ErrorKind::EmptyList, "episode has no support shots");
    for (std::size_t s = 0; s < support.size(); ++s) {
        const auto& shot = support[s];
        if (shot.mask.foreground_count() == 0) {
            throw Error(ErrorKind::EmptyForeground, "support shot " + std::to_string(s) + " has an empty mask");
        }
        if (shot.image.ndim() != 3 || shot.image.dim(1) != shot.mask.height() || shot.image.dim(2) != shot.mask.width()) {
            throw Error(ErrorKind::ShapeMismatch, "support image and mask sizes differ");
        }
    }
    if (query_image.ndim() != 3 || query_image.dim(1) != query_mask.height() || query_image.dim(2) != query_mask.width()) {
        throw Error(ErrorKind::ShapeMismatch, "query image and mask sizes differ");
    }
}

std::vector<int> fold_classes(const SplitConfig& cfg) {
    if (cfg.num_folds <= 0 || cfg.num_classes <= 0 || cfg.num_classes % cfg.num_folds != 0) {
        throw Error(ErrorKind::IndivisibleClassCount, std::to_string(cfg.num_classes) + " classes into " +
                                                          std::to_string(cfg.num_folds) + " folds");
    }
    if (cfg.fold_index < 0 || cfg.fold_index >= cfg.num_folds) {
        throw Error(ErrorKind::ConfigError, "fold index " + std::to_string(cfg.fold_index) + " out of range");
    }
    const int per_fold = cfg.num_classes / cfg.num_folds;
    auto fold_of = [&](int c) {
        if (cfg.mode == SplitMode::Contiguous) return (c - 1) / per_fold;
        return (c - 1) % cfg.num_folds;
    };
    std::vector<int> out;
    for (int c = 1; c <= cfg.num_classes; ++c) {
        const bool in_fold = fold_of(c) == cfg.fold_index;
        if (in_fold == (cfg.role == SplitRole::Test)) out.push_back(c);
    }
    return out;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
}

double uniform_real(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Episode sample_episode(std::span<const LabeledImage> pool, int class_id, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw Error(ErrorKind::ConfigError, "k must be >= 1");
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].class_id == class_id) candidates.push_back(i);
    }
    if (candidates.size() < k + 1) {
        throw Error(ErrorKind::InsufficientSamples, "class " + std::to_string(class_id) + " has " +
                                                        std::to_string(candidates.size()) + " images, need " +
                                                        std::to_string(k + 1));
    }
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first k + 1 slots become the draw.
    for (std::size_t i = 0; i < k + 1; ++i) {
        std::size_t j = i + uniform_index(rng, candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
    }
    Episode ep;
    ep.class_id = class_id;
    const LabeledImage& q = pool[candidates[0]];
    ep.query_image = q.image;
    ep.query_mask = q.mask;
    for (std::size_t s = 1; s <= k; ++s) {
        const LabeledImage& item = pool[candidates[s]];
        ep.support.push_back({item.image, SupportMask(item.mask.values())});
    }
    return ep;
}

Tensor flip_width(const Tensor& t) {
    if (t.ndim() != 2 && t.ndim() != 3) throw Error(ErrorKind::ShapeMismatch, "flip expects rank 2 or 3");
    const std::size_t w = t.shape().back();
    const std::size_t rows = t.numel() / w;
    Tensor out(t.shape());
    auto src = t.data();
    auto dst = out.mutable_data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t x = 0; x < w; ++x) dst[r * w + x] = src[r * w + (w - 1 - x)];
    }
    return out;
}

std::pair<Tensor, SegmentationMask> horizontal_flip(const Tensor& image, const SegmentationMask& mask) {
    return {flip_width(image), SegmentationMask(flip_width(mask.values()))};
}

Episode random_flip(const Episode& episode, std::mt19937_64& rng) {
    Episode out = episode;
    for (auto& shot : out.support) {
        if (uniform_real(rng) < 0.5) {
            shot.image = flip_width(shot.image);
            shot.mask = SupportMask(flip_width(shot.mask.values()));
        }
    }
    if (uniform_real(rng) < 0.5) {
        out.query_image = flip_width(out.query_image);
        out.query_mask = SegmentationMask(flip_width(out.query_mask.values()));
    }
    return out;
}

std::vector<IndexEntry> read_index(const fs::path& index_file) {
    std::ifstream is(index_file);
    if (!is) throw Error(ErrorKind::IoError, "cannot open index " + index_file.string());
    std::vector<IndexEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        IndexEntry e;
        std::string cls;
        if (!std::getline(ls, cls, '\t') || !std::getline(ls, e.image_path, '\t') || !std::getline(ls, e.mask_path)) {
            throw Error(ErrorKind::IoError, index_file.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
        }
        try {
            e.class_id = std::stoi(cls);
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::IoError, index_file.string() + ":" + std::to_string(lineno) + ": bad class id");
        }
        out.push_back(std::move(e));
    }
    return out;
}

void write_index(const fs::path& index_file, std::span<const IndexEntry> entries) {
    std::ofstream os(index_file);
    if (!os) throw Error(ErrorKind::IoError, "cannot write index " + index_file.string());
    for (const auto& e : entries) os << e.class_id << '\t' << e.image_path << '\t' << e.mask_path << '\n';
    if (!os) throw Error(ErrorKind::IoError, "failed writing index " + index_file.string());
}

std::vector<IndexEntry> write_dataset(const fs::path& dir, std::span<const LabeledImage> items) {
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    fs::create_directories(dir / "masks", ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create dataset directory " + dir.string());
    std::vector<IndexEntry> entries;
    for (std::size_t i = 0; i < items.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "%06zu", i);
        IndexEntry e{items[i].class_id, std::string("images/") + stem + ".ppm", std::string("masks/") + stem + ".pgm"};
        write_ppm(dir / e.image_path, image_to_raster(items[i].image));
        write_pgm(dir / e.mask_path, mask_to_raster(items[i].mask));
        entries.push_back(std::move(e));
    }
    write_index(dir / "index.txt", entries);
    return entries;
}

std::vector<LabeledImage> load_dataset(const fs::path& path) {
    const fs::path index = fs::is_directory(path) ? path / "index.txt" : path;
    const fs::path root = index.parent_path();
    std::vector<LabeledImage> out;
    for (const auto& e : read_index(index)) {
        Tensor image = read_image(root / e.image_path);
        BinaryMask mask = read_mask(root / e.mask_path);
        if (image.dim(1) != mask.height() || image.dim(2) != mask.width()) {
            throw Error(ErrorKind::IoError, "image/mask size mismatch for " + e.image_path);
        }
        out.push_back({std::move(image), SegmentationMask(mask.values()), e.class_id});
    }
    return out;
}

std::vector<int> pool_classes(std::span<const LabeledImage> pool) {
    std::set<int> classes;
    for (const auto& item : pool) classes.insert(item.class_id);
    return {classes.begin(), classes.end()};
}

}  // namespace protoseg
