#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "protoseg/episodes.hpp"
#include "protoseg/mask.hpp"
#include "protoseg/model.hpp"
#include "protoseg/train.hpp"

namespace protoseg {

/// |pred AND gt| / |pred OR gt|; 1 when both are empty. Throws ShapeMismatch.
double iou(const BinaryMask& pred, const BinaryMask& gt);

/// Intersection and union pixel counts summed over a class's episodes.
struct IoUTally {
    std::uint64_t intersection = 0;
    std::uint64_t union_count = 0;

    void add(const BinaryMask& pred, const BinaryMask& gt);
    void merge(const IoUTally& other);
    double iou() const;  // 1 for an all-empty tally
};

struct EvalReport {
    std::map<int, double> per_class_iou;
    double miou = 0.0;
    std::size_t episode_count = 0;
    std::string config_digest;
};

/// Per-class IoU from accumulated tallies and their arithmetic mean.
EvalReport summarize(const std::map<int, IoUTally>& tallies, std::size_t episode_count, std::string digest = {});

using Segmenter = std::function<SegmentationMask(const Episode&)>;

/// Scores `segmenter` on a fixed episode list.
EvalReport evaluate_episodes(const Segmenter& segmenter, std::span<const Episode> episodes);

struct EvalConfig {
    std::size_t episodes = 1000;
    std::size_t k_shot = 1;
    std::uint64_t seed = 0;
    std::vector<int> test_classes;
    std::filesystem::path dump_dir;  // optional per-episode prediction graymaps
};

/// Episode i: class drawn uniformly from cfg.test_classes and members drawn
/// by sample_episode, all seeded by episode_seed(cfg.seed, i).
Episode evaluation_episode(std::span<const LabeledImage> pool, const EvalConfig& cfg, std::uint64_t index);

/// Episodes run concurrently; the result does not depend on the thread count.
EvalReport evaluate(const SegmentationModel& model, std::span<const LabeledImage> pool, const EvalConfig& cfg);

/// As above, first checking that no test class was a training class of the
/// checkpoint (FoldOverlap).
EvalReport evaluate(const Checkpoint& checkpoint, std::span<const LabeledImage> pool, const EvalConfig& cfg);

struct AblationArm {
    std::string name;
    ModelConfig model;
};

/// Known arms: full, no-fg-prior, no-bg-prior, no-prior, no-erase,
/// single-level (2 decoder levels), full-iterative, prototypes-N, levels-N.
/// Throws ConfigError for an unknown name or an empty list.
std::vector<AblationArm> ablation_arms(const std::vector<std::string>& names, const ModelConfig& base);

struct AblationRow {
    std::string arm;
    EvalReport report;
    std::vector<LossLogEntry> losses;
};

/// Trains and evaluates every arm with the same seeds. When `work_dir` is set
/// each arm's checkpoint and log go to work_dir/<arm>. `progress` also
/// receives every logged loss line, prefixed with the arm name.
std::vector<AblationRow> ablate(std::span<const AblationArm> arms, std::span<const LabeledImage> pool,
                                const TrainConfig& train_cfg, const EvalConfig& eval_cfg,
                                const std::filesystem::path& work_dir = {},
                                const std::function<void(const std::string&)>& progress = {});

std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string format_report_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace protoseg
