#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "protoseg/episodes.hpp"
#include "protoseg/model.hpp"

namespace protoseg {

struct TrainConfig {
    std::size_t iterations = 1000;
    std::size_t batch = 4;  // episodes accumulated per SGD step
    std::size_t k_shot = 1;
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t log_every = 50;
    std::size_t snapshot_every = 0;  // 0: write the checkpoint only at the end
    std::uint64_t seed = 0;
    bool flip = true;
    std::vector<int> train_classes;

    /// Throws ConfigError.
    void validate() const;
};

/// Model, optimizer and progress: everything a resumed run needs.
struct TrainState {
    SegmentationModel model;
    OptimState optim;
    std::size_t iteration = 0;
};

/// Fresh state: model initialized from cfg.seed, zero velocity.
TrainState initial_state(const ModelConfig& model_cfg, const TrainConfig& cfg);

struct LossLogEntry {
    std::size_t iteration = 0;  // 1-based count of completed SGD steps
    double total = 0.0;
    std::vector<double> per_level;  // deepest first
};

/// `iter loss_total loss_l0 ... loss_lN` with level 0 the deepest.
std::string format_log_line(const LossLogEntry& e);

/// The episode used as member `index` of the training stream: class drawn
/// uniformly from cfg.train_classes, members drawn by sample_episode, each
/// member flipped with probability 0.5 when cfg.flip is set. All randomness
/// comes from episode_seed(cfg.seed, index).
Episode training_episode(std::span<const LabeledImage> pool, const TrainConfig& cfg, std::uint64_t index);

struct TrainOutputs {
    std::filesystem::path checkpoint_dir;  // empty: no checkpoint
    std::filesystem::path metrics_log;     // empty: no log file; appended otherwise
    std::function<void(const LossLogEntry&)> on_log;
};

/// Runs SGD steps from state.iteration up to cfg.iterations. Step t averages
/// the gradients of episodes t*batch .. t*batch+batch-1. Logs the window mean
/// of each loss every cfg.log_every steps and on the last step.
std::vector<LossLogEntry> train(TrainState& state, std::span<const LabeledImage> pool, const TrainConfig& cfg,
                                const TrainOutputs& outputs = {});

// Checkpoint directory layout:
//   meta.txt               key = value model and training configuration, iteration
//   manifest.txt           one line per snapshot: name shape checksum
//   <param>.tnsr           parameters
//   velocity/<param>.tnsr  momentum buffers
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& cfg);

struct Checkpoint {
    TrainState state;
    TrainConfig train_config;
    ModelConfig model_config;
};

/// Throws IoError on missing files, checksum or shape mismatches.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace protoseg
