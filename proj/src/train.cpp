#include "protoseg/train.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "protoseg/config.hpp"
#include "protoseg/error.hpp"
#include "protoseg/snapshot.hpp"

namespace fs = std::filesystem;

namespace protoseg {

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
    if (batch < 1) fail("batch must be >= 1");
    if (k_shot < 1) fail("k_shot must be >= 1");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (momentum < 0.0) fail("momentum must be >= 0");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (log_every < 1) fail("log_every must be >= 1");
    if (train_classes.empty()) fail("no training classes");
}

TrainState initial_state(const ModelConfig& model_cfg, const TrainConfig& cfg) {
    TrainState s;
    s.model = SegmentationModel::init(model_cfg, cfg.seed);
    s.optim.lr = cfg.lr;
    s.optim.momentum = cfg.momentum;
    s.optim.weight_decay = cfg.weight_decay;
    s.optim.reset(s.model.parameters());
    return s;
}

std::string format_log_line(const LossLogEntry& e) {
    std::string line = std::to_string(e.iteration) + " " + format_double(e.total);
    for (double v : e.per_level) line += " " + format_double(v);
    return line;
}

Episode training_episode(std::span<const LabeledImage> pool, const TrainConfig& cfg, std::uint64_t index) {
    std::mt19937_64 rng(episode_seed(cfg.seed, index));
    const int cls = cfg.train_classes[uniform_index(rng, cfg.train_classes.size())];
    Episode ep = sample_episode(pool, cls, cfg.k_shot, rng());
    if (cfg.flip) ep = random_flip(ep, rng);
    return ep;
}

std::vector<LossLogEntry> train(TrainState& state, std::span<const LabeledImage> pool, const TrainConfig& cfg,
                                const TrainOutputs& outputs) {
    cfg.validate();
    state.optim.lr = cfg.lr;
    state.optim.momentum = cfg.momentum;
    state.optim.weight_decay = cfg.weight_decay;
    const auto params = state.model.parameters();
    if (state.optim.velocity.size() != params.size()) state.optim.reset(params);

    std::ofstream log;
    if (!outputs.metrics_log.empty()) {
        log.open(outputs.metrics_log, std::ios::app);
        if (!log) throw Error(ErrorKind::IoError, "cannot open metrics log " + outputs.metrics_log.string());
    }

    std::vector<LossLogEntry> entries;
    const std::size_t levels = state.model.config().levels;
    LossLogEntry window{0, 0.0, std::vector<double>(levels, 0.0)};
    std::size_t window_steps = 0;
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch);

    while (state.iteration < cfg.iterations) {
        for (auto p : params) p.value.zero_grad();
        double step_total = 0.0;
        std::vector<double> step_levels(levels, 0.0);
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            const Episode ep = training_episode(pool, cfg, static_cast<std::uint64_t>(state.iteration) * cfg.batch + b);
            ForwardResult r = episode_forward(state.model, ep);
            r.loss.total.check_finite("training loss");
            scale(r.loss.total, inv_batch).backward();
            step_total += r.loss.total.item() * inv_batch;
            const auto lv = r.loss.values();
            for (std::size_t l = 0; l < levels; ++l) step_levels[l] += lv[l] * inv_batch;
        }
        sgd_step(params, state.optim);
        ++state.iteration;

        window.total += step_total;
        for (std::size_t l = 0; l < levels; ++l) window.per_level[l] += step_levels[l];
        ++window_steps;
        if (state.iteration % cfg.log_every == 0 || state.iteration == cfg.iterations) {
            LossLogEntry e{state.iteration, window.total / window_steps, {}};
            for (double v : window.per_level) e.per_level.push_back(v / window_steps);
            if (log.is_open()) log << format_log_line(e) << '\n' << std::flush;
            if (outputs.on_log) outputs.on_log(e);
            entries.push_back(std::move(e));
            window = {0, 0.0, std::vector<double>(levels, 0.0)};
            window_steps = 0;
        }
        if (!outputs.checkpoint_dir.empty() && cfg.snapshot_every > 0 && state.iteration % cfg.snapshot_every == 0 &&
            state.iteration != cfg.iterations) {
            save_checkpoint(outputs.checkpoint_dir, state, cfg);
        }
    }
    if (!outputs.checkpoint_dir.empty()) save_checkpoint(outputs.checkpoint_dir, state, cfg);
    return entries;
}

namespace {

constexpr const char* kVelocityDir = "velocity";

std::string shape_token(const Shape& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const TrainState& state, const TrainConfig& cfg) {
    std::error_code ec;
    fs::create_directories(dir / kVelocityDir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create checkpoint directory " + dir.string());

    const auto params = state.model.parameters();
    if (state.optim.velocity.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "optimizer state out of sync");

    std::ostringstream manifest;
    auto put = [&](const std::string& name, const Tensor& t) {
        save_snapshot(dir / (name + ".tnsr"), t);
        manifest << name << ' ' << shape_token(t.shape()) << ' ' << checksum_hex(t) << '\n';
    };
    for (std::size_t i = 0; i < params.size(); ++i) put(params[i].name, params[i].value);
    for (std::size_t i = 0; i < params.size(); ++i) put(std::string(kVelocityDir) + "/" + params[i].name, state.optim.velocity[i]);

    std::ofstream mf(dir / "manifest.txt");
    mf << manifest.str();
    if (!mf) throw Error(ErrorKind::IoError, "failed writing manifest in " + dir.string());

    KeyValueConfig meta;
    write_model_config(state.model.config(), meta);
    write_train_config(cfg, meta);
    meta.set("iteration", std::to_string(state.iteration));
    meta.save(dir / "meta.txt");
}

Checkpoint load_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, "checkpoint directory not found: " + dir.string());
    const KeyValueConfig meta = KeyValueConfig::load(dir / "meta.txt");
    Checkpoint ck;
    ck.model_config = read_model_config(meta);
    ck.train_config = read_train_config(meta);
    ck.state.model = SegmentationModel::zeros(ck.model_config);
    ck.state.iteration = static_cast<std::size_t>(meta.get_uint("iteration", 0));

    std::ifstream mf(dir / "manifest.txt");
    if (!mf) throw Error(ErrorKind::IoError, "missing manifest in " + dir.string());
    std::map<std::string, std::pair<std::string, std::string>> manifest;  // name -> (shape, checksum)
    std::string name, shape, sum;
    while (mf >> name >> shape >> sum) manifest[name] = {shape, sum};

    auto fetch = [&](const std::string& entry, Tensor& dst) {
        auto it = manifest.find(entry);
        if (it == manifest.end()) throw Error(ErrorKind::IoError, "checkpoint lacks " + entry);
        Tensor t = load_snapshot(dir / (entry + ".tnsr"));
        if (shape_token(t.shape()) != it->second.first || shape_token(dst.shape()) != it->second.first) {
            throw Error(ErrorKind::IoError, "shape mismatch for " + entry);
        }
        if (checksum_hex(t) != it->second.second) throw Error(ErrorKind::IoError, "checksum mismatch for " + entry);
        auto src = t.data();
        auto out = dst.mutable_data();
        std::copy(src.begin(), src.end(), out.begin());
    };
    const auto params = ck.state.model.parameters();
    ck.state.optim.lr = ck.train_config.lr;
    ck.state.optim.momentum = ck.train_config.momentum;
    ck.state.optim.weight_decay = ck.train_config.weight_decay;
    ck.state.optim.reset(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].value;
        fetch(params[i].name, p);
        fetch(std::string(kVelocityDir) + "/" + params[i].name, ck.state.optim.velocity[i]);
    }
    return ck;
}

}  // namespace protoseg
