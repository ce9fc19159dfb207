// protoseg: dataset generation, training, evaluation, prediction and
// ablation sweeps for the few-shot segmentation engine.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "protoseg/config.hpp"
#include "protoseg/episodes.hpp"
#include "protoseg/error.hpp"
#include "protoseg/harness.hpp"
#include "protoseg/image_io.hpp"
#include "protoseg/model.hpp"
#include "protoseg/synthetic.hpp"
#include "protoseg/train.hpp"

namespace fs = std::filesystem;
using namespace protoseg;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> fold;
    std::optional<std::size_t> k;
    std::string out;
    std::string checkpoint;
    std::optional<std::size_t> episodes;
    std::string data;
    std::vector<std::string> assignments;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "key = value config file");
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_option("--fold", f.fold, "test fold index");
    cmd->add_option("--k", f.k, "shots per episode");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--checkpoint", f.checkpoint, "checkpoint directory");
    cmd->add_option("--episodes", f.episodes, "evaluation episodes");
    cmd->add_option("--data", f.data, "dataset directory or index file");
    cmd->add_option("--set", f.assignments, "override a config key (key=value)");
}

// Config file, then --set overrides, then dedicated flags.
KeyValueConfig resolve(const CommonFlags& f) {
    KeyValueConfig kv;
    if (!f.config_path.empty()) kv = KeyValueConfig::load(f.config_path);
    for (const auto& a : f.assignments) kv.set_assignment(a);
    if (f.seed) kv.set("seed", std::to_string(*f.seed));
    if (f.fold) kv.set("fold", std::to_string(*f.fold));
    if (f.k) kv.set("k_shot", std::to_string(*f.k));
    if (f.episodes) kv.set("episodes", std::to_string(*f.episodes));
    if (!f.data.empty()) kv.set("data", f.data);
    if (!f.out.empty()) kv.set("out", f.out);
    if (!f.checkpoint.empty()) kv.set("checkpoint", f.checkpoint);
    return kv;
}

std::string require_path(const KeyValueConfig& kv, const std::string& key, const std::string& flag) {
    std::string v = kv.get_string(key, "");
    if (v.empty()) throw Error(ErrorKind::ConfigError, "missing " + flag + " (config key '" + key + "')");
    return v;
}

SplitConfig split_config(const KeyValueConfig& kv, SplitRole role) {
    SplitConfig s;
    s.num_classes = static_cast<int>(kv.get_int("num_classes", 6));
    s.num_folds = static_cast<int>(kv.get_int("num_folds", 2));
    s.fold_index = static_cast<int>(kv.get_int("fold", 0));
    s.role = role;
    const std::string mode = kv.get_string("split_mode", "contiguous");
    if (mode == "contiguous") {
        s.mode = SplitMode::Contiguous;
    } else if (mode == "interleaved") {
        s.mode = SplitMode::Interleaved;
    } else {
        throw Error(ErrorKind::ConfigError, "split_mode must be contiguous or interleaved");
    }
    return s;
}

EvalConfig eval_config(const KeyValueConfig& kv) {
    EvalConfig e;
    e.episodes = static_cast<std::size_t>(kv.get_uint("episodes", 1000));
    e.k_shot = static_cast<std::size_t>(kv.get_uint("k_shot", 1));
    e.seed = kv.get_uint("eval_seed", kv.get_uint("seed", 0));
    e.test_classes = fold_classes(split_config(kv, SplitRole::Test));
    if (e.episodes == 0 || e.k_shot == 0) throw Error(ErrorKind::ConfigError, "episodes and k_shot must be >= 1");
    return e;
}

TrainConfig train_config(const KeyValueConfig& kv) {
    TrainConfig t = read_train_config(kv);
    t.train_classes = fold_classes(split_config(kv, SplitRole::Train));
    return t;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
    if (!os) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

int cmd_gen_data(const KeyValueConfig& kv) {
    const fs::path out = require_path(kv, "out", "--out");
    const SyntheticSpec spec = read_synthetic_spec(kv);
    const auto count = static_cast<std::size_t>(kv.get_uint("count", 40));
    const auto items = generate_synthetic_dataset(spec, count);
    write_dataset(out, items);
    std::cout << "wrote " << items.size() << " images to " << out.string() << '\n';
    return 0;
}

int cmd_train(const KeyValueConfig& kv) {
    const fs::path data = require_path(kv, "data", "--data");
    const fs::path out = require_path(kv, "out", "--out");
    TrainConfig cfg = train_config(kv);
    const ModelConfig model_cfg = read_model_config(kv);
    const auto pool = load_dataset(data);

    TrainState state;
    const std::string resume = kv.get_string("checkpoint", "");
    if (!resume.empty()) {
        Checkpoint ck = load_checkpoint(resume);
        state = std::move(ck.state);
        std::cerr << "resuming from iteration " << state.iteration << '\n';
    } else {
        state = initial_state(model_cfg, cfg);
    }
    fs::create_directories(out);
    TrainOutputs outputs;
    outputs.checkpoint_dir = out;
    outputs.metrics_log = out / "metrics.log";
    outputs.on_log = [](const LossLogEntry& e) { std::cerr << format_log_line(e) << '\n'; };
    train(state, pool, cfg, outputs);
    std::cout << "checkpoint at iteration " << state.iteration << " written to " << out.string() << '\n';
    return 0;
}

void emit_reports(const KeyValueConfig& kv, const std::vector<std::pair<std::string, EvalReport>>& rows,
                  const std::string& stem) {
    std::cout << format_report_table(rows);
    const std::string out = kv.get_string("out", "");
    if (out.empty()) return;
    fs::create_directories(out);
    write_text(fs::path(out) / (stem + ".txt"), format_report_table(rows));
    write_text(fs::path(out) / (stem + ".csv"), format_report_csv(rows));
}

int cmd_eval(const KeyValueConfig& kv) {
    const fs::path data = require_path(kv, "data", "--data");
    const Checkpoint ck = load_checkpoint(require_path(kv, "checkpoint", "--checkpoint"));
    EvalConfig cfg = eval_config(kv);
    const std::string dump = kv.get_string("dump_dir", "");
    if (!dump.empty()) cfg.dump_dir = dump;
    const auto pool = load_dataset(data);
    const EvalReport report = evaluate(ck, pool, cfg);
    emit_reports(kv, {{"eval", report}}, "report");
    return 0;
}

int cmd_predict(const KeyValueConfig& kv, const std::vector<std::string>& supports, const std::string& query) {
    const Checkpoint ck = load_checkpoint(require_path(kv, "checkpoint", "--checkpoint"));
    const fs::path out = require_path(kv, "out", "--out");
    if (supports.empty()) throw Error(ErrorKind::ConfigError, "predict needs at least one --support IMAGE:MASK");
    if (query.empty()) throw Error(ErrorKind::ConfigError, "predict needs --query IMAGE");
    Episode ep;
    for (const auto& s : supports) {
        const auto colon = s.rfind(':');
        if (colon == std::string::npos) throw Error(ErrorKind::ConfigError, "--support expects IMAGE:MASK, got " + s);
        ep.support.push_back({read_image(s.substr(0, colon)), SupportMask(read_mask(s.substr(colon + 1)).values())});
    }
    ep.query_image = read_image(query);
    ep.query_mask = SegmentationMask(Tensor::zeros({ep.query_image.dim(1), ep.query_image.dim(2)}));
    ForwardResult r;
    {
        NoGradGuard guard;
        r = episode_forward(ck.state.model, ep);
    }
    fs::create_directories(out);
    write_pbm(out / "prediction.pbm", r.prediction);
    write_pgm(out / "prediction.pgm", mask_to_raster(r.prediction));
    write_pgm(out / "prior_fg.pgm", signed_map_to_raster(r.guidance.prior.foreground));
    write_pgm(out / "prior_bg.pgm", signed_map_to_raster(r.guidance.prior.background));
    std::cout << "foreground pixels: " << r.prediction.foreground_count() << '\n';
    return 0;
}

std::vector<std::string> split_names(const std::string& list) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        const auto comma = list.find(',', pos);
        std::string item = list.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

int cmd_ablate(const KeyValueConfig& kv) {
    const fs::path data = require_path(kv, "data", "--data");
    const TrainConfig train_cfg = train_config(kv);
    const EvalConfig eval_cfg = eval_config(kv);
    const auto arms = ablation_arms(split_names(kv.get_string("arms", "full,no-prior,no-erase")), read_model_config(kv));
    const auto pool = load_dataset(data);
    const std::string out = kv.get_string("out", "");
    const auto rows = ablate(arms, pool, train_cfg, eval_cfg, out.empty() ? fs::path() : fs::path(out) / "arms",
                             [](const std::string& msg) { std::cerr << msg << '\n'; });
    std::vector<std::pair<std::string, EvalReport>> table;
    for (const auto& row : rows) table.emplace_back(row.arm, row.report);
    emit_reports(kv, table, "ablation");
    return 0;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ConfigError: return kExitConfig;
        case ErrorKind::IoError: return kExitIo;
        case ErrorKind::EmptyForeground:
        case ErrorKind::InsufficientSamples:
        case ErrorKind::UnknownClass:
        case ErrorKind::FoldOverlap:
        case ErrorKind::IndivisibleClassCount:
        case ErrorKind::ImageTooSmall: return kExitData;
        default: return kExitOther;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot segmentation with dual prior masks and progressive detail enrichment"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::vector<std::string> supports;
    std::string query;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
    auto* trn = app.add_subcommand("train", "episodic training");
    auto* evl = app.add_subcommand("eval", "mIoU on held-out episodes");
    auto* prd = app.add_subcommand("predict", "segment one query and export prior masks");
    auto* abl = app.add_subcommand("ablate", "train and evaluate ablation arms");
    for (auto* cmd : {gen, trn, evl, prd, abl}) add_common(cmd, flags);
    prd->add_option("--support", supports, "support pair IMAGE:MASK (repeatable)");
    prd->add_option("--query", query, "query image");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        const KeyValueConfig kv = resolve(flags);
        if (gen->parsed()) return cmd_gen_data(kv);
        if (trn->parsed()) return cmd_train(kv);
        if (evl->parsed()) return cmd_eval(kv);
        if (prd->parsed()) return cmd_predict(kv, supports, query);
        if (abl->parsed()) return cmd_ablate(kv);
    } catch (const Error& e) {
        std::cerr << "protoseg: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "protoseg: IoError: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "protoseg: " << e.what() << '\n';
        return kExitOther;
    }
    return kExitOther;
}
