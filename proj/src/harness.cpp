#include "protoseg/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>

#include "protoseg/config.hpp"
#include "protoseg/error.hpp"
#include "protoseg/image_io.hpp"
#include "protoseg/kernels.hpp"
#include "protoseg/snapshot.hpp"

namespace fs = std::filesystem;

namespace protoseg {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
    if (a.values().shape() != b.values().shape()) {
        throw Error(ErrorKind::ShapeMismatch, "IoU of " + shape_to_string(a.values().shape()) + " and " +
                                                  shape_to_string(b.values().shape()));
    }
}

}  // namespace

void IoUTally::add(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt);
    auto p = pred.values().data();
    auto g = gt.values().data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool a = p[i] == 1.0, b = g[i] == 1.0;
        intersection += a && b;
        union_count += a || b;
    }
}

void IoUTally::merge(const IoUTally& other) {
    intersection += other.intersection;
    union_count += other.union_count;
}

double IoUTally::iou() const {
    if (union_count == 0) return 1.0;
    return static_cast<double>(intersection) / static_cast<double>(union_count);
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    IoUTally t;
    t.add(pred, gt);
    return t.iou();
}

EvalReport summarize(const std::map<int, IoUTally>& tallies, std::size_t episode_count, std::string digest) {
    EvalReport r;
    r.episode_count = episode_count;
    r.config_digest = std::move(digest);
    double sum = 0.0;
    for (const auto& [cls, tally] : tallies) {
        r.per_class_iou[cls] = tally.iou();
        sum += tally.iou();
    }
    r.miou = tallies.empty() ? 0.0 : sum / static_cast<double>(tallies.size());
    return r;
}

EvalReport evaluate_episodes(const Segmenter& segmenter, std::span<const Episode> episodes) {
    std::map<int, IoUTally> tallies;
    for (const auto& ep : episodes) tallies[ep.class_id].add(segmenter(ep), ep.query_mask);
    return summarize(tallies, episodes.size());
}

Episode evaluation_episode(std::span<const LabeledImage> pool, const EvalConfig& cfg, std::uint64_t index) {
    if (cfg.test_classes.empty()) throw Error(ErrorKind::ConfigError, "no test classes");
    std::mt19937_64 rng(episode_seed(cfg.seed, index));
    const int cls = cfg.test_classes[uniform_index(rng, cfg.test_classes.size())];
    return sample_episode(pool, cls, cfg.k_shot, rng());
}

namespace {

std::string eval_digest(const SegmentationModel& model, const EvalConfig& cfg) {
    KeyValueConfig kv;
    write_model_config(model.config(), kv);
    kv.set("eval.episodes", std::to_string(cfg.episodes));
    kv.set("eval.k_shot", std::to_string(cfg.k_shot));
    kv.set("eval.seed", std::to_string(cfg.seed));
    kv.set("eval.test_classes", join_ints({cfg.test_classes.begin(), cfg.test_classes.end()}));
    const std::string text = kv.to_text();
    Tensor bytes({text.size()});
    auto d = bytes.mutable_data();
    for (std::size_t i = 0; i < text.size(); ++i) d[i] = static_cast<unsigned char>(text[i]);
    return checksum_hex(bytes);
}

}  // namespace

EvalReport evaluate(const SegmentationModel& model, std::span<const LabeledImage> pool, const EvalConfig& cfg) {
    if (cfg.episodes == 0) throw Error(ErrorKind::ConfigError, "episodes must be >= 1");
    if (!cfg.dump_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.dump_dir, ec);
        if (ec) throw Error(ErrorKind::IoError, "cannot create dump directory " + cfg.dump_dir.string());
    }
    // Sample up front so every thread sees the same episodes.
    std::vector<Episode> episodes;
    episodes.reserve(cfg.episodes);
    for (std::size_t i = 0; i < cfg.episodes; ++i) episodes.push_back(evaluation_episode(pool, cfg, i));

    std::vector<IoUTally> per_episode(episodes.size());
    std::exception_ptr failure;
    const auto n = static_cast<std::ptrdiff_t>(episodes.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const SegmentationMask pred = segment(model, episodes[i]);
            per_episode[i].add(pred, episodes[i].query_mask);
            if (!cfg.dump_dir.empty()) {
                char name[64];
                std::snprintf(name, sizeof name, "episode_%06td_class%d.pgm", i, episodes[i].class_id);
                write_pgm(cfg.dump_dir / name, mask_to_raster(pred));
            }
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::map<int, IoUTally> tallies;
    for (std::size_t i = 0; i < episodes.size(); ++i) tallies[episodes[i].class_id].merge(per_episode[i]);
    return summarize(tallies, episodes.size(), eval_digest(model, cfg));
}

EvalReport evaluate(const Checkpoint& checkpoint, std::span<const LabeledImage> pool, const EvalConfig& cfg) {
    const auto& trained = checkpoint.train_config.train_classes;
    for (int c : cfg.test_classes) {
        if (std::find(trained.begin(), trained.end(), c) != trained.end()) {
            throw Error(ErrorKind::FoldOverlap, "test class " + std::to_string(c) + " was seen in training");
        }
    }
    return evaluate(checkpoint.state.model, pool, cfg);
}

std::vector<AblationArm> ablation_arms(const std::vector<std::string>& names, const ModelConfig& base) {
    if (names.empty()) throw Error(ErrorKind::ConfigError, "empty arm list");
    std::vector<AblationArm> arms;
    for (const auto& name : names) {
        ModelConfig m = base;
        auto numbered = [&](const std::string& prefix, std::size_t& field) {
            if (name.rfind(prefix, 0) != 0) return false;
            const std::string digits = name.substr(prefix.size());
            if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return false;
            field = std::stoul(digits);
            return true;
        };
        if (name == "full" || name == "full-iterative") {
        } else if (name == "no-fg-prior") {
            m.use_fg_prior = false;
        } else if (name == "no-bg-prior") {
            m.use_bg_prior = false;
        } else if (name == "no-prior") {
            m.use_fg_prior = m.use_bg_prior = false;
        } else if (name == "no-erase") {
            m.erase = false;
        } else if (name == "single-level") {
            m.levels = 2;
        } else if (!numbered("prototypes-", m.prototypes) && !numbered("levels-", m.levels)) {
            throw Error(ErrorKind::ConfigError, "unknown ablation arm '" + name + "'");
        }
        try {
            m.validate();
        } catch (const Error& e) {
            throw Error(ErrorKind::ConfigError, "arm '" + name + "': " + e.what());
        }
        arms.push_back({name, m});
    }
    return arms;
}

std::vector<AblationRow> ablate(std::span<const AblationArm> arms, std::span<const LabeledImage> pool,
                                const TrainConfig& train_cfg, const EvalConfig& eval_cfg, const fs::path& work_dir,
                                const std::function<void(const std::string&)>& progress) {
    if (arms.empty()) throw Error(ErrorKind::ConfigError, "empty arm list");
    std::vector<AblationRow> rows;
    for (const auto& arm : arms) {
        if (progress) progress("training arm " + arm.name);
        TrainState state = initial_state(arm.model, train_cfg);
        TrainOutputs out;
        if (!work_dir.empty()) {
            out.checkpoint_dir = work_dir / arm.name;
            std::error_code ec;
            fs::create_directories(out.checkpoint_dir, ec);
            out.metrics_log = out.checkpoint_dir / "metrics.log";
            fs::remove(out.metrics_log, ec);
        }
        if (progress) {
            out.on_log = [&](const LossLogEntry& e) { progress(arm.name + " " + format_log_line(e)); };
        }
        AblationRow row{arm.name, {}, train(state, pool, train_cfg, out)};
        if (progress) progress("evaluating arm " + arm.name);
        row.report = evaluate(state.model, pool, eval_cfg);
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::vector<int> all_classes(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::set<int> classes;
    for (const auto& [name, r] : rows) {
        for (const auto& [c, v] : r.per_class_iou) classes.insert(c);
    }
    return {classes.begin(), classes.end()};
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    const auto classes = all_classes(rows);
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{"arm", "mIoU"};
    for (int c : classes) header.push_back("class" + std::to_string(c));
    header.push_back("episodes");
    cells.push_back(header);
    for (const auto& [name, r] : rows) {
        std::vector<std::string> line{name, fixed(r.miou, 4)};
        for (int c : classes) {
            auto it = r.per_class_iou.find(c);
            line.push_back(it == r.per_class_iou.end() ? "-" : fixed(it->second, 4));
        }
        line.push_back(std::to_string(r.episode_count));
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::ostringstream os;
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i) os << "  ";
            if (i == 0) {
                os << line[i] << std::string(width[i] - line[i].size(), ' ');
            } else {
                os << std::string(width[i] - line[i].size(), ' ') << line[i];
            }
        }
        os << '\n';
    }
    return os.str();
}

std::string format_report_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    const auto classes = all_classes(rows);
    std::ostringstream os;
    os << "arm,miou";
    for (int c : classes) os << ",class" << c;
    os << ",episodes,digest\n";
    for (const auto& [name, r] : rows) {
        os << name << ',' << format_double(r.miou);
        for (int c : classes) {
            auto it = r.per_class_iou.find(c);
            os << ',' << (it == r.per_class_iou.end() ? std::string() : format_double(it->second));
        }
        os << ',' << r.episode_count << ',' << r.config_digest << '\n';
    }
    return os.str();
}

}  // namespace protoseg
