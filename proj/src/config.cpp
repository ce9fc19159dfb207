#include "protoseg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "protoseg/error.hpp"
#include "protoseg/model.hpp"
#include "protoseg/synthetic.hpp"
#include "protoseg/train.hpp"

namespace protoseg {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw Error(ErrorKind::ConfigError, "key '" + key + "': '" + value + "' is not " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
    T out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) bad_value(key, value, expected);
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& origin) {
    KeyValueConfig kv;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
            throw Error(ErrorKind::ConfigError, origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        kv.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::IoError, "cannot read config " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
}

void KeyValueConfig::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

void KeyValueConfig::set_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty()) {
        throw Error(ErrorKind::ConfigError, "expected key=value, got '" + std::string(assignment) + "'");
    }
    set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string* KeyValueConfig::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    read_.insert(key);
    return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const std::string* v = find(key);
    return v ? parse_number<std::int64_t>(key, *v, "an integer") : fallback;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    const std::string* v = find(key);
    return v ? parse_number<std::uint64_t>(key, *v, "a non-negative integer") : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    return v ? parse_number<double>(key, *v, "a number") : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    bad_value(key, *v, "a boolean");
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key,
                                                       const std::vector<std::int64_t>& fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    std::vector<std::int64_t> out;
    std::string_view rest = *v;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item(trim(rest.substr(0, comma)));
        if (!item.empty()) out.push_back(parse_number<std::int64_t>(key, item, "a comma-separated integer list"));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

std::vector<std::string> KeyValueConfig::unread() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        if (!read_.count(k)) out.push_back(k);
    }
    return out;
}

std::string KeyValueConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    os << to_text();
    if (!os) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string join_ints(const std::vector<std::int64_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
    return out;
}

namespace {

template <typename T>
std::vector<std::int64_t> widen(const std::vector<T>& v) {
    return {v.begin(), v.end()};
}

std::size_t positive(const KeyValueConfig& kv, const std::string& key, std::size_t fallback, bool allow_zero = false) {
    const std::int64_t v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0 || (v == 0 && !allow_zero)) {
        throw Error(ErrorKind::ConfigError, "key '" + key + "' must be " + (allow_zero ? "non-negative" : "positive"));
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

ModelConfig read_model_config(const KeyValueConfig& kv) {
    ModelConfig c;
    c.levels = positive(kv, "levels", c.levels);
    c.stage_widths.clear();
    for (auto w : kv.get_int_list("stage_widths", {16, 32, 64, 64})) {
        if (w <= 0) throw Error(ErrorKind::ConfigError, "stage_widths must be positive");
        c.stage_widths.push_back(static_cast<std::size_t>(w));
    }
    c.prototypes = positive(kv, "prototypes", c.prototypes);
    c.kmeans_iterations = positive(kv, "kmeans_iterations", c.kmeans_iterations, true);
    c.head_width = positive(kv, "head_width", c.head_width);
    c.head_blocks = positive(kv, "head_blocks", c.head_blocks, true);
    c.use_fg_prior = kv.get_bool("use_fg_prior", c.use_fg_prior);
    c.use_bg_prior = kv.get_bool("use_bg_prior", c.use_bg_prior);
    c.erase = kv.get_bool("erase", c.erase);
    c.init_gain = kv.get_double("init_gain", c.init_gain);
    c.validate();
    return c;
}

void write_model_config(const ModelConfig& c, KeyValueConfig& kv) {
    kv.set("levels", std::to_string(c.levels));
    kv.set("stage_widths", join_ints(widen(c.stage_widths)));
    kv.set("prototypes", std::to_string(c.prototypes));
    kv.set("kmeans_iterations", std::to_string(c.kmeans_iterations));
    kv.set("head_width", std::to_string(c.head_width));
    kv.set("head_blocks", std::to_string(c.head_blocks));
    kv.set("use_fg_prior", c.use_fg_prior ? "true" : "false");
    kv.set("use_bg_prior", c.use_bg_prior ? "true" : "false");
    kv.set("erase", c.erase ? "true" : "false");
    kv.set("init_gain", format_double(c.init_gain));
}

TrainConfig read_train_config(const KeyValueConfig& kv) {
    TrainConfig c;
    c.iterations = positive(kv, "iterations", c.iterations, true);
    c.batch = positive(kv, "batch", c.batch);
    c.k_shot = positive(kv, "k_shot", c.k_shot);
    c.lr = kv.get_double("lr", c.lr);
    c.momentum = kv.get_double("momentum", c.momentum);
    c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
    c.log_every = positive(kv, "log_every", c.log_every);
    c.snapshot_every = positive(kv, "snapshot_every", c.snapshot_every, true);
    c.seed = kv.get_uint("seed", c.seed);
    c.flip = kv.get_bool("flip", c.flip);
    for (auto v : kv.get_int_list("train_classes", {})) c.train_classes.push_back(static_cast<int>(v));
    if (!(c.lr > 0.0)) throw Error(ErrorKind::ConfigError, "lr must be positive");
    if (c.momentum < 0.0 || c.weight_decay < 0.0) throw Error(ErrorKind::ConfigError, "momentum and weight_decay must be >= 0");
    return c;
}

void write_train_config(const TrainConfig& c, KeyValueConfig& kv) {
    kv.set("iterations", std::to_string(c.iterations));
    kv.set("batch", std::to_string(c.batch));
    kv.set("k_shot", std::to_string(c.k_shot));
    kv.set("lr", format_double(c.lr));
    kv.set("momentum", format_double(c.momentum));
    kv.set("weight_decay", format_double(c.weight_decay));
    kv.set("log_every", std::to_string(c.log_every));
    kv.set("snapshot_every", std::to_string(c.snapshot_every));
    kv.set("seed", std::to_string(c.seed));
    kv.set("flip", c.flip ? "true" : "false");
    kv.set("train_classes", join_ints(widen(c.train_classes)));
}

SyntheticSpec read_synthetic_spec(const KeyValueConfig& kv) {
    SyntheticSpec s;
    s.image_size = positive(kv, "image_size", s.image_size);
    s.distractors = positive(kv, "distractors", s.distractors, true);
    s.seed = kv.get_uint("seed", s.seed);
    s.min_radius = kv.get_double("min_radius", s.min_radius);
    s.max_radius = kv.get_double("max_radius", s.max_radius);
    s.distractor_scale = kv.get_double("distractor_scale", s.distractor_scale);
    if (kv.has("families")) {
        s.shape_families.clear();
        for (auto f : kv.get_int_list("families", {})) {
            if (f < 1 || f > 6) throw Error(ErrorKind::ConfigError, "families must be shape ids 1..6");
            s.shape_families.push_back(static_cast<ShapeFamily>(f));
        }
    }
    s.distractor_folds = kv.get_uint("distractor_folds", s.distractor_folds);
    const std::string mode = kv.get_string("split_mode", "contiguous");
    if (mode == "interleaved") {
        s.distractor_split = SplitMode::Interleaved;
    } else if (mode != "contiguous") {
        throw Error(ErrorKind::ConfigError, "split_mode must be contiguous or interleaved");
    }
    if (!(s.min_radius > 0.0) || s.max_radius < s.min_radius || s.max_radius > 0.5) {
        throw Error(ErrorKind::ConfigError, "need 0 < min_radius <= max_radius <= 0.5");
    }
    return s;
}

}  // namespace protoseg
