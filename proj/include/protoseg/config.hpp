#pragma once

// Flat `key = value` configuration with '#' comments. Later assignments
// override earlier ones, so command-line `--set` values can be layered on
// top of a file.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace protoseg {

struct ModelConfig;
struct TrainConfig;
struct SyntheticSpec;

class KeyValueConfig {
public:
    /// Throws ConfigError on a malformed line.
    static KeyValueConfig parse(std::string_view text, const std::string& origin = "<config>");
    /// Throws IoError when the file cannot be read.
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value);
    /// "key=value"; throws ConfigError without '='.
    void set_assignment(std::string_view assignment);
    void merge(const KeyValueConfig& other);

    bool has(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return values_; }

    // Typed getters throw ConfigError when a present value does not parse.
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::int64_t> get_int_list(const std::string& key, const std::vector<std::int64_t>& fallback) const;

    /// Keys that were set but never read.
    std::vector<std::string> unread() const;

    /// Sorted `key = value` lines.
    std::string to_text() const;
    void save(const std::filesystem::path& path) const;

private:
    const std::string* find(const std::string& key) const;

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> read_;
};

std::string format_double(double v);  // shortest round-trip form
std::string join_ints(const std::vector<std::int64_t>& values);

ModelConfig read_model_config(const KeyValueConfig& kv);
void write_model_config(const ModelConfig& cfg, KeyValueConfig& kv);

TrainConfig read_train_config(const KeyValueConfig& kv);
void write_train_config(const TrainConfig& cfg, KeyValueConfig& kv);

SyntheticSpec read_synthetic_spec(const KeyValueConfig& kv);

}  // namespace protoseg
