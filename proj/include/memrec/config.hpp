#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

// One `key = value` pair of a sectioned key-value text file. Values are bare
// tokens, "quoted strings" with \" \\ \n \t escapes, or """multi-line"""
// blocks (a newline right after the opening quotes is dropped).
struct KvEntry {
    std::string section;
    std::string key;
    std::string value;
    std::size_t line_no = 0;
};

// Throws ConfigError with the offending line number.
std::vector<KvEntry> parse_kv_text(std::string_view text);

// Flat dotted-key configuration ("llm.endpoint"). A `[llm]` section header
// prefixes the keys that follow it.
class Config {
public:
    static Config parse(std::string_view text);
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback = {}) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::size_t get_count(const std::string& key, std::size_t fallback) const;  // must be >= 1
    bool get_bool(const std::string& key, bool fallback) const;

    // Keys not in `known`; the CLI rejects configs that contain any.
    std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;
    const std::map<std::string, std::string>& values() const { return values_; }

    // Directory of the file the config was loaded from, for relative paths.
    std::filesystem::path base_dir;
    std::filesystem::path resolve_path(const std::string& key) const;

private:
    std::map<std::string, std::string> values_;
};

// Every key the project understands, grouped by module.
const std::vector<std::string>& known_config_keys();

}  // namespace memrec
