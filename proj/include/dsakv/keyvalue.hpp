#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dsakv {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The file could not be read or is not a `key = value` document at all.
class ConfigReadError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Plain-text `key = value` document. `#` starts a comment; blank lines are ignored.
class KeyValueFile {
public:
    static KeyValueFile parse(std::string_view text, const std::string& origin = "<string>");
    static KeyValueFile load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws ConfigError naming any key not in `known`.
    void reject_unknown(std::initializer_list<std::string_view> known) const;

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
};

/// Shortest round-tripping decimal representation of a double.
std::string format_double(double v);

}  // namespace dsakv
