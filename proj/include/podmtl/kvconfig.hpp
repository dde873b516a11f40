#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "podmtl/errors.hpp"

namespace podmtl {

/// Human-readable `key = value` configuration with optional [section]
/// headers and # comments. Keys keep insertion order for echoing.
class KvConfig {
public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::vector<std::string> sections() const;
    std::vector<std::string> keys(const std::string& section) const;

    /// Section names beginning with `prefix.`.
    std::vector<std::string> sections_with_prefix(const std::string& prefix) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::int64_t get_int_or(const std::string& section, const std::string& key,
                            std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;
    /// Comma-separated list.
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
    std::vector<std::string> get_list_or(const std::string& section, const std::string& key,
                                         const std::vector<std::string>& fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

    /// Canonical `key = value` dump, sections in first-seen order.
    std::string dump() const;

private:
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> entries;
    };
    std::vector<Section> sections_;
    std::string origin_;

    const std::string* find(const std::string& section, const std::string& key) const;
    [[noreturn]] void missing(const std::string& section, const std::string& key) const;
};

}  // namespace podmtl
