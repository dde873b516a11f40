#include "podmtl/kvconfig.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace podmtl {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_string(buf.str(), path);
}

KvConfig KvConfig::parse_string(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    cfg.origin_ = origin;
    cfg.sections_.push_back(Section{"", {}});
    Section* current = &cfg.sections_.back();

    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw config_error(origin + ":" + std::to_string(line_no) +
                                   ": unterminated section header");
            }
            const std::string name = trim(t.substr(1, t.size() - 2));
            if (name.empty()) {
                throw config_error(origin + ":" + std::to_string(line_no) + ": empty section name");
            }
            cfg.sections_.push_back(Section{name, {}});
            current = &cfg.sections_.back();
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw config_error(origin + ":" + std::to_string(line_no) +
                               ": expected 'key = value', got '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw config_error(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        for (const auto& [k, v] : current->entries) {
            (void)v;
            if (k == key) {
                throw config_error(origin + ":" + std::to_string(line_no) + ": duplicate key '" +
                                   key + "' in section [" + current->name + "]");
            }
        }
        current->entries.emplace_back(key, value);
    }
    return cfg;
}

const std::string* KvConfig::find(const std::string& section, const std::string& key) const {
    for (const auto& s : sections_) {
        if (s.name != section) continue;
        for (const auto& [k, v] : s.entries) {
            if (k == key) return &v;
        }
    }
    return nullptr;
}

void KvConfig::missing(const std::string& section, const std::string& key) const {
    const std::string where = section.empty() ? "top level" : "section [" + section + "]";
    throw config_error(origin_ + ": missing required key '" + key + "' in " + where);
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::vector<std::string> KvConfig::sections() const {
    std::vector<std::string> out;
    for (const auto& s : sections_) {
        if (!s.name.empty()) out.push_back(s.name);
    }
    return out;
}

std::vector<std::string> KvConfig::keys(const std::string& section) const {
    std::vector<std::string> out;
    for (const auto& s : sections_) {
        if (s.name != section) continue;
        for (const auto& [k, v] : s.entries) {
            (void)v;
            out.push_back(k);
        }
    }
    return out;
}

std::vector<std::string> KvConfig::sections_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& s : sections_) {
        if (s.name.rfind(prefix + ".", 0) == 0) out.push_back(s.name);
    }
    return out;
}

std::string KvConfig::get_string(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    if (!v) missing(section, key);
    return *v;
}

std::string KvConfig::get_string_or(const std::string& section, const std::string& key,
                                    const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
}

std::int64_t KvConfig::get_int(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    try {
        std::size_t pos = 0;
        const std::int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw config_error(origin_ + ": key '" + key + "' = '" + v + "' is not an integer");
    }
}

std::int64_t KvConfig::get_int_or(const std::string& section, const std::string& key,
                                  std::int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

std::uint64_t KvConfig::get_uint(const std::string& section, const std::string& key) const {
    const std::int64_t v = get_int(section, key);
    if (v < 0) {
        throw config_error(origin_ + ": key '" + key + "' must be non-negative");
    }
    return static_cast<std::uint64_t>(v);
}

double KvConfig::get_double(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw config_error(origin_ + ": key '" + key + "' = '" + v + "' is not a number");
    }
}

double KvConfig::get_double_or(const std::string& section, const std::string& key,
                               double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

bool KvConfig::get_bool(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw config_error(origin_ + ": key '" + key + "' = '" + v + "' is not a boolean");
}

bool KvConfig::get_bool_or(const std::string& section, const std::string& key,
                           bool fallback) const {
    return has(section, key) ? get_bool(section, key) : fallback;
}

std::vector<std::string> KvConfig::get_list(const std::string& section,
                                            const std::string& key) const {
    const std::string v = get_string(section, key);
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<std::string> KvConfig::get_list_or(const std::string& section,
                                               const std::string& key,
                                               const std::vector<std::string>& fallback) const {
    return has(section, key) ? get_list(section, key) : fallback;
}

void KvConfig::set(const std::string& section, const std::string& key,
                   const std::string& value) {
    for (auto& s : sections_) {
        if (s.name != section) continue;
        for (auto& [k, v] : s.entries) {
            if (k == key) {
                v = value;
                return;
            }
        }
        s.entries.emplace_back(key, value);
        return;
    }
    sections_.push_back(Section{section, {{key, value}}});
}

std::string KvConfig::dump() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& s : sections_) {
        if (s.entries.empty() && s.name.empty()) continue;
        if (!s.name.empty()) {
            if (!first) os << '\n';
            os << '[' << s.name << "]\n";
        }
        for (const auto& [k, v] : s.entries) os << k << " = " << v << '\n';
        first = false;
    }
    return os.str();
}

}  // namespace podmtl
