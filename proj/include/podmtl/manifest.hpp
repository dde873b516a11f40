#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace podmtl {

/// FNV-1a 64-bit checksum of a file's bytes, as a hex string.
std::string file_checksum(const std::string& path);

/// One written record per CLI run: the command, its resolved configuration,
/// and checksums of every input and output artifact. Re-running with the
/// same inputs must reproduce the same output checksums.
struct RunManifest {
    std::string command;
    nlohmann::ordered_json config;  // resolved snapshot
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, checksum
    std::vector<std::pair<std::string, std::string>> outputs;  // path, checksum
    double duration_seconds = 0.0;

    void add_input(const std::string& path);
    void add_output(const std::string& path);
    void write(const std::string& path) const;
};

}  // namespace podmtl
