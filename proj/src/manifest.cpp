#include "podmtl/manifest.hpp"

#include <fstream>

#include "podmtl/errors.hpp"

namespace podmtl {

std::string file_checksum(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error("checksum: cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof(buf));
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

void RunManifest::add_input(const std::string& path) {
    inputs.emplace_back(path, file_checksum(path));
}

void RunManifest::add_output(const std::string& path) {
    outputs.emplace_back(path, file_checksum(path));
}

void RunManifest::write(const std::string& path) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& [p, c] : inputs) in[p] = c;
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [p, c] : outputs) out[p] = c;
    j["inputs"] = in;
    j["outputs"] = out;
    j["duration_seconds"] = duration_seconds;
    std::ofstream os(path);
    if (!os) throw data_error("cannot open '" + path + "' for writing");
    os << j.dump(2) << '\n';
    if (!os) throw data_error("failed writing '" + path + "'");
}

}  // namespace podmtl
