#include "proxroute/manifest.hpp"

#include <cstdio>
#include <fstream>

#include "proxroute/errors.hpp"

namespace proxroute {

std::string tool_version() { return "1.0.0"; }

std::uint64_t file_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for digest: " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void RunManifest::add_input(const std::string& path) {
    inputs.emplace_back(path, hex64(file_digest(path)));
}

void RunManifest::add_output(const std::string& path) {
    outputs.emplace_back(path, hex64(file_digest(path)));
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["tool"] = "proxroute";
    j["version"] = tool_version();
    j["command"] = command;
    j["argv"] = argv;
    j["seed"] = seed;
    j["threads"] = threads;
    j["config"] = config;
    j["inputs"] = nlohmann::json::array();
    for (const auto& [path, digest] : inputs)
        j["inputs"].push_back({{"path", path}, {"digest", digest}});
    j["outputs"] = nlohmann::json::array();
    for (const auto& [path, digest] : outputs)
        j["outputs"].push_back({{"path", path}, {"digest", digest}});
    j["timings"] = timings;
    return j;
}

void RunManifest::write(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << to_json().dump(2) << "\n";
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace proxroute
