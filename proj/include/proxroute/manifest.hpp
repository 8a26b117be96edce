#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace proxroute {

std::string tool_version();  // semantic version of the CLI/artifact formats

/// FNV-1a 64-bit digest of a file's bytes.
std::uint64_t file_digest(const std::string& path);

std::string hex64(std::uint64_t v);

/// Reproducibility sidecar written next to every file-producing command's
/// outputs: what ran, with which parameters, over which inputs (by digest),
/// producing which outputs (by digest). Timings are informational and are
/// the one section excluded when comparing manifests across runs.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::uint64_t seed = 0;
    int threads = 1;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::pair<std::string, std::string>> inputs;   // (path, digest)
    std::vector<std::pair<std::string, std::string>> outputs;  // (path, digest)
    nlohmann::json timings = nlohmann::json::object();

    void add_input(const std::string& path);
    void add_output(const std::string& path);  // call after the file is written

    nlohmann::json to_json() const;
    void write(const std::string& path) const;
};

}  // namespace proxroute
