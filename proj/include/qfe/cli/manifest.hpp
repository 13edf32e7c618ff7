#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qfe::cli {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
    std::string config_hash;
    std::string version;
    std::string subcommand;
    std::string started;
    std::string finished;
    int exit_code = 0;
    // Relative to the output directory.
    std::vector<std::string> files;
};

// ISO 8601 UTC, second resolution.
std::string utc_now();

nlohmann::json manifest_json(const RunManifest& m, const std::filesystem::path& dir);
void write_manifest(const RunManifest& m, const std::filesystem::path& dir);

}  // namespace qfe::cli
