#pragma once

// Run manifests and atomic file writes.
//
// manifest.json is written once, before any work starts, and never touched
// again. The end timestamp and final status go to a separate completion.json
// so the manifest itself stays immutable.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rldf/config.hpp"
#include "rldf/tasks.hpp"

namespace rldf {

inline constexpr std::string_view kCodeVersion = "rldf-0.1.0";

struct RunManifest {
    std::string command;
    std::string config_ini;  // full config, every key
    std::uint64_t seed = 0;
    std::string code_version{kCodeVersion};
    std::string start_time;  // UTC, ISO 8601
    std::vector<std::pair<std::string, std::string>> artifacts;  // role, path

    nlohmann::json to_json() const;
};

RunManifest make_manifest(std::string command, const RunConfig& cfg);

// Current UTC time as "YYYY-MM-DDThh:mm:ssZ".
std::string utc_timestamp();

// Writes to "<path>.tmp" and renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Fails with InvalidState if manifest.json already exists in dir.
void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
void write_completion(const std::filesystem::path& dir, std::string_view status,
                      const nlohmann::json& extra = nlohmann::json::object());

nlohmann::json to_json(const DatasetManifest& d);

}  // namespace rldf
