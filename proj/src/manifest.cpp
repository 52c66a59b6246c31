#include "rldf/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "rldf/error.hpp"

namespace rldf {

nlohmann::json RunManifest::to_json() const {
    nlohmann::json arts = nlohmann::json::object();
    for (const auto& [role, path] : artifacts) arts[role] = path;
    return {{"command", command},  {"seed", seed},           {"code_version", code_version},
            {"start_time", start_time}, {"config", config_ini}, {"artifacts", arts}};
}

RunManifest make_manifest(std::string command, const RunConfig& cfg) {
    RunManifest m;
    m.command = std::move(command);
    m.config_ini = to_ini(cfg);
    m.seed = cfg.seed;
    m.start_time = utc_timestamp();
    return m;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidState("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw InvalidState("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    const auto path = dir / "manifest.json";
    if (std::filesystem::exists(path)) {
        throw InvalidState("manifest already exists: " + path.string());
    }
    write_file_atomic(path, m.to_json().dump(2) + "\n");
}

void write_completion(const std::filesystem::path& dir, std::string_view status,
                      const nlohmann::json& extra) {
    nlohmann::json j = {{"end_time", utc_timestamp()}, {"status", status}};
    j.update(extra);
    write_file_atomic(dir / "completion.json", j.dump(2) + "\n");
}

nlohmann::json to_json(const DatasetManifest& d) {
    return {{"seed", d.seed},
            {"family", std::string(to_string(d.family))},
            {"count", d.count},
            {"max_len", d.max_len}};
}

}  // namespace rldf
