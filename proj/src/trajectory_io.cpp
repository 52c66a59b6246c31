#include "rldf/trajectory_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "rldf/error.hpp"

namespace rldf {

double round_f32_9(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(value)));
    return std::strtod(buf, nullptr);
}

nlohmann::json to_json(const DecodeConfig& cfg) {
    return {
        {"strategy", std::string(to_string(cfg.strategy))},
        {"k_per_step", cfg.k_per_step},
        {"threshold", cfg.threshold},
        {"block_size", cfg.block_size},
        {"max_steps", cfg.max_steps},
        {"sample_mode", std::string(to_string(cfg.sampler.mode))},
        {"temperature", cfg.sampler.temperature},
        {"top_p", cfg.sampler.top_p},
    };
}

DecodeConfig decode_config_from_json(const nlohmann::json& j) {
    DecodeConfig cfg;
    cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
    cfg.k_per_step = j.at("k_per_step").get<std::size_t>();
    cfg.threshold = j.at("threshold").get<double>();
    cfg.block_size = j.at("block_size").get<std::size_t>();
    cfg.max_steps = j.at("max_steps").get<std::size_t>();
    cfg.sampler.mode = parse_sample_mode(j.at("sample_mode").get<std::string>());
    cfg.sampler.temperature = j.at("temperature").get<double>();
    cfg.sampler.top_p = j.at("top_p").get<double>();
    return cfg;
}

nlohmann::json to_json(const DenoiseTrajectory& traj) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : traj.events) {
        nlohmann::json probs = nlohmann::json::array();
        for (double p : ev.probs) probs.push_back(round_f32_9(p));
        nlohmann::json ents = nlohmann::json::array();
        for (double h : ev.entropies) ents.push_back(round_f32_9(h));
        events.push_back({{"step", ev.step},
                          {"positions", ev.positions},
                          {"probs", std::move(probs)},
                          {"entropies", std::move(ents)}});
    }
    return {
        {"prompt", traj.prompt},
        {"final", traj.final.response},
        {"mask_id", traj.final.mask_id},
        {"events", std::move(events)},
        {"decode_config", to_json(traj.config)},
        {"seed", traj.seed},
        {"complete", traj.complete},
    };
}

DenoiseTrajectory trajectory_from_json(const nlohmann::json& j) {
    try {
        DenoiseTrajectory traj;
        traj.prompt = j.at("prompt").get<std::vector<TokenId>>();
        const auto mask_id = j.at("mask_id").get<TokenId>();
        traj.final = SequenceState::clean(traj.prompt, j.at("final").get<std::vector<TokenId>>(),
                                          mask_id);
        if (!traj.final.fully_unmasked()) throw FormatError("trajectory: final state has masks");
        for (const auto& je : j.at("events")) {
            UnmaskEvent ev;
            ev.step = je.at("step").get<int>();
            ev.positions = je.at("positions").get<std::vector<std::size_t>>();
            ev.probs = je.at("probs").get<std::vector<double>>();
            if (je.contains("entropies")) ev.entropies = je.at("entropies").get<std::vector<double>>();
            if (ev.probs.size() != ev.positions.size()) {
                throw FormatError("trajectory: probs/positions length mismatch");
            }
            for (auto p : ev.positions) {
                if (p >= traj.final.length()) throw FormatError("trajectory: position out of range");
            }
            traj.events.push_back(std::move(ev));
        }
        traj.config = decode_config_from_json(j.at("decode_config"));
        traj.seed = j.at("seed").get<std::uint64_t>();
        traj.complete = j.value("complete", true);
        return traj;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("trajectory: ") + e.what());
    }
}

void write_trajectory(std::ostream& out, const DenoiseTrajectory& traj,
                      const nlohmann::json& extra) {
    nlohmann::json j = to_json(traj);
    for (const auto& [key, value] : extra.items()) j[key] = value;
    out << j.dump() << '\n';
}

std::vector<DenoiseTrajectory> read_trajectories(std::istream& in) {
    std::vector<DenoiseTrajectory> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("trajectory log line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(trajectory_from_json(j));
    }
    return out;
}

std::vector<DenoiseTrajectory> read_trajectories(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open trajectory log: " + path.string());
    return read_trajectories(in);
}

}  // namespace rldf
