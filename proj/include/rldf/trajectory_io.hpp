#pragma once

// Line-delimited JSON trajectory log.
//
// One object per line:
//   {"prompt":[..], "final":[..], "mask_id":M,
//    "events":[{"step":t, "positions":[..], "probs":[..], "entropies":[..]}, ...],
//    "decode_config":{...}, "seed":S, "complete":true, ...extra}
// Probabilities and entropies are rounded to 32-bit floats and written with
// at most 9 significant digits.

#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "json.hpp"

#include "rldf/diffusion.hpp"

namespace rldf {

// Rounds to the nearest float and then to 9 significant decimal digits.
double round_f32_9(double value);

nlohmann::json to_json(const DecodeConfig& cfg);
DecodeConfig decode_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DenoiseTrajectory& traj);
DenoiseTrajectory trajectory_from_json(const nlohmann::json& j);

// Writes one line; `extra` members (reward, task, ...) are merged in.
void write_trajectory(std::ostream& out, const DenoiseTrajectory& traj,
                      const nlohmann::json& extra = nlohmann::json::object());

std::vector<DenoiseTrajectory> read_trajectories(std::istream& in);
std::vector<DenoiseTrajectory> read_trajectories(const std::filesystem::path& path);

}  // namespace rldf
