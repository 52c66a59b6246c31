#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/tasks.hpp"

namespace rldf {

struct RolloutGroup {
    const TaskInstance* task = nullptr;
    std::vector<DenoiseTrajectory> trajectories;
    std::vector<double> rewards;
    std::vector<double> advantages;

    std::size_t size() const { return trajectories.size(); }
};

// G independent decodes of task.prompt under `policy`. Trajectory b uses
// seed Rng::derive_seed(group_seed, "trajectory", b). Requires G >= 2.
RolloutGroup rollout_group(const Denoiser& policy, const TaskInstance& task, std::size_t G,
                           std::size_t response_length, TokenId mask_id,
                           const DecodeConfig& cfg, std::uint64_t group_seed);

// Same, with one explicit decode seed per trajectory.
RolloutGroup rollout_group(const Denoiser& policy, const TaskInstance& task,
                           std::span<const std::uint64_t> seeds, std::size_t response_length,
                           TokenId mask_id, const DecodeConfig& cfg);

// Fills rewards from the task verifier; incomplete trajectories score 0.
void score_group(RolloutGroup& group);

// (r - mean) / max(population std, std_floor). Requires at least 2 rewards.
std::vector<double> normalize_advantages(std::span<const double> rewards, double std_floor);

enum class GroupDecision { retain, drop };

// Drops groups whose rewards have zero variance.
GroupDecision filter_group(const RolloutGroup& group);
GroupDecision filter_rewards(std::span<const double> rewards);

}  // namespace rldf
