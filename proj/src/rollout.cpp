#include "rldf/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "rldf/error.hpp"

namespace rldf {

RolloutGroup rollout_group(const Denoiser& policy, const TaskInstance& task, std::size_t G,
                           std::size_t response_length, TokenId mask_id,
                           const DecodeConfig& cfg, std::uint64_t group_seed) {
    std::vector<std::uint64_t> seeds(G);
    for (std::size_t b = 0; b < G; ++b) seeds[b] = Rng::derive_seed(group_seed, "trajectory", b);
    return rollout_group(policy, task, seeds, response_length, mask_id, cfg);
}

RolloutGroup rollout_group(const Denoiser& policy, const TaskInstance& task,
                           std::span<const std::uint64_t> seeds, std::size_t response_length,
                           TokenId mask_id, const DecodeConfig& cfg) {
    if (seeds.size() < 2) throw InvalidArgument("rollout_group: G must be >= 2");
    cfg.validate();
    RolloutGroup group;
    group.task = &task;
    group.trajectories.resize(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());

    const auto n = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto b = static_cast<std::size_t>(i);
        try {
            group.trajectories[b] =
                decode(policy, task.prompt, response_length, mask_id, cfg, seeds[b]);
        } catch (...) {
            errors[b] = std::current_exception();
        }
    }
    for (std::size_t b = 0; b < seeds.size(); ++b) {
        if (!errors[b]) continue;
        // A failed decode keeps an empty, incomplete trajectory; it scores 0.
        auto& t = group.trajectories[b];
        t.prompt = task.prompt;
        t.final = SequenceState::fully_masked(task.prompt, response_length, mask_id);
        t.config = cfg;
        t.seed = seeds[b];
        t.complete = false;
    }
    return group;
}

void score_group(RolloutGroup& group) {
    if (group.task == nullptr) throw InvalidState("score_group: group has no task");
    group.rewards.resize(group.size());
    for (std::size_t b = 0; b < group.size(); ++b) {
        const auto& t = group.trajectories[b];
        const double r = t.complete ? group.task->reward(t.final.response) : 0.0;
        group.rewards[b] = std::clamp(r, 0.0, 1.0);
    }
}

std::vector<double> normalize_advantages(std::span<const double> rewards, double std_floor) {
    if (rewards.size() < 2) throw InvalidArgument("normalize_advantages: need G >= 2");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    const double denom = std::max(sd, std_floor);
    std::vector<double> adv(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
    return adv;
}

GroupDecision filter_rewards(std::span<const double> rewards) {
    if (rewards.empty()) return GroupDecision::drop;
    const bool constant = std::all_of(rewards.begin(), rewards.end(),
                                      [&](double r) { return r == rewards.front(); });
    return constant ? GroupDecision::drop : GroupDecision::retain;
}

GroupDecision filter_group(const RolloutGroup& group) { return filter_rewards(group.rewards); }

}  // namespace rldf
