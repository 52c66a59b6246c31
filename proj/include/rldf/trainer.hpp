#pragma once

// MLM pretraining, the RL outer loop and greedy evaluation.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rldf/diffusion.hpp"
#include "rldf/estimator.hpp"
#include "rldf/model.hpp"
#include "rldf/optim.hpp"
#include "rldf/rollout.hpp"
#include "rldf/tasks.hpp"

namespace rldf {

struct PretrainConfig {
    TaskSpec task{};
    std::size_t steps = 2000;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double max_grad_norm = 1.0;
    std::size_t heldout = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PretrainReport {
    double initial_heldout = 0.0;
    double final_heldout = 0.0;
    std::vector<double> losses;  // training loss per step
    std::size_t skipped = 0;     // samples with no masked position
};

// Held-out MLM loss on a fixed set of masked sequences from the "heldout"
// stream of seed.
double heldout_mlm_loss(const Model& model, const ParamStore& params, const TaskSpec& task,
                        std::size_t count, std::uint64_t seed);

// Adam on mean MLM loss with mask ratio ~ U(0, 1) per sequence. Zero steps
// leave params untouched.
PretrainReport pretrain(const Model& model, ParamStore& params, const PretrainConfig& cfg);

struct TrainConfig {
    TaskSpec task{};
    std::size_t batch_size = 8;  // prompts per outer step
    std::size_t G = 4;
    std::size_t N = 1;           // inner iterations; N > 1 uses PPO ratios
    LossConfig loss{};
    double std_floor = 1e-4;
    double lr = 1e-5;
    double max_grad_norm = 1.0;
    std::size_t total_steps = 200;
    std::uint64_t seed = 0;
    DecodeConfig decode = default_rollout_decode();

    static DecodeConfig default_rollout_decode();
    void validate() const;
};

struct TrainState {
    ParamStore theta;
    ParamStore theta_old;
    ParamStore theta_ref;  // frozen
    Adam optimizer;
    std::size_t step = 0;
};

TrainState init_train_state(const ParamStore& pretrained, const TrainConfig& cfg);

struct StepMetrics {
    std::size_t step = 0;
    double mean_reward = 0.0;
    double loss = 0.0;
    double policy_loss = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;  // pre-clip norm, mean over inner iterations
    double token_utility = 0.0;
    std::size_t groups_retained = 0;
    std::size_t steps_sampled = 0;
    std::size_t updates = 0;
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
};

// Prompts of outer step `step`, drawn from Rng::derive(cfg.seed, "batch", step).
std::vector<TaskInstance> sample_batch(const TrainConfig& cfg, std::size_t step);

// One outer iteration on the given prompts. When groups_out is set it
// receives the scored rollout groups.
StepMetrics train_step(const Model& model, TrainState& state, std::span<const TaskInstance> batch,
                       const TrainConfig& cfg, std::vector<RolloutGroup>* groups_out = nullptr);

using StepCallback =
    std::function<void(const StepMetrics&, const TrainState&, const std::vector<RolloutGroup>&)>;

// Runs steps state.step .. cfg.total_steps - 1.
void train(const Model& model, TrainState& state, const TrainConfig& cfg,
           const StepCallback& on_step = {});

struct EvalRow {
    UnmaskStrategy strategy = UnmaskStrategy::dynamic_threshold;
    std::size_t max_steps = 0;
    std::size_t count = 0;
    double mean_reward = 0.0;
    std::size_t incomplete = 0;
};

// Mean reward of argmax decodes over the tasks.
EvalRow evaluate_tasks(const Model& model, const ParamStore& params,
                       std::span<const TaskInstance> tasks, std::size_t response_length,
                       const DecodeConfig& decode);

struct EvalConfig {
    TaskSpec task{};
    std::size_t count = 256;
    std::uint64_t seed = 0;
    DecodeConfig decode{};  // strategy and max_steps are overridden per row
};

// Both strategies at max_steps in {L/2, L, 2L}.
std::vector<EvalRow> evaluate(const Model& model, const ParamStore& params, const EvalConfig& cfg);

}  // namespace rldf
