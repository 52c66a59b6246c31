#pragma once

// Batched policy-loss evaluation used by the trainer.
//
// prepare_loss() does everything that depends only on the behavior policy:
// timestep sampling, reconstruction of o_t, the token clip filter and the
// theta_old / theta_ref probabilities of every scored token. The result is a
// list of loss units (one conditioning state each) with fixed aggregation
// weights. evaluate_loss() then needs one forward and one backward pass per
// unit under the current parameters, so N inner iterations reuse one
// preparation.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/model.hpp"
#include "rldf/policy_loss.hpp"

namespace rldf {

enum class Estimator { rldf, full_seq, random_mask, sequential_oracle };
enum class Normalization { sample, token };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view name);
std::string_view to_string(Normalization n);
Normalization parse_normalization(std::string_view name);
std::string_view to_string(Target t);
Target parse_target(std::string_view name);

struct LossConfig {
    Estimator estimator = Estimator::rldf;
    Target target = Target::x0;
    std::size_t k = 16;
    double tau_sample = 1.0;
    double epsilon = 0.2;
    double clip_threshold = 0.2;
    double beta = 0.01;
    Normalization normalization = Normalization::sample;
    double mask_rate = 0.5;  // random_mask only

    void validate() const;
};

struct ResponseRef {
    const DenoiseTrajectory* traj = nullptr;
    double advantage = 0.0;
};

struct LossUnit {
    std::size_t response = 0;
    int step = 0;  // trajectory step, 0 for the single-pass baselines
    SequenceState cond;
    std::vector<std::size_t> positions;
    std::vector<TokenId> tokens;
    std::vector<double> old_probs;
    std::vector<double> ref_probs;  // empty when beta == 0
    double advantage = 0.0;
    double weight = 0.0;  // multiplies the unit's mean token loss
    std::size_t masked_count = 0;
    std::size_t length = 0;
};

struct PreparedLoss {
    LossConfig config;
    std::vector<LossUnit> units;       // units with no tokens are dropped
    std::size_t responses = 0;
    std::size_t steps_sampled = 0;     // including steps with no kept tokens
    double token_utility = 0.0;        // mean over sampled steps of kept / L
    bool clamped = false;              // a step uncertainty hit the probability floor
};

// theta_ref may be null when cfg.beta == 0. Sampling for response b uses
// Rng::derive(seed, "steps", b).
PreparedLoss prepare_loss(const Model& model, const ParamStore& theta_old,
                          const ParamStore* theta_ref, std::span<const ResponseRef> responses,
                          const LossConfig& cfg, std::uint64_t seed);

struct LossEval {
    double loss = 0.0;
    double policy = 0.0;  // weighted policy part of loss
    double kl = 0.0;      // weighted mean K3 term (before beta)
    std::vector<StepLoss> unit_stats;
    Gradients grads;      // empty unless requested
    bool flagged = false; // some probability was clamped
};

// Units are processed in fixed chunks, each with its own gradient buffer;
// buffers are summed in chunk order, so the result does not depend on the
// number of threads.
LossEval evaluate_loss(const Model& model, const ParamStore& theta, const PreparedLoss& prepared,
                       bool ppo, bool want_grad);

}  // namespace rldf
