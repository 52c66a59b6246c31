#pragma once

// Per-step policy losses on a recorded denoising trajectory.
//
// At a sampled step t the model is run on the intermediate state o_t and
// scored against the clean response o_0, restricted to the clipped clean
// state: the positions still masked in o_t whose clean token has probability
// at least clip_threshold under the filtering policy. The step loss is
//
//   policy:  -(1/|K|) sum_i log p_theta(o0_i | o_t) * A              (one update)
//            -(1/|K|) sum_i min(r_i A, clip(r_i, 1-eps, 1+eps) A)    (PPO, r = p_theta/p_old)
//   kl:       (1/|K|) sum_i (rho_i - log rho_i - 1),  rho = p_ref / p_theta
//
// and losses are averaged per response then per group (sample level), or
// over all kept tokens in the group (token level).

#include <cstddef>
#include <span>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/model.hpp"
#include "rldf/rng.hpp"
#include "rldf/step_weights.hpp"

namespace rldf {

struct ClippedCleanState {
    std::vector<std::size_t> kept_positions;
    std::vector<TokenId> kept_tokens;
    std::vector<double> kept_probs;  // filtering-policy probability of each kept token
    double clip_threshold = 0.0;
    std::size_t masked_count = 0;    // masked positions in o_t
    std::size_t length = 0;          // L

    bool empty() const { return kept_positions.empty(); }
    double utility() const {
        return length == 0 ? 0.0
                           : static_cast<double>(kept_positions.size()) / static_cast<double>(length);
    }
};

// Keeps masked-in-o_t positions i with dists[i][o0_i] >= threshold.
ClippedCleanState clip_tokens(const SequenceState& o0, const SequenceState& ot,
                              const PositionDistributions& dists, double threshold);

// Next-state target: the positions committed at `step`, no clipping.
ClippedCleanState next_state_targets(const DenoiseTrajectory& traj, int step,
                                     const PositionDistributions& dists);

struct StepLoss {
    double policy_term = 0.0;
    double kl_term = 0.0;
    double token_utility = 0.0;
    std::size_t tokens_used = 0;
    bool flagged = false;  // a probability was clamped to kProbFloor
};

// Per-token terms with their derivative with respect to log p_theta(token).
namespace terms {

struct TokenTerm {
    double value = 0.0;
    double dlogp = 0.0;
    bool clamped = false;
};

TokenTerm reinforce(double p_theta, double advantage);
TokenTerm ppo(double p_theta, double p_old, double advantage, double epsilon);
TokenTerm k3(double p_theta, double p_ref);
// Per-token PPO objective min(r A, clip(r) A) as a function of the ratio.
double ppo_objective(double ratio, double advantage, double epsilon);
double k3_value(double rho);

}  // namespace terms

struct StepLossResult {
    StepLoss stats;
    TapedLoss taped;  // value and tape of the differentiated quantity
};

// REINFORCE form. taped.value equals stats.policy_term.
StepLossResult step_loss_reinforce(const Model& model, const ParamStore& theta,
                                   const SequenceState& ot, const ClippedCleanState& clean,
                                   double advantage);

// PPO form with token ratios against theta_old at the same state.
StepLossResult step_loss_ppo(const Model& model, const ParamStore& theta,
                             const ParamStore& theta_old, const SequenceState& ot,
                             const ClippedCleanState& clean, double advantage, double epsilon);

// Mean K3 estimate over the kept tokens, differentiable through theta.
StepLossResult kl_k3(const Model& model, const ParamStore& theta, const ParamStore& theta_ref,
                     const SequenceState& ot, const ClippedCleanState& clean);

// (1/G) sum_b (1/|S_b|) sum_t [policy + beta * kl]; steps with no tokens are
// left out of |S_b|.
double aggregate_sample_level(std::span<const std::vector<StepLoss>> per_response, double beta,
                              std::size_t G);

// sum over kept tokens of [policy + beta * kl] / total kept tokens.
double aggregate_token_level(std::span<const std::vector<StepLoss>> per_response, double beta);

struct PolicyMode {
    bool ppo = false;
    const ParamStore* theta_old = nullptr;  // required when ppo is set
    double epsilon = 0.2;
};

// Baseline: one pass conditioned on the fully masked response, all positions
// scored.
TapedLoss loss_full_seq(const Model& model, const ParamStore& theta,
                        std::span<const TokenId> prompt, std::span<const TokenId> response,
                        double advantage, const PolicyMode& mode = {});

// Baseline: random mask set M (each position with probability mask_rate),
// conditioned on the unmasked rest, scored on M. Empty M scores 0.
TapedLoss loss_random_mask(const Model& model, const ParamStore& theta,
                           std::span<const TokenId> prompt, std::span<const TokenId> response,
                           double mask_rate, double advantage, Rng& rng,
                           const PolicyMode& mode = {});

enum class Target { x0, x_prev };

struct OracleConfig {
    Target target = Target::x0;
    double clip_threshold = 0.2;
    double beta = 0.0;
    const ParamStore* theta_ref = nullptr;      // required when beta > 0
    const ParamStore* filter_params = nullptr;  // clip-filter policy; theta when null
    PolicyMode mode{};
};

struct OracleResult {
    TapedLoss taped;
    std::vector<StepLoss> steps;  // one per trajectory step, T down to 1
};

// Exact reference: every step of the trajectory, averaged per response.
OracleResult loss_sequential_oracle(const Model& model, const ParamStore& theta,
                                    const DenoiseTrajectory& traj, double advantage,
                                    const OracleConfig& cfg);

}  // namespace rldf
