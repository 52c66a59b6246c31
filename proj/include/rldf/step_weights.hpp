#pragma once

// Likelihood-weighted timestep selection.
//
// Each denoising step t gets an uncertainty score, the mean negative log
// probability of the tokens committed at that step. A temperature softmax
// over the scores gives sampling weights, and k steps are drawn without
// replacement by successive renormalization. Low temperature concentrates
// on the least confident steps (exact top-k at tau <= kDeterministicTau);
// high temperature approaches uniform selection.

#include <cstddef>
#include <span>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/rng.hpp"

namespace rldf {

// Probability floor applied before any log or ratio.
inline constexpr double kProbFloor = 1e-12;
// At or below this temperature, selection is deterministic top-k.
inline constexpr double kDeterministicTau = 1e-6;
// Softmax weights below this are floored before renormalizing.
inline constexpr double kWeightFloor = 1e-15;

// -(1/|I_t|) * sum log p_i over the event's committed probabilities.
// Probabilities below kProbFloor are clamped and reported via `clamped`.
double step_uncertainty(const UnmaskEvent& event, bool* clamped = nullptr);

// w_t = exp(P_t / tau) / sum exp(P_t' / tau), with max subtraction.
std::vector<double> step_softmax(std::span<const double> uncertainty, double tau);

// Indices (ascending) of min(k, T) steps drawn without replacement. Requires
// k >= 1 and tau > 0.
std::vector<std::size_t> sample_timesteps(std::span<const double> uncertainty, std::size_t k,
                                          double tau, Rng& rng);

struct StepWeightTable {
    std::vector<int> steps;            // step index t of each row, T down to 1
    std::vector<double> uncertainty;   // P_t
    std::vector<double> weights;       // w_t
    bool clamped = false;
};

StepWeightTable step_weight_table(const DenoiseTrajectory& traj, double tau);

}  // namespace rldf
