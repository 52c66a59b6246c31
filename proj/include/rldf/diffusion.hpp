#pragma once

// Forward masking and confidence-based denoising for masked diffusion
// sequences.
//
// Two notions of "time" are kept apart on purpose:
//   mask_ratio  continuous masking probability used by forward_mask/MLM
//   step        discrete denoising event index, T = number of events
// Nothing here converts between them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rldf/distributions.hpp"
#include "rldf/rng.hpp"
#include "rldf/sampling.hpp"

namespace rldf {

// Prompt plus a fixed-length response in which some positions hold the
// reserved MASK token. mask_flags[i] is true exactly when response[i] is MASK.
struct SequenceState {
    std::vector<TokenId> prompt;
    std::vector<TokenId> response;
    std::vector<std::uint8_t> mask_flags;
    TokenId mask_id = 0;

    static SequenceState fully_masked(std::vector<TokenId> prompt, std::size_t length,
                                      TokenId mask_id);
    static SequenceState clean(std::vector<TokenId> prompt, std::vector<TokenId> response,
                               TokenId mask_id);

    std::size_t length() const { return response.size(); }
    bool is_masked(std::size_t i) const { return mask_flags[i] != 0; }
    std::size_t masked_count() const;
    bool fully_unmasked() const { return masked_count() == 0; }

    void commit(std::size_t i, TokenId token);
    void mask(std::size_t i);

    // Checks the mask-flag invariant.
    bool consistent() const;

    friend bool operator==(const SequenceState&, const SequenceState&) = default;
};

struct UnmaskEvent {
    int step = 0;                        // denoising step t in [1, T]
    std::vector<std::size_t> positions;  // I_t, ascending
    std::vector<double> probs;           // probability of each committed token at commit time
    std::vector<double> entropies;       // entropy (nats) of the model row at each position
};

enum class UnmaskStrategy { static_topk, dynamic_threshold };

struct DecodeConfig {
    UnmaskStrategy strategy = UnmaskStrategy::dynamic_threshold;
    std::size_t k_per_step = 1;
    double threshold = 0.9;
    std::size_t block_size = 32;
    std::size_t max_steps = 64;
    SamplerConfig sampler{};

    // Throws InvalidArgument on out-of-range fields.
    void validate() const;
};

struct DenoiseTrajectory {
    std::vector<TokenId> prompt;
    std::vector<UnmaskEvent> events;  // events[0].step == T, last event has step 1
    SequenceState final;              // o_0
    DecodeConfig config;
    std::uint64_t seed = 0;
    bool complete = true;  // false when max_steps ran out and the rest was forced

    std::size_t num_steps() const { return events.size(); }
    std::size_t length() const { return final.length(); }
    // The event with the given step index.
    const UnmaskEvent& event_at(int step) const;
};

// Anything that maps a partially masked state to per-position distributions
// over the vocabulary for every response position.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual PositionDistributions predict(const SequenceState& state) const = 0;
};

// Independently replaces each response token by MASK with probability
// mask_ratio. The prompt is never touched.
SequenceState forward_mask(const SequenceState& x0, double mask_ratio, Rng& rng);

// o_t of a complete trajectory: positions committed at steps > t hold their
// final tokens, everything else is masked.
SequenceState reconstruct_state(const DenoiseTrajectory& traj, int step);

// Applies one event to a state, committing the final tokens of the trajectory.
void apply_event(SequenceState& state, const UnmaskEvent& event, const SequenceState& final);

// Half-open response range of the block holding the first masked position.
std::pair<std::size_t, std::size_t> active_block(const SequenceState& state,
                                                 std::size_t block_size);

// Commits every masked in-block position whose sampled token probability is
// at least cfg.threshold; if none qualifies, commits the single most probable
// one. The returned event carries step 0; decode() assigns step indices.
std::pair<SequenceState, UnmaskEvent> dynamic_unmask_step(const SequenceState& state,
                                                          const PositionDistributions& dist,
                                                          const DecodeConfig& cfg, Rng& rng);

// Commits the k_per_step masked in-block positions with the highest sampled
// token probability, lowest index first on ties.
std::pair<SequenceState, UnmaskEvent> static_unmask_step(const SequenceState& state,
                                                         const PositionDistributions& dist,
                                                         const DecodeConfig& cfg, Rng& rng);

// Full block-wise decode from the fully masked response of the given length.
DenoiseTrajectory decode(const Denoiser& model, std::span<const TokenId> prompt,
                         std::size_t response_length, TokenId mask_id, const DecodeConfig& cfg,
                         std::uint64_t seed);

std::string_view to_string(UnmaskStrategy s);
UnmaskStrategy parse_strategy(std::string_view name);

}  // namespace rldf
