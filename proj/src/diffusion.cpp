#include "rldf/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rldf/error.hpp"

namespace rldf {

SequenceState SequenceState::fully_masked(std::vector<TokenId> prompt, std::size_t length,
                                          TokenId mask_id) {
    SequenceState s;
    s.prompt = std::move(prompt);
    s.response.assign(length, mask_id);
    s.mask_flags.assign(length, 1);
    s.mask_id = mask_id;
    return s;
}

SequenceState SequenceState::clean(std::vector<TokenId> prompt, std::vector<TokenId> response,
                                   TokenId mask_id) {
    SequenceState s;
    s.prompt = std::move(prompt);
    s.mask_flags.assign(response.size(), 0);
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (response[i] == mask_id) s.mask_flags[i] = 1;
    }
    s.response = std::move(response);
    s.mask_id = mask_id;
    return s;
}

std::size_t SequenceState::masked_count() const {
    return static_cast<std::size_t>(std::count(mask_flags.begin(), mask_flags.end(), 1));
}

void SequenceState::commit(std::size_t i, TokenId token) {
    if (token == mask_id) throw InvalidArgument("commit: cannot commit the MASK token");
    response[i] = token;
    mask_flags[i] = 0;
}

void SequenceState::mask(std::size_t i) {
    response[i] = mask_id;
    mask_flags[i] = 1;
}

bool SequenceState::consistent() const {
    if (response.size() != mask_flags.size()) return false;
    for (std::size_t i = 0; i < response.size(); ++i) {
        if ((mask_flags[i] != 0) != (response[i] == mask_id)) return false;
    }
    return true;
}

void DecodeConfig::validate() const {
    if (k_per_step < 1) throw InvalidArgument("decode: k_per_step must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw InvalidArgument("decode: threshold must be in (0, 1)");
    }
    if (block_size < 1) throw InvalidArgument("decode: block_size must be >= 1");
    if (max_steps < 1) throw InvalidArgument("decode: max_steps must be >= 1");
    if (sampler.temperature < 0.0) throw InvalidArgument("decode: temperature must be >= 0");
    if (!(sampler.top_p > 0.0 && sampler.top_p <= 1.0)) {
        throw InvalidArgument("decode: top_p must be in (0, 1]");
    }
}

const UnmaskEvent& DenoiseTrajectory::event_at(int step) const {
    const auto t = static_cast<std::size_t>(step);
    if (step < 1 || t > events.size()) throw InvalidArgument("event_at: step out of range");
    return events[events.size() - t];
}

SequenceState forward_mask(const SequenceState& x0, double mask_ratio, Rng& rng) {
    if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
        throw InvalidArgument("forward_mask: mask_ratio must be in [0, 1]");
    }
    SequenceState xt = x0;
    for (std::size_t i = 0; i < xt.length(); ++i) {
        // One draw per position keeps the stream aligned across ratios.
        const double u = rng.uniform();
        if (u < mask_ratio) xt.mask(i);
    }
    return xt;
}

void apply_event(SequenceState& state, const UnmaskEvent& event, const SequenceState& final) {
    for (std::size_t pos : event.positions) state.commit(pos, final.response[pos]);
}

SequenceState reconstruct_state(const DenoiseTrajectory& traj, int step) {
    const int total = static_cast<int>(traj.events.size());
    if (step < 0 || step > total) throw InvalidArgument("reconstruct_state: step out of range");
    SequenceState state =
        SequenceState::fully_masked(traj.prompt, traj.final.length(), traj.final.mask_id);
    for (const auto& ev : traj.events) {
        if (ev.step <= step) break;
        apply_event(state, ev, traj.final);
    }
    return state;
}

std::pair<std::size_t, std::size_t> active_block(const SequenceState& state,
                                                 std::size_t block_size) {
    for (std::size_t i = 0; i < state.length(); ++i) {
        if (state.is_masked(i)) {
            const std::size_t begin = (i / block_size) * block_size;
            return {begin, std::min(begin + block_size, state.length())};
        }
    }
    throw InvalidState("active_block: no masked positions");
}

namespace {

struct Candidate {
    std::size_t pos;
    TokenId token;
    double prob;
    double entropy;
};

std::vector<Candidate> sample_block(const SequenceState& state, const PositionDistributions& dist,
                                    const DecodeConfig& cfg, Rng& rng) {
    if (dist.positions != state.length()) {
        throw InvalidArgument("unmask step: distribution count does not match response length");
    }
    const auto [begin, end] = active_block(state, cfg.block_size);
    std::vector<Candidate> out;
    for (std::size_t i = begin; i < end; ++i) {
        if (!state.is_masked(i)) continue;
        const auto row = dist.row(i);
        const SampledToken s = sample_token(row, cfg.sampler, rng);
        out.push_back({i, s.token, s.prob, distribution_entropy(row)});
    }
    return out;
}

std::pair<SequenceState, UnmaskEvent> commit(const SequenceState& state,
                                             std::vector<Candidate> chosen) {
    std::sort(chosen.begin(), chosen.end(),
              [](const Candidate& a, const Candidate& b) { return a.pos < b.pos; });
    SequenceState next = state;
    UnmaskEvent ev;
    for (const auto& c : chosen) {
        next.commit(c.pos, c.token);
        ev.positions.push_back(c.pos);
        ev.probs.push_back(c.prob);
        ev.entropies.push_back(c.entropy);
    }
    return {std::move(next), std::move(ev)};
}

// Highest probability first, lowest position on ties.
bool more_confident(const Candidate& a, const Candidate& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.pos < b.pos;
}

}  // namespace

std::pair<SequenceState, UnmaskEvent> dynamic_unmask_step(const SequenceState& state,
                                                          const PositionDistributions& dist,
                                                          const DecodeConfig& cfg, Rng& rng) {
    auto cands = sample_block(state, dist, cfg, rng);
    std::vector<Candidate> chosen;
    for (const auto& c : cands) {
        if (c.prob >= cfg.threshold) chosen.push_back(c);
    }
    if (chosen.empty()) {
        chosen.push_back(*std::min_element(cands.begin(), cands.end(), more_confident));
    }
    return commit(state, std::move(chosen));
}

std::pair<SequenceState, UnmaskEvent> static_unmask_step(const SequenceState& state,
                                                         const PositionDistributions& dist,
                                                         const DecodeConfig& cfg, Rng& rng) {
    auto cands = sample_block(state, dist, cfg, rng);
    std::sort(cands.begin(), cands.end(), more_confident);
    cands.resize(std::min(cands.size(), cfg.k_per_step));
    return commit(state, std::move(cands));
}

DenoiseTrajectory decode(const Denoiser& model, std::span<const TokenId> prompt,
                         std::size_t response_length, TokenId mask_id, const DecodeConfig& cfg,
                         std::uint64_t seed) {
    cfg.validate();
    if (response_length == 0) throw InvalidArgument("decode: response length must be positive");

    DenoiseTrajectory traj;
    traj.prompt.assign(prompt.begin(), prompt.end());
    traj.config = cfg;
    traj.seed = seed;

    Rng rng(seed);
    SequenceState state =
        SequenceState::fully_masked(traj.prompt, response_length, mask_id);

    while (!state.fully_unmasked()) {
        const PositionDistributions dist = model.predict(state);
        auto [next, ev] = cfg.strategy == UnmaskStrategy::dynamic_threshold
                              ? dynamic_unmask_step(state, dist, cfg, rng)
                              : static_unmask_step(state, dist, cfg, rng);
        const bool last_allowed = traj.events.size() + 1 == cfg.max_steps;
        if (last_allowed && !next.fully_unmasked()) {
            // Out of budget: commit every remaining position to its argmax.
            UnmaskEvent forced;
            next = state;
            for (std::size_t i = 0; i < state.length(); ++i) {
                if (!state.is_masked(i)) continue;
                const auto row = dist.row(i);
                const auto best = argmax_index(row);
                next.commit(i, static_cast<TokenId>(best));
                forced.positions.push_back(i);
                forced.probs.push_back(row[best]);
                forced.entropies.push_back(distribution_entropy(row));
            }
            ev = std::move(forced);
            traj.complete = false;
        }
        traj.events.push_back(std::move(ev));
        state = std::move(next);
    }

    const int total = static_cast<int>(traj.events.size());
    for (int j = 0; j < total; ++j) traj.events[static_cast<std::size_t>(j)].step = total - j;
    traj.final = std::move(state);
    return traj;
}

std::string_view to_string(UnmaskStrategy s) {
    switch (s) {
        case UnmaskStrategy::static_topk: return "static_topk";
        case UnmaskStrategy::dynamic_threshold: return "dynamic_threshold";
    }
    return "?";
}

UnmaskStrategy parse_strategy(std::string_view name) {
    if (name == "static_topk" || name == "static") return UnmaskStrategy::static_topk;
    if (name == "dynamic_threshold" || name == "dynamic") return UnmaskStrategy::dynamic_threshold;
    throw InvalidArgument("unknown unmask strategy: " + std::string(name));
}

}  // namespace rldf
