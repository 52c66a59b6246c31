#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/model.hpp"
#include "rldf/rng.hpp"

namespace rldf::testing {

// Returns the same per-position rows for every state.
class TableDenoiser final : public Denoiser {
public:
    explicit TableDenoiser(PositionDistributions d) : d_(std::move(d)) {}
    PositionDistributions predict(const SequenceState&) const override { return d_; }

private:
    PositionDistributions d_;
};

inline PositionDistributions uniform_rows(std::size_t positions, std::size_t vocab) {
    PositionDistributions d(positions, vocab);
    std::fill(d.probs.begin(), d.probs.end(), 1.0 / static_cast<double>(vocab));
    return d;
}

// Row i puts probs[i] on token 0 and spreads the rest evenly.
inline PositionDistributions peaked_rows(const std::vector<double>& probs, std::size_t vocab) {
    PositionDistributions d(probs.size(), vocab);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        d.row(i)[0] = probs[i];
        for (std::size_t v = 1; v < vocab; ++v) {
            d.row(i)[v] = (1.0 - probs[i]) / static_cast<double>(vocab - 1);
        }
    }
    return d;
}

inline ModelConfig small_model(std::uint64_t seed = 1, double init_std = 0.3) {
    ModelConfig c;
    c.embed_dim = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.ff_dim = 24;
    c.max_len = 32;
    c.seed = seed;
    c.init_std = init_std;
    return c;
}

struct FdReport {
    std::size_t checked = 0;
    double max_rel_err = 0.0;
};

// Relative error with a small absolute floor so that near-zero gradients are
// compared on an absolute scale.
inline double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Central differences with step h on `count` random coordinates.
inline FdReport finite_difference_check(ParamStore params, const Gradients& analytic,
                                        const std::function<double(const ParamStore&)>& loss,
                                        std::size_t count, std::uint64_t seed, double h = 1e-4) {
    FdReport rep;
    Rng rng(seed);
    auto v = params.values();
    for (std::size_t c = 0; c < count; ++c) {
        const auto idx = static_cast<std::size_t>(rng.below(v.size()));
        const double orig = v[idx];
        v[idx] = orig + h;
        const double up = loss(params);
        v[idx] = orig - h;
        const double down = loss(params);
        v[idx] = orig;
        const double numeric = (up - down) / (2.0 * h);
        rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic.values()[idx], numeric));
        ++rep.checked;
    }
    return rep;
}

// A three-event trajectory on L positions built by hand.
inline DenoiseTrajectory hand_trajectory(const std::vector<std::vector<std::size_t>>& groups,
                                         const std::vector<TokenId>& final_tokens,
                                         TokenId mask_id = 17) {
    DenoiseTrajectory t;
    t.prompt = {1, 2};
    t.final = SequenceState::clean(t.prompt, final_tokens, mask_id);
    const int T = static_cast<int>(groups.size());
    for (int j = 0; j < T; ++j) {
        UnmaskEvent ev;
        ev.step = T - j;
        ev.positions = groups[static_cast<std::size_t>(j)];
        for (std::size_t k = 0; k < ev.positions.size(); ++k) {
            ev.probs.push_back(0.5);
            ev.entropies.push_back(1.0);
        }
        t.events.push_back(ev);
    }
    return t;
}

// Exact inclusion probability of each index when k indices are drawn without
// replacement by successive renormalization of w. Enumerates every ordered
// draw, so only for small sizes.
inline std::vector<double> exact_inclusion(const std::vector<double>& w, std::size_t k) {
    std::vector<double> incl(w.size(), 0.0);
    std::vector<bool> used(w.size(), false);
    std::vector<std::size_t> picked;
    std::function<void(double, double)> rec = [&](double prob, double remaining) {
        if (picked.size() == k) {
            for (std::size_t i : picked) incl[i] += prob;
            return;
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (used[i]) continue;
            used[i] = true;
            picked.push_back(i);
            rec(prob * w[i] / remaining, remaining - w[i]);
            picked.pop_back();
            used[i] = false;
        }
    };
    double total = 0.0;
    for (double x : w) total += x;
    rec(1.0, total);
    return incl;
}

// Decodes `count` responses of length L with a sampling rollout policy.
inline std::vector<DenoiseTrajectory> sampled_trajectories(const Model& model,
                                                           const ParamStore& params,
                                                           std::size_t count, std::size_t L,
                                                           std::uint64_t seed,
                                                           std::size_t max_steps = 64) {
    DecodeConfig cfg;
    cfg.strategy = UnmaskStrategy::dynamic_threshold;
    cfg.threshold = 0.5;
    cfg.max_steps = max_steps;
    cfg.sampler.mode = SampleMode::gumbel_argmax;
    cfg.sampler.temperature = 1.0;
    const ModelDenoiser den(model, params);
    Rng rng(seed);
    std::vector<DenoiseTrajectory> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<TokenId> prompt(3);
        for (auto& t : prompt) t = static_cast<TokenId>(rng.below(10));
        out.push_back(decode(den, prompt, L, model.config().mask_id, cfg, rng.next_u64()));
    }
    return out;
}

}  // namespace rldf::testing
