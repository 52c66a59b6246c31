#include "rldf/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rldf/error.hpp"
#include "rldf/kernels.hpp"
#include "rldf/step_weights.hpp"

namespace rldf {

std::string_view to_string(Estimator e) {
    switch (e) {
        case Estimator::rldf: return "rldf";
        case Estimator::full_seq: return "full_seq";
        case Estimator::random_mask: return "random_mask";
        case Estimator::sequential_oracle: return "sequential_oracle";
    }
    return "?";
}

Estimator parse_estimator(std::string_view name) {
    if (name == "rldf") return Estimator::rldf;
    if (name == "full_seq") return Estimator::full_seq;
    if (name == "random_mask") return Estimator::random_mask;
    if (name == "sequential_oracle") return Estimator::sequential_oracle;
    throw InvalidArgument("unknown estimator '" + std::string(name) + "'");
}

std::string_view to_string(Normalization n) {
    return n == Normalization::sample ? "sample" : "token";
}

Normalization parse_normalization(std::string_view name) {
    if (name == "sample") return Normalization::sample;
    if (name == "token") return Normalization::token;
    throw InvalidArgument("unknown normalization '" + std::string(name) + "'");
}

std::string_view to_string(Target t) { return t == Target::x0 ? "x0" : "x_prev"; }

Target parse_target(std::string_view name) {
    if (name == "x0") return Target::x0;
    if (name == "x_prev") return Target::x_prev;
    throw InvalidArgument("unknown target '" + std::string(name) + "'");
}

void LossConfig::validate() const {
    if (k < 1) throw InvalidArgument("loss: k must be >= 1");
    if (!(tau_sample > 0.0)) throw InvalidArgument("loss: tau_sample must be > 0");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidArgument("loss: epsilon must be in [0, 1)");
    if (!(clip_threshold >= 0.0 && clip_threshold <= 1.0)) {
        throw InvalidArgument("loss: clip_threshold must be in [0, 1]");
    }
    if (!(beta >= 0.0)) throw InvalidArgument("loss: beta must be >= 0");
    if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) {
        throw InvalidArgument("loss: mask_rate must be in [0, 1]");
    }
}

namespace {

struct ResponseUnits {
    std::vector<LossUnit> units;
    std::size_t steps = 0;
    double utility_sum = 0.0;
    bool clamped = false;
};

void fill_probs(LossUnit& u, const PositionDistributions& old_dist,
                const PositionDistributions* ref_dist) {
    u.old_probs.clear();
    u.ref_probs.clear();
    for (std::size_t j = 0; j < u.positions.size(); ++j) {
        u.old_probs.push_back(old_dist.prob(u.positions[j], u.tokens[j]));
        if (ref_dist != nullptr) u.ref_probs.push_back(ref_dist->prob(u.positions[j], u.tokens[j]));
    }
}

// All masked positions of cond, scored against the clean response.
LossUnit masked_unit(const SequenceState& cond, const SequenceState& clean) {
    LossUnit u;
    u.cond = cond;
    u.length = cond.length();
    for (std::size_t i = 0; i < cond.length(); ++i) {
        if (!cond.is_masked(i)) continue;
        u.positions.push_back(i);
        u.tokens.push_back(clean.response[i]);
    }
    u.masked_count = u.positions.size();
    return u;
}

ResponseUnits prepare_response(const Model& model, const ParamStore& theta_old,
                               const ParamStore* theta_ref, const DenoiseTrajectory& traj,
                               const LossConfig& cfg, std::uint64_t seed, std::size_t b) {
    ResponseUnits out;
    Rng rng = Rng::derive(seed, "steps", b);
    const bool with_ref = cfg.beta > 0.0;
    const auto add = [&](LossUnit u) {
        ++out.steps;
        out.utility_sum += u.length == 0 ? 0.0
                                         : static_cast<double>(u.positions.size()) /
                                               static_cast<double>(u.length);
        if (u.positions.empty()) return;
        const PositionDistributions old_dist = model.predict(theta_old, u.cond);
        if (with_ref) {
            const PositionDistributions ref_dist = model.predict(*theta_ref, u.cond);
            fill_probs(u, old_dist, &ref_dist);
        } else {
            fill_probs(u, old_dist, nullptr);
        }
        u.response = b;
        out.units.push_back(std::move(u));
    };

    switch (cfg.estimator) {
        case Estimator::full_seq: {
            const SequenceState cond =
                SequenceState::fully_masked(traj.prompt, traj.length(), traj.final.mask_id);
            add(masked_unit(cond, traj.final));
            return out;
        }
        case Estimator::random_mask: {
            const SequenceState cond = forward_mask(traj.final, cfg.mask_rate, rng);
            add(masked_unit(cond, traj.final));
            return out;
        }
        case Estimator::rldf:
        case Estimator::sequential_oracle:
            break;
    }

    std::vector<std::size_t> chosen;
    if (cfg.estimator == Estimator::sequential_oracle) {
        chosen.resize(traj.num_steps());
        for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
    } else {
        const StepWeightTable table = step_weight_table(traj, cfg.tau_sample);
        out.clamped = table.clamped;
        chosen = sample_timesteps(table.uncertainty, cfg.k, cfg.tau_sample, rng);
    }

    for (std::size_t idx : chosen) {
        const int step = traj.events[idx].step;
        LossUnit u;
        u.step = step;
        u.cond = reconstruct_state(traj, step);
        u.length = traj.length();
        const PositionDistributions old_dist = model.predict(theta_old, u.cond);
        const ClippedCleanState clean =
            cfg.target == Target::x0 ? clip_tokens(traj.final, u.cond, old_dist, cfg.clip_threshold)
                                     : next_state_targets(traj, step, old_dist);
        u.positions = clean.kept_positions;
        u.tokens = clean.kept_tokens;
        u.masked_count = clean.masked_count;
        ++out.steps;
        out.utility_sum += clean.utility();
        if (u.positions.empty()) continue;
        if (with_ref) {
            const PositionDistributions ref_dist = model.predict(*theta_ref, u.cond);
            fill_probs(u, old_dist, &ref_dist);
        } else {
            fill_probs(u, old_dist, nullptr);
        }
        u.response = b;
        out.units.push_back(std::move(u));
    }
    return out;
}

}  // namespace

PreparedLoss prepare_loss(const Model& model, const ParamStore& theta_old,
                          const ParamStore* theta_ref, std::span<const ResponseRef> responses,
                          const LossConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.beta > 0.0 && theta_ref == nullptr) {
        throw InvalidArgument("prepare_loss: beta > 0 requires a reference policy");
    }
    const std::size_t B = responses.size();
    std::vector<ResponseUnits> per(B);
    std::vector<std::string> errors(B);

#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t b = 0; b < B; ++b) {
        try {
            if (responses[b].traj == nullptr) throw InvalidArgument("prepare_loss: null trajectory");
            per[b] = prepare_response(model, theta_old, theta_ref, *responses[b].traj, cfg, seed, b);
        } catch (const std::exception& e) {
            errors[b] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw InvalidArgument(e);
    }

    PreparedLoss out;
    out.config = cfg;
    out.responses = B;
    double utility_sum = 0.0;
    std::size_t total_tokens = 0;
    for (std::size_t b = 0; b < B; ++b) {
        out.steps_sampled += per[b].steps;
        utility_sum += per[b].utility_sum;
        out.clamped = out.clamped || per[b].clamped;
        const std::size_t n = per[b].units.size();
        for (auto& u : per[b].units) {
            u.advantage = responses[b].advantage;
            u.weight = 1.0 / static_cast<double>(B * n);
            total_tokens += u.positions.size();
            out.units.push_back(std::move(u));
        }
    }
    if (cfg.normalization == Normalization::token && total_tokens > 0) {
        for (auto& u : out.units) {
            u.weight = static_cast<double>(u.positions.size()) / static_cast<double>(total_tokens);
        }
    }
    out.token_utility =
        out.steps_sampled == 0 ? 0.0 : utility_sum / static_cast<double>(out.steps_sampled);
    return out;
}

namespace {

constexpr std::size_t kChunk = 8;

struct UnitResult {
    StepLoss stats;
    double weighted_policy = 0.0;
    double weighted_kl = 0.0;
};

UnitResult eval_unit(const Model& model, const ParamStore& theta, const LossUnit& u,
                     const LossConfig& cfg, bool ppo, Gradients* grads) {
    UnitResult r;
    r.stats.tokens_used = u.positions.size();
    r.stats.token_utility =
        u.length == 0 ? 0.0 : static_cast<double>(u.positions.size()) / static_cast<double>(u.length);
    const ForwardCache cache = model.forward(theta, u.cond.prompt, u.cond.response);
    const std::size_t V = cache.probs.vocab;
    const bool with_kl = !u.ref_probs.empty();
    const double inv = 1.0 / static_cast<double>(u.positions.size());
    std::vector<double> dlogits;
    if (grads != nullptr) dlogits.assign(cache.resp_len * V, 0.0);

    double pol = 0.0, kl = 0.0;
    for (std::size_t j = 0; j < u.positions.size(); ++j) {
        const std::size_t i = u.positions[j];
        const double p = cache.probs.prob(i, u.tokens[j]);
        const terms::TokenTerm pt = ppo ? terms::ppo(p, u.old_probs[j], u.advantage, cfg.epsilon)
                                        : terms::reinforce(p, u.advantage);
        double dlogp = pt.dlogp;
        pol += pt.value;
        r.stats.flagged = r.stats.flagged || pt.clamped;
        if (with_kl) {
            const terms::TokenTerm kt = terms::k3(p, u.ref_probs[j]);
            kl += kt.value;
            dlogp += cfg.beta * kt.dlogp;
            r.stats.flagged = r.stats.flagged || kt.clamped;
        }
        if (grads != nullptr && dlogp != 0.0) {
            add_logprob_grad(std::span<double>(dlogits).subspan(i * V, V), cache.probs.row(i),
                             u.tokens[j], u.weight * inv * dlogp);
        }
    }
    r.stats.policy_term = pol * inv;
    r.stats.kl_term = kl * inv;
    r.weighted_policy = u.weight * r.stats.policy_term;
    r.weighted_kl = u.weight * r.stats.kl_term;
    if (grads != nullptr) model.backward(theta, cache, dlogits, *grads);
    return r;
}

}  // namespace

LossEval evaluate_loss(const Model& model, const ParamStore& theta, const PreparedLoss& prepared,
                       bool ppo, bool want_grad) {
    const auto& units = prepared.units;
    const std::size_t n_units = units.size();
    const std::size_t n_chunks = (n_units + kChunk - 1) / kChunk;
    std::vector<UnitResult> results(n_units);

    LossEval out;
    if (want_grad) out.grads = theta.zeros_like();

    // Chunks run in waves so at most `wave` gradient buffers are alive.
    const std::size_t wave = std::max<std::size_t>(1, 2 * static_cast<std::size_t>(kernels::max_threads()));
    for (std::size_t first = 0; first < n_chunks; first += wave) {
        const std::size_t last = std::min(n_chunks, first + wave);
        std::vector<Gradients> buffers(want_grad ? last - first : 0);
        std::vector<std::string> errors(last - first);

#pragma omp parallel for schedule(dynamic, 1)
        for (std::size_t c = first; c < last; ++c) {
            try {
                Gradients* g = nullptr;
                if (want_grad) {
                    buffers[c - first] = theta.zeros_like();
                    g = &buffers[c - first];
                }
                const std::size_t end = std::min(n_units, (c + 1) * kChunk);
                for (std::size_t u = c * kChunk; u < end; ++u) {
                    results[u] = eval_unit(model, theta, units[u], prepared.config, ppo, g);
                }
            } catch (const std::exception& e) {
                errors[c - first] = e.what();
            }
        }
        for (const auto& e : errors) {
            if (!e.empty()) throw NumericError(e);
        }
        for (auto& g : buffers) out.grads.add_scaled(g, 1.0);
    }

    for (const auto& r : results) {
        out.policy += r.weighted_policy;
        out.kl += r.weighted_kl;
        out.flagged = out.flagged || r.stats.flagged;
        out.unit_stats.push_back(r.stats);
    }
    out.loss = out.policy + prepared.config.beta * out.kl;
    return out;
}

}  // namespace rldf
