#include "rldf/policy_loss.hpp"

#include <algorithm>
#include <cmath>

#include "rldf/error.hpp"

namespace rldf {

ClippedCleanState clip_tokens(const SequenceState& o0, const SequenceState& ot,
                              const PositionDistributions& dists, double threshold) {
    if (o0.length() != ot.length()) throw InvalidArgument("clip_tokens: length mismatch");
    if (dists.positions != ot.length()) throw InvalidArgument("clip_tokens: distribution rows");
    ClippedCleanState out;
    out.clip_threshold = threshold;
    out.length = ot.length();
    for (std::size_t i = 0; i < ot.length(); ++i) {
        if (!ot.is_masked(i)) continue;
        ++out.masked_count;
        const double p = dists.prob(i, o0.response[i]);
        if (p >= threshold) {
            out.kept_positions.push_back(i);
            out.kept_tokens.push_back(o0.response[i]);
            out.kept_probs.push_back(p);
        }
    }
    return out;
}

ClippedCleanState next_state_targets(const DenoiseTrajectory& traj, int step,
                                     const PositionDistributions& dists) {
    const UnmaskEvent& ev = traj.event_at(step);
    ClippedCleanState out;
    out.length = traj.length();
    for (const auto& e : traj.events) {
        if (e.step <= step) out.masked_count += e.positions.size();
    }
    for (std::size_t i : ev.positions) {
        out.kept_positions.push_back(i);
        out.kept_tokens.push_back(traj.final.response[i]);
        out.kept_probs.push_back(dists.prob(i, traj.final.response[i]));
    }
    return out;
}

namespace terms {

namespace {
double clamp_prob(double p, bool& clamped) {
    if (!(p >= kProbFloor)) {
        clamped = true;
        return kProbFloor;
    }
    return p;
}
}  // namespace

TokenTerm reinforce(double p_theta, double advantage) {
    TokenTerm t;
    const double p = clamp_prob(p_theta, t.clamped);
    t.value = -std::log(p) * advantage;
    t.dlogp = t.clamped ? 0.0 : -advantage;
    return t;
}

double ppo_objective(double ratio, double advantage, double epsilon) {
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

TokenTerm ppo(double p_theta, double p_old, double advantage, double epsilon) {
    TokenTerm t;
    const double p = clamp_prob(p_theta, t.clamped);
    bool old_clamped = false;
    const double q = clamp_prob(p_old, old_clamped);
    const double r = p / q;
    const double clipped = std::clamp(r, 1.0 - epsilon, 1.0 + epsilon);
    t.value = -std::min(r * advantage, clipped * advantage);
    // d(-r A)/dlog p = -r A on the unclipped branch.
    const bool unclipped = r * advantage <= clipped * advantage;
    t.dlogp = (unclipped && !t.clamped) ? -r * advantage : 0.0;
    t.clamped = t.clamped || old_clamped;
    return t;
}

double k3_value(double rho) { return rho - std::log(rho) - 1.0; }

TokenTerm k3(double p_theta, double p_ref) {
    TokenTerm t;
    bool theta_clamped = false;
    const double p = clamp_prob(p_theta, theta_clamped);
    const double q = clamp_prob(p_ref, t.clamped);
    const double rho = q / p;
    t.value = k3_value(rho);
    t.dlogp = theta_clamped ? 0.0 : 1.0 - rho;
    t.clamped = t.clamped || theta_clamped;
    return t;
}

}  // namespace terms

namespace {

enum class TermKind { reinforce, ppo, k3 };

// Mean of a per-token term over the kept tokens, with logit seeds recorded.
// `other` holds theta_old or theta_ref probabilities at the same state.
StepLossResult mean_term(const Model& model, const ParamStore& theta, const SequenceState& ot,
                         const ClippedCleanState& clean, TermKind kind, double advantage,
                         double epsilon, const PositionDistributions* other) {
    StepLossResult out;
    out.stats.tokens_used = clean.kept_positions.size();
    out.stats.token_utility = clean.utility();
    if (clean.empty()) return out;

    ForwardCache cache = model.forward(theta, ot.prompt, ot.response);
    const std::size_t V = cache.probs.vocab;
    std::vector<double> dlogits(cache.resp_len * V, 0.0);
    const double inv = 1.0 / static_cast<double>(clean.kept_positions.size());
    double total = 0.0;
    for (std::size_t j = 0; j < clean.kept_positions.size(); ++j) {
        const std::size_t i = clean.kept_positions[j];
        const TokenId tok = clean.kept_tokens[j];
        const double p = cache.probs.prob(i, tok);
        terms::TokenTerm term;
        switch (kind) {
            case TermKind::reinforce: term = terms::reinforce(p, advantage); break;
            case TermKind::ppo: term = terms::ppo(p, other->prob(i, tok), advantage, epsilon); break;
            case TermKind::k3: term = terms::k3(p, other->prob(i, tok)); break;
        }
        total += term.value;
        out.stats.flagged = out.stats.flagged || term.clamped;
        if (term.dlogp != 0.0) {
            add_logprob_grad(std::span<double>(dlogits).subspan(i * V, V), cache.probs.row(i), tok,
                             inv * term.dlogp);
        }
    }
    out.taped.value = total * inv;
    if (kind == TermKind::k3) {
        out.stats.kl_term = out.taped.value;
    } else {
        out.stats.policy_term = out.taped.value;
    }
    out.taped.tape.record(std::move(cache), std::move(dlogits));
    return out;
}

}  // namespace

StepLossResult step_loss_reinforce(const Model& model, const ParamStore& theta,
                                   const SequenceState& ot, const ClippedCleanState& clean,
                                   double advantage) {
    return mean_term(model, theta, ot, clean, TermKind::reinforce, advantage, 0.0, nullptr);
}

StepLossResult step_loss_ppo(const Model& model, const ParamStore& theta,
                             const ParamStore& theta_old, const SequenceState& ot,
                             const ClippedCleanState& clean, double advantage, double epsilon) {
    if (!(epsilon >= 0.0)) throw InvalidArgument("step_loss_ppo: epsilon must be >= 0");
    if (clean.empty()) {
        return mean_term(model, theta, ot, clean, TermKind::ppo, advantage, epsilon, nullptr);
    }
    const PositionDistributions old = model.predict(theta_old, ot);
    return mean_term(model, theta, ot, clean, TermKind::ppo, advantage, epsilon, &old);
}

StepLossResult kl_k3(const Model& model, const ParamStore& theta, const ParamStore& theta_ref,
                     const SequenceState& ot, const ClippedCleanState& clean) {
    if (clean.empty()) return mean_term(model, theta, ot, clean, TermKind::k3, 0.0, 0.0, nullptr);
    const PositionDistributions ref = model.predict(theta_ref, ot);
    return mean_term(model, theta, ot, clean, TermKind::k3, 0.0, 0.0, &ref);
}

double aggregate_sample_level(std::span<const std::vector<StepLoss>> per_response, double beta,
                              std::size_t G) {
    if (G == 0) throw InvalidArgument("aggregate_sample_level: G must be >= 1");
    double total = 0.0;
    for (const auto& steps : per_response) {
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto& s : steps) {
            if (s.tokens_used == 0) continue;
            sum += s.policy_term + beta * s.kl_term;
            ++used;
        }
        if (used > 0) total += sum / static_cast<double>(used);
    }
    return total / static_cast<double>(G);
}

double aggregate_token_level(std::span<const std::vector<StepLoss>> per_response, double beta) {
    double sum = 0.0;
    std::size_t tokens = 0;
    for (const auto& steps : per_response) {
        for (const auto& s : steps) {
            const auto n = static_cast<double>(s.tokens_used);
            sum += n * (s.policy_term + beta * s.kl_term);
            tokens += s.tokens_used;
        }
    }
    return tokens == 0 ? 0.0 : sum / static_cast<double>(tokens);
}

namespace {

StepLossResult policy_step(const Model& model, const ParamStore& theta, const SequenceState& ot,
                           const ClippedCleanState& clean, double advantage,
                           const PolicyMode& mode) {
    if (!mode.ppo) return step_loss_reinforce(model, theta, ot, clean, advantage);
    if (mode.theta_old == nullptr) throw InvalidArgument("PPO mode requires theta_old");
    return step_loss_ppo(model, theta, *mode.theta_old, ot, clean, advantage, mode.epsilon);
}

// Scores every masked position of `cond` against `response`.
TapedLoss score_masked(const Model& model, const ParamStore& theta, const SequenceState& cond,
                       std::span<const TokenId> response, double advantage,
                       const PolicyMode& mode) {
    ClippedCleanState clean;
    clean.length = cond.length();
    for (std::size_t i = 0; i < cond.length(); ++i) {
        if (!cond.is_masked(i)) continue;
        ++clean.masked_count;
        clean.kept_positions.push_back(i);
        clean.kept_tokens.push_back(response[i]);
    }
    return std::move(policy_step(model, theta, cond, clean, advantage, mode).taped);
}

}  // namespace

TapedLoss loss_full_seq(const Model& model, const ParamStore& theta,
                        std::span<const TokenId> prompt, std::span<const TokenId> response,
                        double advantage, const PolicyMode& mode) {
    const TokenId mask = model.config().mask_id;
    const SequenceState cond = SequenceState::fully_masked(
        std::vector<TokenId>(prompt.begin(), prompt.end()), response.size(), mask);
    return score_masked(model, theta, cond, response, advantage, mode);
}

TapedLoss loss_random_mask(const Model& model, const ParamStore& theta,
                           std::span<const TokenId> prompt, std::span<const TokenId> response,
                           double mask_rate, double advantage, Rng& rng,
                           const PolicyMode& mode) {
    if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) {
        throw InvalidArgument("loss_random_mask: mask_rate must be in [0, 1]");
    }
    const SequenceState x0 =
        SequenceState::clean(std::vector<TokenId>(prompt.begin(), prompt.end()),
                             std::vector<TokenId>(response.begin(), response.end()),
                             model.config().mask_id);
    const SequenceState cond = forward_mask(x0, mask_rate, rng);
    return score_masked(model, theta, cond, response, advantage, mode);
}

OracleResult loss_sequential_oracle(const Model& model, const ParamStore& theta,
                                    const DenoiseTrajectory& traj, double advantage,
                                    const OracleConfig& cfg) {
    if (cfg.beta > 0.0 && cfg.theta_ref == nullptr) {
        throw InvalidArgument("loss_sequential_oracle: beta > 0 requires theta_ref");
    }
    const ParamStore& filter = cfg.filter_params != nullptr ? *cfg.filter_params : theta;
    OracleResult out;
    std::vector<GradientTape> tapes;
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& ev : traj.events) {
        const SequenceState ot = reconstruct_state(traj, ev.step);
        const PositionDistributions fp = model.predict(filter, ot);
        const ClippedCleanState clean = cfg.target == Target::x0
                                            ? clip_tokens(traj.final, ot, fp, cfg.clip_threshold)
                                            : next_state_targets(traj, ev.step, fp);
        StepLossResult pol = policy_step(model, theta, ot, clean, advantage, cfg.mode);
        StepLoss stats = pol.stats;
        if (!clean.empty()) {
            tapes.push_back(std::move(pol.taped.tape));
            if (cfg.beta > 0.0) {
                StepLossResult kl = kl_k3(model, theta, *cfg.theta_ref, ot, clean);
                stats.kl_term = kl.stats.kl_term;
                stats.flagged = stats.flagged || kl.stats.flagged;
                tapes.back().append(std::move(kl.taped.tape), cfg.beta);
            }
            sum += stats.policy_term + cfg.beta * stats.kl_term;
            ++used;
        }
        out.steps.push_back(stats);
    }
    if (used == 0) return out;
    const double inv = 1.0 / static_cast<double>(used);
    out.taped.value = sum * inv;
    for (auto& t : tapes) out.taped.tape.append(std::move(t), inv);
    return out;
}

}  // namespace rldf
