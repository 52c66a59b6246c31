#include "rldf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "rldf/error.hpp"
#include "rldf/mlm.hpp"

namespace rldf {

void PretrainConfig::validate() const {
    if (batch_size < 1) throw InvalidArgument("pretrain: batch_size must be >= 1");
    if (!(lr > 0.0)) throw InvalidArgument("pretrain: lr must be > 0");
    if (!(max_grad_norm > 0.0)) throw InvalidArgument("pretrain: max_grad_norm must be > 0");
    if (task.response_length < 1) throw InvalidArgument("pretrain: response_length must be >= 1");
}

namespace {

SequenceState clean_state(const TaskInstance& t) {
    return SequenceState::clean(t.prompt, t.reference, tok::kMask);
}

}  // namespace

double heldout_mlm_loss(const Model& model, const ParamStore& params, const TaskSpec& task,
                        std::size_t count, std::uint64_t seed) {
    if (count == 0) return 0.0;
    const Dataset ds = generate_dataset(task, count, Rng::derive_seed(seed, "heldout"));
    Rng rng = Rng::derive(seed, "heldout_mask");
    double total = 0.0;
    std::size_t used = 0;
    for (const auto& t : ds.tasks) {
        const SequenceState x0 = clean_state(t);
        const double ratio = std::max(rng.uniform_open(), 0.05);
        SequenceState xt = forward_mask(x0, ratio, rng);
        if (xt.masked_count() == 0) xt.mask(rng.below(xt.length()));
        total += mlm_loss_fixed(model, params, x0, xt, ratio);
        ++used;
    }
    return total / static_cast<double>(used);
}

PretrainReport pretrain(const Model& model, ParamStore& params, const PretrainConfig& cfg) {
    cfg.validate();
    PretrainReport report;
    report.initial_heldout = heldout_mlm_loss(model, params, cfg.task, cfg.heldout, cfg.seed);
    Adam opt(AdamConfig{cfg.lr});
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Rng rng = Rng::derive(cfg.seed, "pretrain", step);
        std::vector<SequenceState> batch;
        std::vector<double> ratios;
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            batch.push_back(clean_state(make_task(cfg.task, rng)));
            ratios.push_back(rng.uniform_open());
        }
        const MlmLoss loss = mlm_batch_loss(model, params, batch, ratios, rng);
        report.skipped += loss.skipped_samples;
        report.losses.push_back(loss.value);
        Gradients g = loss.tape.gradient(model, params);
        clip_grad_norm(g, cfg.max_grad_norm);
        opt.step(params, g);
    }
    report.final_heldout = heldout_mlm_loss(model, params, cfg.task, cfg.heldout, cfg.seed);
    return report;
}

DecodeConfig TrainConfig::default_rollout_decode() {
    DecodeConfig d;
    d.strategy = UnmaskStrategy::dynamic_threshold;
    d.threshold = 0.9;
    d.block_size = 32;
    d.max_steps = 64;
    d.sampler.mode = SampleMode::gumbel_argmax;
    d.sampler.temperature = 1.0;
    return d;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    if (G < 2) throw InvalidArgument("train: G must be >= 2");
    if (N < 1) throw InvalidArgument("train: N must be >= 1");
    if (!(std_floor > 0.0)) throw InvalidArgument("train: std_floor must be > 0");
    if (!(lr > 0.0)) throw InvalidArgument("train: lr must be > 0");
    if (!(max_grad_norm > 0.0)) throw InvalidArgument("train: max_grad_norm must be > 0");
    loss.validate();
    decode.validate();
}

TrainState init_train_state(const ParamStore& pretrained, const TrainConfig& cfg) {
    TrainState s;
    s.theta = pretrained;
    s.theta_old = pretrained;
    s.theta_ref = pretrained;
    s.optimizer = Adam(AdamConfig{cfg.lr});
    return s;
}

nlohmann::json StepMetrics::to_json() const {
    return {{"step", step},
            {"mean_reward", mean_reward},
            {"loss", loss},
            {"policy_loss", policy_loss},
            {"kl", kl},
            {"grad_norm", grad_norm},
            {"token_utility", token_utility},
            {"groups_retained", groups_retained},
            {"steps_sampled", steps_sampled},
            {"updates", updates},
            {"flags", flags}};
}

std::vector<TaskInstance> sample_batch(const TrainConfig& cfg, std::size_t step) {
    Rng rng = Rng::derive(cfg.seed, "batch", step);
    std::vector<TaskInstance> batch;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(make_task(cfg.task, rng));
    return batch;
}

namespace {

void add_flag(StepMetrics& m, const std::string& f) {
    if (std::find(m.flags.begin(), m.flags.end(), f) == m.flags.end()) m.flags.push_back(f);
}

}  // namespace

StepMetrics train_step(const Model& model, TrainState& state, std::span<const TaskInstance> batch,
                       const TrainConfig& cfg, std::vector<RolloutGroup>* groups_out) {
    cfg.validate();
    StepMetrics m;
    m.step = state.step;
    const std::uint64_t step_seed = Rng::derive_seed(cfg.seed, "step", state.step);

    state.theta_old = state.theta;
    const ModelDenoiser behavior(model, state.theta_old);

    std::vector<RolloutGroup> groups;
    groups.reserve(batch.size());
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        groups.push_back(rollout_group(behavior, batch[i], cfg.G, cfg.task.response_length,
                                       model.config().mask_id, cfg.decode,
                                       Rng::derive_seed(step_seed, "group", i)));
        auto& g = groups.back();
        score_group(g);
        for (std::size_t b = 0; b < g.size(); ++b) {
            reward_sum += g.rewards[b];
            ++reward_count;
            if (!g.trajectories[b].complete) add_flag(m, "incomplete_rollout");
        }
    }
    m.mean_reward = reward_count == 0 ? 0.0 : reward_sum / static_cast<double>(reward_count);

    std::vector<ResponseRef> responses;
    for (auto& g : groups) {
        g.advantages.assign(g.size(), 0.0);
        if (filter_group(g) == GroupDecision::drop) continue;
        ++m.groups_retained;
        g.advantages = normalize_advantages(g.rewards, cfg.std_floor);
        for (std::size_t b = 0; b < g.size(); ++b) {
            responses.push_back({&g.trajectories[b], g.advantages[b]});
        }
    }

    if (responses.empty()) {
        add_flag(m, "all_filtered");
    } else {
        const PreparedLoss prepared =
            prepare_loss(model, state.theta_old, cfg.loss.beta > 0.0 ? &state.theta_ref : nullptr,
                         responses, cfg.loss, Rng::derive_seed(step_seed, "loss"));
        m.steps_sampled = prepared.steps_sampled;
        m.token_utility = prepared.token_utility;
        if (prepared.clamped) add_flag(m, "prob_clamped");

        double norm_sum = 0.0;
        const bool ppo = cfg.N > 1;
        for (std::size_t n = 0; n < cfg.N; ++n) {
            LossEval ev = evaluate_loss(model, state.theta, prepared, ppo, true);
            if (n == 0) {
                m.loss = ev.loss;
                m.policy_loss = ev.policy;
                m.kl = ev.kl;
            }
            if (ev.flagged) add_flag(m, "prob_clamped");
            if (!std::isfinite(ev.loss)) {
                add_flag(m, "nonfinite_loss");
                continue;
            }
            const double norm = clip_grad_norm(ev.grads, cfg.max_grad_norm);
            norm_sum += norm;
            if (!state.optimizer.step(state.theta, ev.grads)) {
                add_flag(m, "nonfinite_grad");
                continue;
            }
            ++m.updates;
        }
        m.grad_norm = norm_sum / static_cast<double>(cfg.N);
    }

    ++state.step;
    if (groups_out != nullptr) *groups_out = std::move(groups);
    return m;
}

void train(const Model& model, TrainState& state, const TrainConfig& cfg,
           const StepCallback& on_step) {
    while (state.step < cfg.total_steps) {
        const std::vector<TaskInstance> batch = sample_batch(cfg, state.step);
        std::vector<RolloutGroup> groups;
        const StepMetrics m = train_step(model, state, batch, cfg, &groups);
        if (on_step) on_step(m, state, groups);
    }
}

EvalRow evaluate_tasks(const Model& model, const ParamStore& params,
                       std::span<const TaskInstance> tasks, std::size_t response_length,
                       const DecodeConfig& decode_cfg) {
    decode_cfg.validate();
    EvalRow row;
    row.strategy = decode_cfg.strategy;
    row.max_steps = decode_cfg.max_steps;
    row.count = tasks.size();
    if (tasks.empty()) return row;
    const ModelDenoiser policy(model, params);
    std::vector<double> rewards(tasks.size(), 0.0);
    std::vector<std::uint8_t> incomplete(tasks.size(), 0);
    const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& task = tasks[static_cast<std::size_t>(i)];
        try {
            const DenoiseTrajectory t = decode(policy, task.prompt, response_length,
                                               model.config().mask_id, decode_cfg, 0);
            incomplete[i] = t.complete ? 0 : 1;
            // Forced completions are scored as decoded; the count is reported.
            rewards[i] = task.reward(t.final.response);
        } catch (const std::exception&) {
            incomplete[i] = 1;
        }
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        sum += rewards[i];
        row.incomplete += incomplete[i];
    }
    row.mean_reward = sum / static_cast<double>(tasks.size());
    return row;
}

std::vector<EvalRow> evaluate(const Model& model, const ParamStore& params, const EvalConfig& cfg) {
    const std::size_t L = cfg.task.response_length;
    const Dataset ds = generate_dataset(cfg.task, cfg.count, Rng::derive_seed(cfg.seed, "eval"));
    std::vector<EvalRow> rows;
    for (UnmaskStrategy s : {UnmaskStrategy::dynamic_threshold, UnmaskStrategy::static_topk}) {
        for (std::size_t steps : {std::max<std::size_t>(1, L / 2), L, 2 * L}) {
            DecodeConfig d = cfg.decode;
            d.strategy = s;
            d.max_steps = steps;
            rows.push_back(evaluate_tasks(model, params, ds.tasks, L, d));
        }
    }
    return rows;
}

}  // namespace rldf
