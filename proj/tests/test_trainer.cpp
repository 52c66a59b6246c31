#include "doctest.h"

#include <cmath>
#include <limits>

#include "rldf/estimator.hpp"
#include "rldf/mlm.hpp"
#include "rldf/optim.hpp"
#include "rldf/rollout.hpp"
#include "rldf/trainer.hpp"
#include "support.hpp"

using namespace rldf;
using rldf::testing::small_model;

namespace {

TrainConfig sort_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.task = {TaskFamily::sort, 10};
    cfg.batch_size = 2;
    cfg.G = 4;
    cfg.lr = 1e-3;
    cfg.seed = seed;
    cfg.loss.k = 4;
    return cfg;
}

// Small model with a short sort pretraining, so rollouts follow the answer
// format and groups have reward spread.
const ParamStore& sort_pretrained() {
    static const ParamStore params = [] {
        const Model model(small_model(6));
        ParamStore p = model.init_params();
        PretrainConfig cfg;
        cfg.task = {TaskFamily::sort, 10};
        cfg.steps = 300;
        cfg.lr = 3e-3;
        cfg.heldout = 0;
        pretrain(model, p, cfg);
        return p;
    }();
    return params;
}

bool has_flag(const StepMetrics& m, const std::string& f) {
    return std::find(m.flags.begin(), m.flags.end(), f) != m.flags.end();
}

}  // namespace

TEST_CASE("pretraining with zero steps leaves the initialization") {
    const Model model(small_model(1));
    ParamStore p = model.init_params();
    const ParamStore init = p;
    PretrainConfig cfg;
    cfg.steps = 0;
    cfg.heldout = 4;
    const auto rep = pretrain(model, p, cfg);
    CHECK(p == init);
    CHECK(rep.losses.empty());
    CHECK(rep.initial_heldout == rep.final_heldout);
}

TEST_CASE("pretraining lowers the held-out loss") {
    const Model model(ModelConfig{});
    ParamStore p = model.init_params();
    PretrainConfig cfg;
    cfg.steps = 500;
    cfg.batch_size = 8;
    cfg.heldout = 64;
    cfg.seed = 3;
    const auto rep = pretrain(model, p, cfg);
    CHECK(rep.losses.size() == 500);
    CHECK(rep.final_heldout <= 0.7 * rep.initial_heldout);
}

TEST_CASE("mask ratios average one half") {
    double sum = 0.0;
    const int n = 10000;
    for (int s = 0; s < n; ++s) sum += Rng::derive(11, "pretrain", s).uniform_open();
    CHECK(std::abs(sum / n - 0.5) <= 0.02);
}

TEST_CASE("untrained model is near chance on addition and both strategies are reported") {
    const Model model(ModelConfig{});
    const ParamStore p = model.init_params();
    EvalConfig cfg;
    cfg.count = 64;
    const auto rows = evaluate(model, p, cfg);
    REQUIRE(rows.size() == 6);
    std::size_t dynamic = 0, fixed = 0;
    for (const auto& r : rows) {
        CHECK(r.count == 64);
        CHECK(r.mean_reward <= 0.1);
        (r.strategy == UnmaskStrategy::dynamic_threshold ? dynamic : fixed) += 1;
    }
    CHECK(dynamic == 3);
    CHECK(fixed == 3);
    CHECK(rows[0].max_steps == 3);
    CHECK(rows[1].max_steps == 6);
    CHECK(rows[2].max_steps == 12);
}

TEST_CASE("a memorized task decodes perfectly") {
    const Model model(small_model(2, 0.1));
    ParamStore p = model.init_params();
    Rng rng(4);
    const TaskInstance task = make_task({TaskFamily::addition, 6}, rng);
    const auto x0 = SequenceState::clean(task.prompt, task.reference, 17);
    Adam opt(AdamConfig{1e-2});
    for (int s = 0; s < 400; ++s) {
        Rng r = Rng::derive(5, "memorize", s);
        const MlmLoss l = mlm_loss(model, p, x0, std::max(0.2, r.uniform_open()), r);
        opt.step(p, l.tape.gradient(model, p));
    }
    const std::vector<TaskInstance> tasks{task};
    for (auto strategy : {UnmaskStrategy::dynamic_threshold, UnmaskStrategy::static_topk}) {
        DecodeConfig d;
        d.strategy = strategy;
        d.max_steps = 6;
        const EvalRow row = evaluate_tasks(model, p, tasks, 6, d);
        CHECK(row.mean_reward == 1.0);
        CHECK(row.incomplete == 0);
    }
}

TEST_CASE("all-filtered steps still emit metrics") {
    const Model model(ModelConfig{});
    const ParamStore p = model.init_params();
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.seed = 1;
    TrainState st = init_train_state(p, cfg);
    const auto batch = sample_batch(cfg, 0);
    const StepMetrics m = train_step(model, st, batch, cfg);
    CHECK(m.groups_retained == 0);
    CHECK(has_flag(m, "all_filtered"));
    CHECK(m.updates == 0);
    CHECK(st.theta == p);
    CHECK(st.step == 1);
    CHECK(m.to_json().at("flags").size() >= 1);
}

TEST_CASE("single-iteration update is Adam on the REINFORCE gradient") {
    const Model model(small_model(6));
    const ParamStore& p = sort_pretrained();
    TrainConfig cfg = sort_config(7);
    cfg.max_grad_norm = std::numeric_limits<double>::infinity();
    TrainState st = init_train_state(p, cfg);
    const auto batch = sample_batch(cfg, 0);
    std::vector<RolloutGroup> groups;
    const StepMetrics m = train_step(model, st, batch, cfg, &groups);
    REQUIRE(m.groups_retained > 0);
    CHECK(m.updates == 1);
    CHECK(st.theta_old == p);
    CHECK(st.theta_ref == p);

    // Rebuild the step's loss from the recorded groups.
    std::vector<ResponseRef> refs;
    for (const auto& g : groups) {
        if (filter_group(g) == GroupDecision::drop) continue;
        for (std::size_t b = 0; b < g.size(); ++b) refs.push_back({&g.trajectories[b], g.advantages[b]});
    }
    const std::uint64_t step_seed = Rng::derive_seed(cfg.seed, "step", 0);
    const PreparedLoss prep =
        prepare_loss(model, p, &p, refs, cfg.loss, Rng::derive_seed(step_seed, "loss"));
    const LossEval rf = evaluate_loss(model, p, prep, false, true);
    const LossEval pp = evaluate_loss(model, p, prep, true, true);
    CHECK(rf.loss == m.loss);
    // Ratios are one at theta_old, so PPO and REINFORCE share the gradient.
    for (std::size_t i = 0; i < rf.grads.size(); ++i) {
        CHECK(std::abs(rf.grads.values()[i] - pp.grads.values()[i]) <= 1e-12);
    }

    ParamStore expect = p;
    Adam opt(AdamConfig{cfg.lr});
    REQUIRE(opt.step(expect, rf.grads));
    CHECK(expect == st.theta);
}

TEST_CASE("beta zero removes the KL term") {
    const Model model(small_model(6));
    const ParamStore& p = sort_pretrained();
    TrainConfig cfg = sort_config(9);
    cfg.loss.beta = 0.0;
    TrainState st = init_train_state(p, cfg);
    st.theta_ref = Model(small_model(99)).init_params();
    const StepMetrics m = train_step(model, st, sample_batch(cfg, 0), cfg);
    REQUIRE(m.groups_retained > 0);
    CHECK(m.loss == m.policy_loss);
}

TEST_CASE("inner iterations keep the snapshots fixed") {
    const Model model(small_model(6));
    const ParamStore& p = sort_pretrained();
    TrainConfig cfg = sort_config(11);
    cfg.N = 3;
    TrainState st = init_train_state(p, cfg);
    const StepMetrics m = train_step(model, st, sample_batch(cfg, 0), cfg);
    REQUIRE(m.groups_retained > 0);
    CHECK(m.updates == 3);
    CHECK(st.theta_old == p);
    CHECK(st.theta_ref == p);
    CHECK_FALSE(st.theta == p);
    CHECK(st.optimizer.steps() == 3);

    // The second step snapshots the updated parameters.
    const ParamStore after_first = st.theta;
    train_step(model, st, sample_batch(cfg, 1), cfg);
    CHECK(st.theta_old == after_first);
    CHECK(st.theta_ref == p);
}

TEST_CASE("training is deterministic") {
    const Model model(small_model(6));
    const ParamStore& p = sort_pretrained();
    TrainConfig cfg = sort_config(13);
    cfg.total_steps = 10;
    const auto run = [&] {
        TrainState st = init_train_state(p, cfg);
        std::string trace;
        train(model, st, cfg, [&](const StepMetrics& m, const TrainState&, const auto&) {
            trace += m.to_json().dump() + "\n";
        });
        return std::make_pair(trace, st.theta);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(std::count(a.first.begin(), a.first.end(), '\n') == 10);

    TrainConfig other = cfg;
    other.seed = 14;
    TrainState st = init_train_state(p, other);
    const StepMetrics m = train_step(model, st, sample_batch(other, 0), other);
    CHECK(m.to_json().dump() + "\n" != a.first.substr(0, a.first.find('\n') + 1));
}
