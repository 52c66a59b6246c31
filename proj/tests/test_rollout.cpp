#include "doctest.h"

#include <cmath>
#include <set>

#include "rldf/error.hpp"
#include "rldf/rollout.hpp"
#include "rldf/tasks.hpp"
#include "support.hpp"

using namespace rldf;
using rldf::testing::small_model;

namespace {

std::vector<TokenId> tokens(std::initializer_list<int> v) {
    std::vector<TokenId> out;
    for (int x : v) out.push_back(static_cast<TokenId>(x));
    return out;
}

constexpr int A = tok::kAnswer, E = tok::kEos, P = tok::kPad;

DecodeConfig sampling_decode() {
    DecodeConfig cfg;
    cfg.threshold = 0.5;
    cfg.sampler.temperature = 1.0;
    return cfg;
}

}  // namespace

TEST_CASE("binary reward and canonicalization") {
    const auto target = tokens({4, 6});
    CHECK(reward_binary(tokens({A, 4, 6, E, P, P}), target) == 1.0);
    CHECK(reward_binary(tokens({A, 0, 4, 6, E, P}), target) == 1.0);
    CHECK(reward_binary(tokens({A, 0, 4, 6, E, P}), target, AnswerCanon::exact) == 0.0);
    CHECK(reward_binary(tokens({A, 4, 7, E, P, P}), target) == 0.0);
    CHECK(reward_binary(tokens({3, 10, 11, 14, 15, 16}), target) == 0.0);
    CHECK(reward_binary(tokens({}), target) == 0.0);
    // The last answer marker wins.
    CHECK(reward_binary(tokens({A, 1, A, 4, 6, E}), target) == 1.0);
    CHECK(reward_binary(tokens({A, E, 4, 6, P, P}), target) == 0.0);
    CHECK(reward_binary(tokens({A, 0, 0, E}), tokens({0})) == 1.0);
}

TEST_CASE("pass-rate reward") {
    const std::vector<Check> checks{{0, 1}, {1, 2}, {2, 3}, {3, 4}};
    CHECK(reward_passrate(tokens({A, 1, 2, 3, 4, E}), checks) == 1.0);
    CHECK(reward_passrate(tokens({A, 1, 2, 3, 9, E}), checks) == 0.75);
    CHECK(reward_passrate(tokens({A, 1, E}), checks) == 0.25);
    CHECK(reward_passrate(tokens({}), checks) == 0.0);
    CHECK_THROWS_AS(reward_passrate(tokens({A, 1}), std::vector<Check>{}), InvalidArgument);
}

TEST_CASE("task instances verify their own reference") {
    Rng rng(5);
    for (auto family : {TaskFamily::addition, TaskFamily::reverse, TaskFamily::sort}) {
        const TaskSpec spec{family, default_response_length(family)};
        for (int i = 0; i < 200; ++i) {
            const TaskInstance t = make_task(spec, rng);
            CHECK(t.reference.size() == spec.response_length);
            CHECK(t.reward(t.reference) == 1.0);
            CHECK(t.prompt.back() == tok::kEquals);
            CHECK(t.prompt.size() + t.reference.size() <= 10 + spec.response_length);
        }
    }
    CHECK(default_response_length(TaskFamily::addition) == 6);
    CHECK(default_response_length(TaskFamily::reverse) == 8);
    CHECK(default_response_length(TaskFamily::sort) == 10);
}

TEST_CASE("addition prompt example") {
    TaskInstance t;
    t.family = TaskFamily::addition;
    t.answer = tokens({4, 6});
    CHECK(render_tokens(tokens({1, 2, 10, 3, 4, 11})) == "12+34=");
    CHECK(t.reward(tokens({A, 4, 6, E, P, P})) == 1.0);
}

TEST_CASE("datasets are reproducible") {
    const TaskSpec spec{TaskFamily::sort, 10};
    const Dataset a = generate_dataset(spec, 50, 7);
    const Dataset b = generate_dataset(spec, 50, 7);
    const Dataset c = generate_dataset(spec, 50, 8);
    REQUIRE(a.tasks.size() == 50);
    bool differs = false;
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(a.tasks[i].prompt == b.tasks[i].prompt);
        differs = differs || a.tasks[i].prompt != c.tasks[i].prompt;
    }
    CHECK(differs);
    CHECK(a.manifest.count == 50);
    CHECK(a.manifest.max_len == 20);
}

TEST_CASE("advantage examples") {
    const auto a = normalize_advantages(std::vector<double>{1, 0, 0, 0}, 1e-4);
    CHECK(a[0] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
    for (int i = 1; i < 4; ++i) CHECK(a[i] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-12));
    for (double x : normalize_advantages(std::vector<double>{0.3, 0.3, 0.3}, 1e-4)) CHECK(x == 0.0);
    const auto b = normalize_advantages(std::vector<double>{1, 0}, 1e-4);
    CHECK(b[0] == doctest::Approx(1.0));
    CHECK(b[1] == doctest::Approx(-1.0));
    CHECK_THROWS_AS(normalize_advantages(std::vector<double>{1}, 1e-4), InvalidArgument);
    // Below the floor the spread is not inflated to unit variance.
    const auto tiny = normalize_advantages(std::vector<double>{1e-6, 0}, 1e-4);
    CHECK(tiny[0] == doctest::Approx(0.5e-6 / 1e-4));
}

TEST_CASE("advantage moments on random groups") {
    Rng rng(9);
    for (int g = 0; g < 500; ++g) {
        std::vector<double> r(2 + rng.below(7));
        for (auto& x : r) x = rng.below(3) == 0 ? 1.0 : rng.uniform();
        if (filter_rewards(r) == GroupDecision::drop) continue;
        const auto a = normalize_advantages(r, 1e-4);
        double mean = 0.0, sq = 0.0;
        for (double x : a) mean += x;
        mean /= a.size();
        for (double x : a) sq += (x - mean) * (x - mean);
        CHECK(std::abs(mean) <= 1e-9);
        CHECK(std::abs(std::sqrt(sq / a.size()) - 1.0) <= 1e-9);
    }
}

TEST_CASE("group filter") {
    CHECK(filter_rewards(std::vector<double>{1, 1, 1, 1}) == GroupDecision::drop);
    CHECK(filter_rewards(std::vector<double>{0, 0, 0, 0}) == GroupDecision::drop);
    CHECK(filter_rewards(std::vector<double>{1, 0, 1, 0}) == GroupDecision::retain);
}

TEST_CASE("rollout groups are reproducible and seed isolated") {
    const Model model(small_model(21));
    const ParamStore params = model.init_params();
    const ModelDenoiser policy(model, params);
    Rng rng(1);
    const TaskInstance task = make_task({TaskFamily::addition, 6}, rng);
    const DecodeConfig cfg = sampling_decode();

    const RolloutGroup a = rollout_group(policy, task, 4, 6, 17, cfg, 77);
    const RolloutGroup b = rollout_group(policy, task, 4, 6, 17, cfg, 77);
    REQUIRE(a.size() == 4);
    std::set<std::vector<TokenId>> distinct;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.trajectories[i].final == b.trajectories[i].final);
        CHECK(a.trajectories[i].events.size() == b.trajectories[i].events.size());
        CHECK(a.trajectories[i].seed == Rng::derive_seed(77, "trajectory", i));
        distinct.insert(a.trajectories[i].final.response);
    }
    CHECK(distinct.size() == 4);

    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < 4; ++i) seeds.push_back(a.trajectories[i].seed);
    seeds[2] ^= 0x5555;
    const RolloutGroup c = rollout_group(policy, task, seeds, 6, 17, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
        if (i == 2) continue;
        CHECK(c.trajectories[i].final == a.trajectories[i].final);
        CHECK(c.trajectories[i].events.size() == a.trajectories[i].events.size());
        for (std::size_t e = 0; e < a.trajectories[i].events.size(); ++e) {
            CHECK(c.trajectories[i].events[e].probs == a.trajectories[i].events[e].probs);
        }
    }
    CHECK_THROWS_AS(rollout_group(policy, task, 1, 6, 17, cfg, 1), InvalidArgument);
}

TEST_CASE("argmax rollouts are identical") {
    const Model model(small_model(22));
    const ParamStore params = model.init_params();
    const ModelDenoiser policy(model, params);
    Rng rng(2);
    const TaskInstance task = make_task({TaskFamily::reverse, 8}, rng);
    DecodeConfig cfg;
    cfg.sampler.temperature = 0.0;
    const RolloutGroup g = rollout_group(policy, task, 2, 8, 17, cfg, 5);
    CHECK(g.trajectories[0].final == g.trajectories[1].final);
    CHECK(g.trajectories[0].events.size() == g.trajectories[1].events.size());
}

TEST_CASE("scoring stays in range and zeroes incomplete rollouts") {
    const Model model(small_model(23));
    const ParamStore params = model.init_params();
    const ModelDenoiser policy(model, params);
    Rng rng(3);
    const TaskInstance task = make_task({TaskFamily::sort, 10}, rng);
    DecodeConfig cfg = sampling_decode();
    RolloutGroup g = rollout_group(policy, task, 6, 10, 17, cfg, 8);
    score_group(g);
    for (double r : g.rewards) {
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
    }

    // A forced completion that happens to be correct still scores zero.
    RolloutGroup h;
    h.task = &task;
    DenoiseTrajectory t;
    t.prompt = task.prompt;
    t.final = SequenceState::clean(task.prompt, task.reference, 17);
    t.complete = false;
    h.trajectories = {t, t};
    h.trajectories[1].complete = true;
    score_group(h);
    CHECK(h.rewards == std::vector<double>{0.0, 1.0});
}
