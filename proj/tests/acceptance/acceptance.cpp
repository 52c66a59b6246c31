// Acceptance harness: runs criteria 1-10 and prints one PASS/FAIL line each.
//
//   acceptance [--only N]...
//
// Exit status is 0 only when every selected criterion passes. Progress goes
// to stderr; the result lines go to stdout.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rldf/analysis.hpp"
#include "rldf/checkpoint.hpp"
#include "rldf/config.hpp"
#include "rldf/estimator.hpp"
#include "rldf/mlm.hpp"
#include "rldf/rollout.hpp"
#include "rldf/trainer.hpp"
#include "support.hpp"

using namespace rldf;
using rldf::testing::finite_difference_check;

namespace {

struct Result {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void progress(const std::string& msg) { std::cerr << "  " << msg << std::endl; }

double grad_norm(Gradients g) { return clip_grad_norm(g, std::numeric_limits<double>::infinity()); }

ParamStore perturbed(const ParamStore& p, double scale, std::uint64_t seed) {
    ParamStore q = p;
    Rng rng(seed);
    for (auto& v : q.values()) v += scale * rng.normal();
    return q;
}

// ---------------------------------------------------------------------------
// Shared runs. The addition checkpoint, its three RL continuations and the
// sort checkpoint are built on first use.

constexpr std::size_t kPretrainSteps = 2500;
// Sort is learned quickly; a short pretraining leaves the RL runs room to move.
constexpr std::size_t kSortPretrainSteps = 300;
constexpr double kRlLr = 1e-4;
constexpr std::uint64_t kRlSeeds[] = {1, 2, 3};

std::string base_ini(const std::string& family, std::uint64_t seed) {
    const std::size_t steps = family == "sort" ? kSortPretrainSteps : kPretrainSteps;
    std::ostringstream s;
    s << "[run]\nseed = " << seed << "\n[task]\nfamily = " << family << "\n"
      << "[pretrain]\nsteps = " << steps << "\nlr = 0.001\n"
      << "[train]\nlr = " << kRlLr << "\n";
    return s.str();
}

struct RlRun {
    ParamStore final;
    std::vector<StepMetrics> metrics;
};

class Shared {
public:
    const Model model{parse_config("").resolved_model()};

    const ParamStore& addition_pretrained() {
        if (!addition_pre_) addition_pre_ = pretrained("addition");
        return *addition_pre_;
    }

    double eval_reward(const ParamStore& p) {
        const RunConfig rc = parse_config(base_ini("addition", 0));
        const EvalConfig ec = rc.resolved_eval();
        const Dataset ds = generate_dataset(ec.task, ec.count, Rng::derive_seed(ec.seed, "eval"));
        DecodeConfig d = ec.decode;
        d.strategy = UnmaskStrategy::dynamic_threshold;
        d.max_steps = ec.task.response_length;
        return evaluate_tasks(model, p, ds.tasks, ec.task.response_length, d).mean_reward;
    }

    const RlRun& addition_rl(std::uint64_t seed) {
        auto it = rl_.find(seed);
        if (it == rl_.end()) {
            const RunConfig rc = parse_config(base_ini("addition", seed));
            it = rl_.emplace(seed, run_rl(addition_pretrained(), rc.resolved_train())).first;
        }
        return it->second;
    }

    const ParamStore& sort_pretrained() {
        if (!sort_pre_) sort_pre_ = pretrained("sort");
        return *sort_pre_;
    }

    RlRun run_rl(const ParamStore& start, const TrainConfig& tc) {
        RlRun out;
        TrainState st = init_train_state(start, tc);
        const auto t0 = std::chrono::steady_clock::now();
        train(model, st, tc, [&](const StepMetrics& m, const TrainState&, const auto&) {
            out.metrics.push_back(m);
            if ((m.step + 1) % 50 == 0) {
                const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                progress("rl step " + std::to_string(m.step + 1) + " reward " +
                         fmt("%.3f", m.mean_reward) + " (" + fmt("%.0f", s) + " s)");
            }
        });
        out.final = st.theta;
        return out;
    }

private:
    ParamStore pretrained(const std::string& family) {
        const RunConfig rc = parse_config(base_ini(family, 0));
        progress("pretraining " + family + " (" + std::to_string(rc.pretrain.steps) + " steps)");
        ParamStore p = model.init_params();
        const PretrainReport rep = pretrain(model, p, rc.resolved_pretrain());
        progress("held-out mlm " + fmt("%.3f", rep.initial_heldout) + " -> " +
                 fmt("%.3f", rep.final_heldout));
        return p;
    }

    std::optional<ParamStore> addition_pre_, sort_pre_;
    std::map<std::uint64_t, RlRun> rl_;
};

// Rollout batches from `params` scored like a training step.
struct ScoredBatch {
    std::vector<RolloutGroup> groups;
    std::vector<ResponseRef> refs;
};

ScoredBatch rollout_batch(const Model& model, const ParamStore& params, const TrainConfig& tc,
                          std::size_t index) {
    ScoredBatch out;
    const ModelDenoiser policy(model, params);
    const auto tasks = sample_batch(tc, index);
    const std::uint64_t seed = Rng::derive_seed(tc.seed, "probe", index);
    out.groups.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        out.groups.push_back(rollout_group(policy, tasks[i], tc.G, tc.task.response_length,
                                           model.config().mask_id, tc.decode,
                                           Rng::derive_seed(seed, "group", i)));
        score_group(out.groups.back());
    }
    for (auto& g : out.groups) {
        if (filter_group(g) == GroupDecision::drop) continue;
        g.advantages = normalize_advantages(g.rewards, tc.std_floor);
        for (std::size_t b = 0; b < g.size(); ++b) out.refs.push_back({&g.trajectories[b], g.advantages[b]});
    }
    return out;
}

// ---------------------------------------------------------------------------

Result gradient_correctness() {
    ModelConfig mc = parse_config("").resolved_model();
    mc.init_std = 0.1;
    const Model model(mc);
    const ParamStore theta = model.init_params();
    Rng rng(7);
    const TaskSpec spec{TaskFamily::addition, 6};
    std::vector<SequenceState> batch;
    std::vector<double> ratios;
    for (int i = 0; i < 4; ++i) {
        const TaskInstance t = make_task(spec, rng);
        batch.push_back(SequenceState::clean(t.prompt, t.reference, 17));
        ratios.push_back(0.25 + 0.2 * i);
    }
    const std::size_t coords = 150;
    std::vector<std::pair<std::string, double>> errs;

    {
        const auto f = [&](const ParamStore& p) {
            Rng r(3);
            return mlm_batch_loss(model, p, batch, ratios, r).value;
        };
        Rng r(3);
        const auto g = mlm_batch_loss(model, theta, batch, ratios, r).tape.gradient(model, theta);
        errs.emplace_back("mlm", finite_difference_check(theta, g, f, coords, 1).max_rel_err);
    }

    const SequenceState& x0 = batch[1];
    Rng mask_rng(5);
    const SequenceState ot = forward_mask(x0, 0.7, mask_rng);
    const ClippedCleanState clean = clip_tokens(x0, ot, model.predict(theta, ot), 0.0);
    {
        const auto f = [&](const ParamStore& p) {
            return step_loss_reinforce(model, p, ot, clean, 0.8).taped.value;
        };
        const auto g = step_loss_reinforce(model, theta, ot, clean, 0.8).taped.tape.gradient(model, theta);
        errs.emplace_back("reinforce", finite_difference_check(theta, g, f, coords, 2).max_rel_err);
    }
    {
        const ParamStore old = perturbed(theta, 1e-3, 11);
        const auto f = [&](const ParamStore& p) {
            return step_loss_ppo(model, p, old, ot, clean, -1.1, 0.2).taped.value;
        };
        const auto g =
            step_loss_ppo(model, theta, old, ot, clean, -1.1, 0.2).taped.tape.gradient(model, theta);
        errs.emplace_back("ppo", finite_difference_check(theta, g, f, coords, 3).max_rel_err);
    }
    {
        const ParamStore ref = perturbed(theta, 0.05, 12);
        const auto f = [&](const ParamStore& p) { return kl_k3(model, p, ref, ot, clean).taped.value; };
        const auto g = kl_k3(model, theta, ref, ot, clean).taped.tape.gradient(model, theta);
        errs.emplace_back("k3", finite_difference_check(theta, g, f, coords, 4).max_rel_err);
    }

    Result r{true, ""};
    for (const auto& [name, e] : errs) {
        r.pass = r.pass && e <= 1e-4;
        r.detail += name + " " + fmt("%.2e", e) + ", ";
    }
    r.detail = "max rel err over " + std::to_string(coords) + " coords each: " +
               r.detail.substr(0, r.detail.size() - 2);
    return r;
}

Result oracle_equivalence() {
    const Model model(testing::small_model(21));
    const ParamStore theta = model.init_params();
    const ParamStore ref = perturbed(theta, 0.05, 22);
    Rng rng(23);
    double worst = 0.0;
    std::size_t nonzero = 0;
    std::size_t max_t = 0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t L = 4 + rng.below(13);
        const auto t = testing::sampled_trajectories(model, theta, 1, L, rng.next_u64(), 8).front();
        max_t = std::max(max_t, t.num_steps());
        LossConfig cfg;
        cfg.k = t.num_steps();
        cfg.tau_sample = 1e-6;
        const double adv = rng.normal();
        const std::vector<ResponseRef> refs{{&t, adv}};
        const auto prep = prepare_loss(model, theta, &ref, refs, cfg, rng.next_u64());
        const double batched = evaluate_loss(model, theta, prep, false, false).loss;
        OracleConfig oc;
        oc.clip_threshold = cfg.clip_threshold;
        oc.beta = cfg.beta;
        oc.theta_ref = &ref;
        const double exact = loss_sequential_oracle(model, theta, t, adv, oc).taped.value;
        worst = std::max(worst, std::abs(batched - exact));
        nonzero += exact != 0.0;
    }
    return {worst <= 1e-10 && max_t <= 8,
            "50 trajectories (T <= " + std::to_string(max_t) + "), max |diff| " +
                fmt("%.2e", worst) + ", " + std::to_string(nonzero) + " with nonzero loss"};
}

Result sampling_fidelity() {
    Rng rng(31);
    double worst = 0.0;
    for (std::size_t T = 2; T <= 6; ++T) {
        for (std::size_t k = 1; k <= std::min<std::size_t>(3, T); ++k) {
            std::vector<double> p(T);
            for (auto& x : p) x = 3.0 * rng.uniform();
            const auto exact = testing::exact_inclusion(step_softmax(p, 1.0), k);
            std::vector<double> counts(T, 0.0);
            const std::size_t draws = 100000;
            for (std::size_t d = 0; d < draws; ++d) {
                for (std::size_t i : sample_timesteps(p, k, 1.0, rng)) counts[i] += 1.0;
            }
            for (std::size_t i = 0; i < T; ++i) {
                worst = std::max(worst, std::abs(counts[i] / draws - exact[i]));
            }
        }
    }
    std::size_t topk_ok = 0;
    double uniform_dev = 0.0;
    for (int table = 0; table < 1000; ++table) {
        const std::size_t T = 2 + rng.below(15);
        const std::size_t k = 1 + rng.below(T);
        std::vector<double> p(T);
        for (auto& x : p) x = 5.0 * rng.uniform();
        std::vector<std::size_t> order(T);
        for (std::size_t i = 0; i < T; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] > p[b]; });
        order.resize(k);
        std::sort(order.begin(), order.end());
        topk_ok += sample_timesteps(p, k, 1e-6, rng) == order;
        for (double w : step_softmax(p, 1e9)) uniform_dev = std::max(uniform_dev, std::abs(w - 1.0 / T));
    }
    return {worst <= 0.01 && topk_ok == 1000 && uniform_dev <= 1e-6,
            "max inclusion error " + fmt("%.4f", worst) + ", top-k exact on " +
                std::to_string(topk_ok) + "/1000, uniform deviation " + fmt("%.1e", uniform_dev)};
}

Result k3_estimator() {
    Rng rng(41);
    std::size_t negative = 0;
    for (int i = 0; i < 10000; ++i) {
        const double rho = std::exp(10.0 * (rng.uniform() - 0.5));
        negative += terms::k3_value(rho) < 0.0;
    }
    const auto dirichlet = [&](std::size_t n) {
        std::vector<double> v(n);
        double s = 0.0;
        for (auto& x : v) s += x = -std::log(rng.uniform_open());
        for (auto& x : v) x /= s;
        return v;
    };
    double worst = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
        const auto p = dirichlet(8), q = dirichlet(8);
        double exact = 0.0;
        for (std::size_t i = 0; i < 8; ++i) exact += p[i] * std::log(p[i] / q[i]);
        std::vector<double> cdf(8);
        std::partial_sum(p.begin(), p.end(), cdf.begin());
        double mc = 0.0;
        const int n = 100000;
        for (int s = 0; s < n; ++s) {
            const double u = rng.uniform() * cdf.back();
            const std::size_t i = std::min<std::size_t>(
                7, static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()));
            mc += terms::k3(p[i], q[i]).value;
        }
        mc /= n;
        worst = std::max(worst, std::abs(mc - exact) / exact);
    }
    return {negative == 0 && worst <= 0.02,
            std::to_string(negative) + " negative of 10^4, max relative MC error " +
                fmt("%.4f", worst) + " over 20 pairs"};
}

Result end_to_end(Shared& s) {
    const double base = s.eval_reward(s.addition_pretrained());
    progress("baseline eval reward " + fmt("%.3f", base));
    std::string detail = "baseline " + fmt("%.3f", base) + ", after 200 steps:";
    bool pass = true;
    for (std::uint64_t seed : kRlSeeds) {
        progress("rl seed " + std::to_string(seed));
        const double after = s.eval_reward(s.addition_rl(seed).final);
        detail += " seed " + std::to_string(seed) + " " + fmt("%.3f", after) + " (" +
                  fmt("%+.3f", after - base) + ")";
        pass = pass && after - base >= 0.2;
    }
    return {pass, detail};
}

Result clipping_ablation(Shared& s) {
    const ParamStore& theta = s.addition_rl(kRlSeeds[0]).final;
    const ParamStore& ref = s.addition_pretrained();
    const TrainConfig tc = parse_config(base_ini("addition", kRlSeeds[0])).resolved_train();
    std::size_t batches = 0, low_batches = 0, norm_ok = 0, order_ok = 0;
    double min_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < 10; ++b) {
        const ScoredBatch batch = rollout_batch(s.model, theta, tc, b);
        if (batch.refs.empty()) continue;
        ++batches;
        const std::uint64_t seed = Rng::derive_seed(tc.seed, "probe_loss", b);
        LossConfig clip = tc.loss, noclip = tc.loss, prev = tc.loss;
        noclip.clip_threshold = 0.0;
        prev.target = Target::x_prev;
        const auto pc = prepare_loss(s.model, theta, &ref, batch.refs, clip, seed);
        const auto pn = prepare_loss(s.model, theta, &ref, batch.refs, noclip, seed);
        const auto pp = prepare_loss(s.model, theta, &ref, batch.refs, prev, seed);
        order_ok += pp.token_utility < pc.token_utility && pc.token_utility < pn.token_utility;

        bool low = false;
        for (const auto& u : pn.units) {
            for (double p : u.old_probs) low = low || p < 1e-3;
        }
        if (!low) continue;
        ++low_batches;
        const double gc = grad_norm(evaluate_loss(s.model, theta, pc, false, true).grads);
        const double gn = grad_norm(evaluate_loss(s.model, theta, pn, false, true).grads);
        min_ratio = std::min(min_ratio, gn / gc);
        norm_ok += gn >= 10.0 * gc;
    }
    return {batches > 0 && order_ok == batches && norm_ok == low_batches,
            "utility order held on " + std::to_string(order_ok) + "/" + std::to_string(batches) +
                " batches; " + std::to_string(low_batches) +
                " batches with a token below 1e-3, min no-clip/clip grad norm ratio " +
                (low_batches ? fmt("%.1f", min_ratio) : std::string("n/a"))};
}

Result target_stability(Shared& s) {
    const ParamStore& start = s.sort_pretrained();
    const auto run = [&](const std::string& target) {
        RunConfig rc = parse_config(base_ini("sort", 5) + "target = " + target +
                                    "\ntotal_steps = 100\n");
        progress("sort rl, target " + target);
        return s.run_rl(start, rc.resolved_train());
    };
    const RlRun x0 = run("x0");
    const RlRun xp = run("x_prev");

    const auto final_reward = [](const RlRun& r) {
        double sum = 0.0;
        for (std::size_t i = r.metrics.size() - 10; i < r.metrics.size(); ++i) sum += r.metrics[i].mean_reward;
        return sum / 10.0;
    };
    // Spike: KL at least 5x the median of all earlier steps, after 10 steps.
    std::size_t spikes = 0;
    double peak = 0.0;
    std::vector<double> seen;
    for (const auto& m : xp.metrics) {
        if (seen.size() >= 10) {
            std::vector<double> sorted = seen;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t n = sorted.size();
            const double med = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
            spikes += med > 0.0 && m.kl >= 5.0 * med;
            if (med > 0.0) peak = std::max(peak, m.kl / med);
        }
        seen.push_back(m.kl);
    }
    std::size_t nonfinite = 0;
    for (const auto& m : x0.metrics) {
        nonfinite += !std::isfinite(m.loss) ||
                     std::count(m.flags.begin(), m.flags.end(), "nonfinite_loss") > 0;
    }
    const double r0 = final_reward(x0), rp = final_reward(xp);
    return {(spikes > 0 || rp < r0) && nonfinite == 0,
            "x_prev kl spikes " + std::to_string(spikes) + " (peak kl/median " + fmt("%.2f", peak) +
                "), final reward x0 " + fmt("%.3f", r0) +
                " vs x_prev " + fmt("%.3f", rp) + ", x0 non-finite losses " +
                std::to_string(nonfinite)};
}

Result normalization_ablation() {
    const auto st = [](double pol, std::size_t n) {
        StepLoss s;
        s.policy_term = pol;
        s.tokens_used = n;
        return s;
    };
    const std::vector<std::vector<StepLoss>> equal{{st(0.75, 2)}, {st(0.25, 2)}, {st(-0.5, 2)}};
    const double te = aggregate_token_level(equal, 0.0), se = aggregate_sample_level(equal, 0.0, 3);
    const std::vector<std::vector<StepLoss>> unequal{{st(1.0, 1)}, {st(0.0, 3)}};
    const double tu = aggregate_token_level(unequal, 0.0), su = aggregate_sample_level(unequal, 0.0, 2);

    // The same through the batched engine: one-step trajectories, every token kept.
    const Model model(testing::small_model(51));
    const ParamStore theta = model.init_params();
    std::vector<DenoiseTrajectory> trajs;
    for (int i = 0; i < 3; ++i) {
        trajs.push_back(testing::hand_trajectory({{0, 1, 2, 3}}, {TokenId(i), 4, 5, 6}));
    }
    std::vector<ResponseRef> refs;
    for (int i = 0; i < 3; ++i) refs.push_back({&trajs[i], 0.5 * i - 0.5});
    LossConfig cfg;
    cfg.clip_threshold = 0.0;
    cfg.beta = 0.0;
    const double es = evaluate_loss(model, theta, prepare_loss(model, theta, nullptr, refs, cfg, 1),
                                    false, false).loss;
    cfg.normalization = Normalization::token;
    const double et = evaluate_loss(model, theta, prepare_loss(model, theta, nullptr, refs, cfg, 1),
                                    false, false).loss;

    const bool pass = te == se && es == et && std::abs(tu - 0.25) <= 1e-15 &&
                      std::abs(su - 0.5) <= 1e-15;
    return {pass, "equal counts: token " + fmt("%.6g", te) + " sample " + fmt("%.6g", se) +
                      " (engine identical: " + (es == et ? "yes" : "no") + "); unequal: token " +
                      fmt("%.6g", tu) + " sample " + fmt("%.6g", su)};
}

Result correlation_diagnostic(Shared& s) {
    const ParamStore& theta = s.addition_rl(kRlSeeds[0]).final;
    const TrainConfig tc = parse_config(base_ini("addition", kRlSeeds[0])).resolved_train();
    const ModelDenoiser policy(s.model, theta);
    const Dataset ds = generate_dataset(tc.task, 2000, 61);
    std::vector<DenoiseTrajectory> trajs;
    for (std::size_t i = 0; i < ds.tasks.size(); ++i) {
        trajs.push_back(decode(policy, ds.tasks[i].prompt, tc.task.response_length,
                               s.model.config().mask_id, tc.decode, Rng::derive_seed(62, "decode", i)));
    }
    const auto stats = token_stats(trajs);
    const Correlation c = correlate(stats);
    const Histogram h = bin_probabilities(stats);
    return {c.count >= 10000 && c.pearson <= -0.5,
            "pearson " + fmt("%.3f", c.pearson) + ", spearman " + fmt("%.3f", c.spearman) +
                " over " + std::to_string(c.count) + " events; " +
                fmt("%.1f", 100.0 * h.high_confidence) + "% committed with p >= 0.9"};
}

Result determinism() {
    const std::string ini =
        "[run]\nseed = 77\n[task]\nfamily = sort\n[pretrain]\nsteps = 40\n"
        "[train]\nbatch_size = 4\ntotal_steps = 6\nlr = 0.001\nN = 2\n";
    const auto run = [&] {
        const RunConfig rc = parse_config(ini);
        const ModelConfig mc = rc.resolved_model();
        const Model model(mc);
        ParamStore p = model.init_params();
        pretrain(model, p, rc.resolved_pretrain());
        const TrainConfig tc = rc.resolved_train();
        TrainState st = init_train_state(p, tc);
        std::string trace;
        train(model, st, tc, [&](const StepMetrics& m, const TrainState&, const auto&) {
            trace += m.to_json().dump() + "\n";
        });
        std::ostringstream ckpt;
        write_checkpoint(ckpt, mc, st.theta);
        return std::make_pair(trace, ckpt.str());
    };
    const auto a = run();
    const auto b = run();
    const bool pass = a.first == b.first && a.second == b.second && !a.first.empty();
    return {pass, "metrics " + std::string(a.first == b.first ? "identical" : "differ") + " (" +
                      std::to_string(a.first.size()) + " bytes), checkpoints " +
                      (a.second == b.second ? "identical" : "differ") + " (" +
                      std::to_string(a.second.size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    Shared shared;
    const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"oracle equivalence", oracle_equivalence},
        {"weighted-sampling fidelity", sampling_fidelity},
        {"k3 estimator", k3_estimator},
        {"end-to-end learning", [&] { return end_to_end(shared); }},
        {"token-clipping ablation", [&] { return clipping_ablation(shared); }},
        {"x0 vs x_prev stability", [&] { return target_stability(shared); }},
        {"normalization ablation", normalization_ablation},
        {"correlation diagnostic", [&] { return correlation_diagnostic(shared); }},
        {"determinism", determinism},
    };

    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        std::cerr << "criterion " << id << ": " << criteria[i].first << std::endl;
        const auto t0 = std::chrono::steady_clock::now();
        Result r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        all = all && r.pass;
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << id << " " << criteria[i].first << ": "
                  << r.detail << " [" << fmt("%.1f", secs) << " s]" << std::endl;
    }
    return all ? 0 : 1;
}
