// rldf: pretrain, RL-train, evaluate and analyze toy masked diffusion models.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rldf/analysis.hpp"
#include "rldf/checkpoint.hpp"
#include "rldf/config.hpp"
#include "rldf/error.hpp"
#include "rldf/manifest.hpp"
#include "rldf/model.hpp"
#include "rldf/trainer.hpp"
#include "rldf/trajectory_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rldf;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string resume;
    std::string trajectories;
    std::vector<std::string> metrics;
};

RunConfig load(const Options& o) {
    RunConfig cfg = o.config.empty() ? parse_config("") : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    return cfg;
}

fs::path prepare_out(const Options& o, const std::string& command) {
    fs::path dir = o.out.empty() ? fs::path("runs") / command : fs::path(o.out);
    fs::create_directories(dir);
    return dir;
}

Checkpoint load_or_init(const RunConfig& cfg, const std::string& resume) {
    if (!resume.empty()) {
        Checkpoint ck = load_checkpoint(resume);
        if (!(ck.config.vocab_size == cfg.model.vocab_size &&
              ck.config.embed_dim == cfg.model.embed_dim &&
              ck.config.n_layers == cfg.model.n_layers && ck.config.n_heads == cfg.model.n_heads &&
              ck.config.ff_dim == cfg.model.ff_dim && ck.config.max_len == cfg.model.max_len)) {
            throw ConfigError("checkpoint architecture differs from [model] section", {"model"});
        }
        return ck;
    }
    const ModelConfig mc = cfg.resolved_model();
    const Model model(mc);
    return {mc, model.init_params()};
}

void write_dataset_manifest(const fs::path& dir, const DatasetManifest& d) {
    write_file_atomic(dir / "dataset.json", to_json(d).dump(2) + "\n");
}

// Pretrains in place and appends one line per step to log.
PretrainReport run_pretrain(const Model& model, ParamStore& params, const RunConfig& cfg,
                            std::ostream& log) {
    const PretrainConfig pc = cfg.resolved_pretrain();
    PretrainReport rep = pretrain(model, params, pc);
    for (std::size_t s = 0; s < rep.losses.size(); ++s) {
        log << json{{"step", s}, {"mlm_loss", rep.losses[s]}}.dump() << '\n';
    }
    return rep;
}

int cmd_pretrain(const Options& o) {
    const RunConfig cfg = load(o);
    const fs::path dir = prepare_out(o, "pretrain");
    RunManifest m = make_manifest("pretrain", cfg);
    m.artifacts = {{"checkpoint", "model.ckpt"}, {"log", "pretrain.jsonl"}, {"dataset", "dataset.json"}};
    write_manifest(dir, m);

    Checkpoint ck = load_or_init(cfg, o.resume);
    const Model model(ck.config);
    const PretrainConfig pc = cfg.resolved_pretrain();
    write_dataset_manifest(dir, {pc.seed, pc.task.family, pc.steps * pc.batch_size,
                                 10 + pc.task.response_length});
    std::ofstream log(dir / "pretrain.jsonl");
    const PretrainReport rep = run_pretrain(model, ck.params, cfg, log);
    save_checkpoint(dir / "model.ckpt", ck.config, ck.params);
    const json summary = {{"initial_heldout_mlm", rep.initial_heldout},
                          {"final_heldout_mlm", rep.final_heldout},
                          {"skipped", rep.skipped}};
    write_completion(dir, "ok", summary);
    std::cout << summary.dump() << '\n';
    return 0;
}

std::string step_name(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%06zu.ckpt", step);
    return buf;
}

int cmd_train(const Options& o) {
    const RunConfig cfg = load(o);
    const fs::path dir = prepare_out(o, "train");
    RunManifest m = make_manifest("train", cfg);
    m.artifacts = {{"checkpoint", "final.ckpt"},
                   {"metrics", "metrics.jsonl"},
                   {"dataset", "dataset.json"}};
    if (cfg.log_trajectories) m.artifacts.emplace_back("trajectories", "trajectories.jsonl");
    if (!o.resume.empty()) m.artifacts.emplace_back("initial_checkpoint", o.resume);
    write_manifest(dir, m);

    Checkpoint ck = load_or_init(cfg, o.resume);
    const Model model(ck.config);
    if (o.resume.empty() && cfg.pretrain.steps > 0) {
        std::ofstream log(dir / "pretrain.jsonl");
        run_pretrain(model, ck.params, cfg, log);
    }

    const TrainConfig tc = cfg.resolved_train();
    write_dataset_manifest(dir, {tc.seed, tc.task.family, tc.total_steps * tc.batch_size,
                                 10 + tc.task.response_length});
    TrainState state = init_train_state(ck.params, tc);
    std::ofstream metrics(dir / "metrics.jsonl");
    std::ofstream trajs;
    if (cfg.log_trajectories) trajs.open(dir / "trajectories.jsonl");

    train(model, state, tc,
          [&](const StepMetrics& sm, const TrainState& st, const std::vector<RolloutGroup>& groups) {
              metrics << sm.to_json().dump() << '\n';
              metrics.flush();
              if (cfg.log_trajectories) {
                  for (std::size_t g = 0; g < groups.size(); ++g) {
                      for (std::size_t b = 0; b < groups[g].size(); ++b) {
                          write_trajectory(trajs, groups[g].trajectories[b],
                                           {{"train_step", sm.step},
                                            {"group", g},
                                            {"reward", groups[g].rewards[b]},
                                            {"advantage", groups[g].advantages[b]}});
                      }
                  }
              }
              if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 &&
                  st.step < tc.total_steps) {
                  save_checkpoint(dir / step_name(st.step), ck.config, st.theta);
              }
          });
    save_checkpoint(dir / "final.ckpt", ck.config, state.theta);
    write_completion(dir, "ok", {{"steps", state.step}});
    return 0;
}

int cmd_eval(const Options& o) {
    const RunConfig cfg = load(o);
    if (o.resume.empty()) throw ConfigError("eval needs --checkpoint", {"checkpoint"});
    const fs::path dir = prepare_out(o, "eval");
    RunManifest m = make_manifest("eval", cfg);
    m.artifacts = {{"checkpoint", o.resume}, {"table", "eval.csv"}};
    write_manifest(dir, m);

    const Checkpoint ck = load_or_init(cfg, o.resume);
    const Model model(ck.config);
    const EvalConfig ec = cfg.resolved_eval();
    const auto rows = evaluate(model, ck.params, ec);
    std::ostringstream csv;
    csv << "family,strategy,max_steps,count,mean_reward,incomplete\n";
    for (const auto& r : rows) {
        csv << to_string(ec.task.family) << ',' << to_string(r.strategy) << ',' << r.max_steps
            << ',' << r.count << ',' << csv_number(r.mean_reward) << ',' << r.incomplete << '\n';
    }
    write_file_atomic(dir / "eval.csv", csv.str());
    write_completion(dir, "ok");
    std::cout << csv.str();
    return 0;
}

int cmd_analyze(const Options& o) {
    if (o.trajectories.empty() && o.metrics.empty()) {
        throw ConfigError("analyze needs a trajectory log or --metrics", {"trajectories"});
    }
    const fs::path dir = prepare_out(o, "analyze");
    if (!o.trajectories.empty()) {
        const auto trajs = read_trajectories(fs::path(o.trajectories));
        const auto stats = token_stats(trajs);
        std::ostringstream corr, hist, prof;
        write_correlation_csv(corr, correlate(stats));
        write_histogram_csv(hist, bin_probabilities(stats));
        write_profile_csv(prof, confidence_profile(stats));
        write_file_atomic(dir / "correlation.csv", corr.str());
        write_file_atomic(dir / "histogram.csv", hist.str());
        write_file_atomic(dir / "profile.csv", prof.str());
        std::cout << corr.str();
    }
    if (!o.metrics.empty()) {
        std::vector<UtilityRecord> records;
        for (const auto& path : o.metrics) {
            std::ifstream in(path);
            if (!in) throw FormatError("cannot read " + path);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const json j = json::parse(line);
                UtilityRecord r;
                r.label = fs::path(path).parent_path().filename().string();
                if (r.label.empty()) r.label = fs::path(path).stem().string();
                r.grad_norm = j.at("grad_norm").get<double>();
                r.loss = j.at("loss").get<double>();
                StepLoss s;
                s.token_utility = j.at("token_utility").get<double>();
                r.steps.push_back(s);
                records.push_back(std::move(r));
            }
        }
        std::ostringstream util;
        write_utility_csv(util, utility_report(records));
        write_file_atomic(dir / "utility.csv", util.str());
        std::cout << util.str();
    }
    return 0;
}

void emit_error(const std::string& code, const std::vector<std::string>& keys,
                const std::string& message) {
    std::cerr << json{{"error", code}, {"keys", keys}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reinforcement learning from denoising feedback on toy masked diffusion models"};
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "INI config file (defaults when omitted)");
        sub->add_option("--seed", seed, "master seed, overrides [run] seed")
            ->each([&](const std::string&) { o.seed = seed; });
        sub->add_option("--out", o.out, "output directory");
    };
    auto* pre = app.add_subcommand("pretrain", "MLM pretraining");
    common(pre);
    pre->add_option("--resume", o.resume, "start from this checkpoint");
    auto* tr = app.add_subcommand("train", "RL training from a pretrained checkpoint");
    common(tr);
    tr->add_option("--resume", o.resume, "initial checkpoint (pretrains inline when omitted)");
    auto* ev = app.add_subcommand("eval", "reward table for a checkpoint");
    common(ev);
    ev->add_option("--checkpoint,--resume", o.resume, "checkpoint to evaluate")->required();
    auto* an = app.add_subcommand("analyze", "diagnostics from trajectory and metrics logs");
    an->add_option("trajectories", o.trajectories, "trajectory log (JSONL)");
    an->add_option("--metrics", o.metrics, "metrics logs for the utility table");
    an->add_option("--out", o.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage", {}, e.what());
        return 2;
    }

    try {
        if (pre->parsed()) return cmd_pretrain(o);
        if (tr->parsed()) return cmd_train(o);
        if (ev->parsed()) return cmd_eval(o);
        return cmd_analyze(o);
    } catch (const ConfigError& e) {
        emit_error("config", e.keys, e.what());
    } catch (const VersionError& e) {
        emit_error("checkpoint_version", {}, e.what());
    } catch (const FormatError& e) {
        emit_error("format", {}, e.what());
    } catch (const UndefinedCorrelation& e) {
        emit_error("undefined_correlation", {}, e.what());
    } catch (const NumericError& e) {
        emit_error("numeric", {}, e.what());
    } catch (const InvalidArgument& e) {
        emit_error("invalid_argument", {}, e.what());
    } catch (const InvalidState& e) {
        emit_error("invalid_state", {}, e.what());
    } catch (const std::exception& e) {
        emit_error("internal", {}, e.what());
    }
    return 1;
}
