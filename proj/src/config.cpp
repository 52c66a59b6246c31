#include "rldf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "rldf/error.hpp"
#include "rldf/tasks.hpp"

namespace rldf {

namespace {

struct Binding {
    ConfigKey key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;  // throws on parse errors
    std::function<std::string(const RunConfig&)> check;       // empty when valid
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw InvalidArgument("expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& v) {
    if (v == "inf") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw InvalidArgument("expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InvalidArgument("expected true or false, got '" + v + "'");
}

std::string fmt_double(double v) {
    if (std::isinf(v) && v > 0) return "inf";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
Binding size_key(std::string section, std::string name, std::string doc, T RunConfig::*outer,
                 std::size_t T::*field, std::size_t min_value) {
    return {{section, name, std::move(doc)},
            [=](const RunConfig& c) { return std::to_string(c.*outer.*field); },
            [=](RunConfig& c, const std::string& v) {
                c.*outer.*field = static_cast<std::size_t>(parse_u64(v));
            },
            [=](const RunConfig& c) {
                return c.*outer.*field < min_value ? "must be >= " + std::to_string(min_value)
                                                   : std::string();
            }};
}

using Check = std::function<std::string(double)>;

Check positive() {
    return [](double v) { return v > 0.0 ? "" : std::string("must be > 0"); };
}
Check nonnegative() {
    return [](double v) { return v >= 0.0 ? "" : std::string("must be >= 0"); };
}
Check in_range(double lo, double hi, bool lo_open, bool hi_open) {
    return [=](double v) {
        const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
        if (ok) return std::string();
        return "must be in " + std::string(lo_open ? "(" : "[") + fmt_double(lo) + ", " +
               fmt_double(hi) + (hi_open ? ")" : "]");
    };
}

template <class T>
Binding real_key(std::string section, std::string name, std::string doc, T RunConfig::*outer,
                 double T::*field, Check check) {
    return {{section, name, std::move(doc)},
            [=](const RunConfig& c) { return fmt_double(c.*outer.*field); },
            [=](RunConfig& c, const std::string& v) { c.*outer.*field = parse_double(v); },
            [=](const RunConfig& c) {
                const double v = c.*outer.*field;
                if (std::isnan(v)) return std::string("must be a number");
                return check(v);
            }};
}

std::vector<Binding> make_bindings() {
    std::vector<Binding> b;
    // run
    b.push_back({{"run", "seed", "master seed for every random stream"},
                 [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); },
                 [](const RunConfig&) { return std::string(); }});
    b.push_back({{"run", "checkpoint_every", "RL checkpoint interval in steps, 0 for final only"},
                 [](const RunConfig& c) { return std::to_string(c.checkpoint_every); },
                 [](RunConfig& c, const std::string& v) { c.checkpoint_every = parse_u64(v); },
                 [](const RunConfig&) { return std::string(); }});
    b.push_back({{"run", "log_trajectories", "write RL rollouts to trajectories.jsonl"},
                 [](const RunConfig& c) { return std::string(c.log_trajectories ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.log_trajectories = parse_bool(v); },
                 [](const RunConfig&) { return std::string(); }});

    // model
    b.push_back({{"model", "vocab_size", "vocabulary size including MASK"},
                 [](const RunConfig& c) { return std::to_string(c.model.vocab_size); },
                 [](RunConfig& c, const std::string& v) { c.model.vocab_size = parse_u64(v); },
                 [](const RunConfig& c) {
                     return c.model.vocab_size < tok::kVocabSize
                                ? "must be >= " + std::to_string(tok::kVocabSize)
                                : std::string();
                 }});
    b.push_back(size_key("model", "embed_dim", "model width", &RunConfig::model,
                         &ModelConfig::embed_dim, 1));
    b.push_back(size_key("model", "n_layers", "transformer blocks", &RunConfig::model,
                         &ModelConfig::n_layers, 1));
    b.push_back({{"model", "n_heads", "attention heads, must divide embed_dim"},
                 [](const RunConfig& c) { return std::to_string(c.model.n_heads); },
                 [](RunConfig& c, const std::string& v) { c.model.n_heads = parse_u64(v); },
                 [](const RunConfig& c) {
                     if (c.model.n_heads < 1) return std::string("must be >= 1");
                     if (c.model.embed_dim % c.model.n_heads != 0) {
                         return std::string("must divide model.embed_dim");
                     }
                     return std::string();
                 }});
    b.push_back(size_key("model", "ff_dim", "MLP hidden width", &RunConfig::model,
                         &ModelConfig::ff_dim, 1));
    b.push_back({{"model", "max_len", "maximum prompt + response length"},
                 [](const RunConfig& c) { return std::to_string(c.model.max_len); },
                 [](RunConfig& c, const std::string& v) { c.model.max_len = parse_u64(v); },
                 [](const RunConfig& c) {
                     if (c.model.max_len < 1) return std::string("must be >= 1");
                     const std::size_t need = 10 + c.resolved_task().response_length;
                     if (c.model.max_len < need) {
                         return "must be >= " + std::to_string(need) + " for this task";
                     }
                     return std::string();
                 }});
    b.push_back(real_key("model", "init_std", "std of the normal weight init", &RunConfig::model,
                         &ModelConfig::init_std, nonnegative()));

    // task
    b.push_back({{"task", "family", "addition | reverse | sort"},
                 [](const RunConfig& c) { return std::string(to_string(c.task.family)); },
                 [](RunConfig& c, const std::string& v) { c.task.family = parse_task_family(v); },
                 [](const RunConfig&) { return std::string(); }});
    b.push_back({{"task", "response_length", "response tokens, 0 for the family default"},
                 [](const RunConfig& c) { return std::to_string(c.task.response_length); },
                 [](RunConfig& c, const std::string& v) { c.task.response_length = parse_u64(v); },
                 [](const RunConfig& c) {
                     const std::size_t min_len = default_response_length(c.task.family);
                     if (c.task.response_length != 0 && c.task.response_length < min_len) {
                         return "must be 0 or >= " + std::to_string(min_len);
                     }
                     return std::string();
                 }});

    // decode (rollouts)
    b.push_back({{"decode", "strategy", "dynamic_threshold | static_topk"},
                 [](const RunConfig& c) { return std::string(to_string(c.decode.strategy)); },
                 [](RunConfig& c, const std::string& v) { c.decode.strategy = parse_strategy(v); },
                 [](const RunConfig&) { return std::string(); }});
    b.push_back(size_key("decode", "k_per_step", "positions per step (static)", &RunConfig::decode,
                         &DecodeConfig::k_per_step, 1));
    b.push_back(real_key("decode", "threshold", "confidence threshold (dynamic)",
                         &RunConfig::decode, &DecodeConfig::threshold,
                         in_range(0.0, 1.0, true, true)));
    b.push_back(size_key("decode", "block_size", "block length", &RunConfig::decode,
                         &DecodeConfig::block_size, 1));
    b.push_back(size_key("decode", "max_steps", "denoising step budget", &RunConfig::decode,
                         &DecodeConfig::max_steps, 1));
    b.push_back({{"decode", "sampler", "gumbel_argmax | categorical"},
                 [](const RunConfig& c) { return std::string(to_string(c.decode.sampler.mode)); },
                 [](RunConfig& c, const std::string& v) {
                     c.decode.sampler.mode = parse_sample_mode(v);
                 },
                 [](const RunConfig&) { return std::string(); }});
    b.push_back({{"decode", "temperature", "rollout sampling temperature, 0 for argmax"},
                 [](const RunConfig& c) { return fmt_double(c.decode.sampler.temperature); },
                 [](RunConfig& c, const std::string& v) {
                     c.decode.sampler.temperature = parse_double(v);
                 },
                 [](const RunConfig& c) {
                     const double t = c.decode.sampler.temperature;
                     return t >= 0.0 && std::isfinite(t) ? std::string() : std::string("must be >= 0");
                 }});
    b.push_back({{"decode", "top_p", "nucleus mass (categorical)"},
                 [](const RunConfig& c) { return fmt_double(c.decode.sampler.top_p); },
                 [](RunConfig& c, const std::string& v) { c.decode.sampler.top_p = parse_double(v); },
                 [](const RunConfig& c) {
                     return in_range(0.0, 1.0, true, false)(c.decode.sampler.top_p);
                 }});

    // pretrain
    b.push_back(size_key("pretrain", "steps", "MLM optimizer steps", &RunConfig::pretrain,
                         &PretrainConfig::steps, 0));
    b.push_back(size_key("pretrain", "batch_size", "sequences per step", &RunConfig::pretrain,
                         &PretrainConfig::batch_size, 1));
    b.push_back(real_key("pretrain", "lr", "Adam learning rate", &RunConfig::pretrain,
                         &PretrainConfig::lr, positive()));
    b.push_back(real_key("pretrain", "max_grad_norm", "gradient clip norm, inf disables",
                         &RunConfig::pretrain, &PretrainConfig::max_grad_norm, positive()));
    b.push_back(size_key("pretrain", "heldout", "held-out sequences for the loss report",
                         &RunConfig::pretrain, &PretrainConfig::heldout, 0));

    // train
    b.push_back(size_key("train", "batch_size", "prompts per outer step", &RunConfig::train,
                         &TrainConfig::batch_size, 1));
    b.push_back(size_key("train", "G", "responses per prompt", &RunConfig::train, &TrainConfig::G, 2));
    b.push_back(size_key("train", "N", "inner iterations per outer step", &RunConfig::train,
                         &TrainConfig::N, 1));
    b.push_back({{"train", "estimator", "rldf | full_seq | random_mask | sequential_oracle"},
                 [](const RunConfig& c) { return std::string(to_string(c.train.loss.estimator)); },
                 [](RunConfig& c, const std::string& v) { c.train.loss.estimator = parse_estimator(v); },
                 [](const RunConfig&) { return std::string(); }});
    b.push_back({{"train", "target", "x0 | x_prev"},
                 [](const RunConfig& c) { return std::string(to_string(c.train.loss.target)); },
                 [](RunConfig& c, const std::string& v) { c.train.loss.target = parse_target(v); },
                 [](const RunConfig&) { return std::string(); }});
    b.push_back({{"train", "k", "sampled steps per response"},
                 [](const RunConfig& c) { return std::to_string(c.train.loss.k); },
                 [](RunConfig& c, const std::string& v) { c.train.loss.k = parse_u64(v); },
                 [](const RunConfig& c) {
                     return c.train.loss.k < 1 ? std::string("must be >= 1") : std::string();
                 }});
    const auto loss_real = [&](std::string name, std::string doc, double LossConfig::*field,
                               Check check) {
        b.push_back({{"train", name, std::move(doc)},
                     [=](const RunConfig& c) { return fmt_double(c.train.loss.*field); },
                     [=](RunConfig& c, const std::string& v) { c.train.loss.*field = parse_double(v); },
                     [=](const RunConfig& c) {
                         const double v = c.train.loss.*field;
                         return std::isnan(v) ? std::string("must be a number") : check(v);
                     }});
    };
    loss_real("tau_sample", "step-sampling softmax temperature", &LossConfig::tau_sample, positive());
    loss_real("epsilon", "PPO ratio clip", &LossConfig::epsilon, in_range(0.0, 1.0, false, true));
    loss_real("clip_threshold", "token clip probability", &LossConfig::clip_threshold,
              in_range(0.0, 1.0, false, false));
    loss_real("beta", "K3 KL weight", &LossConfig::beta, nonnegative());
    b.push_back({{"train", "normalization", "sample | token"},
                 [](const RunConfig& c) { return std::string(to_string(c.train.loss.normalization)); },
                 [](RunConfig& c, const std::string& v) {
                     c.train.loss.normalization = parse_normalization(v);
                 },
                 [](const RunConfig&) { return std::string(); }});
    loss_real("mask_rate", "mask probability (random_mask)", &LossConfig::mask_rate,
              in_range(0.0, 1.0, false, false));
    b.push_back(real_key("train", "std_floor", "advantage std floor", &RunConfig::train,
                         &TrainConfig::std_floor, positive()));
    b.push_back(real_key("train", "lr", "Adam learning rate", &RunConfig::train, &TrainConfig::lr,
                         positive()));
    b.push_back(real_key("train", "max_grad_norm", "gradient clip norm, inf disables",
                         &RunConfig::train, &TrainConfig::max_grad_norm, positive()));
    b.push_back(size_key("train", "total_steps", "outer steps", &RunConfig::train,
                         &TrainConfig::total_steps, 0));

    // eval
    b.push_back({{"eval", "count", "evaluation prompts"},
                 [](const RunConfig& c) { return std::to_string(c.eval_count); },
                 [](RunConfig& c, const std::string& v) { c.eval_count = parse_u64(v); },
                 [](const RunConfig& c) {
                     return c.eval_count < 1 ? std::string("must be >= 1") : std::string();
                 }});
    b.push_back(real_key("eval", "threshold", "confidence threshold (dynamic rows)",
                         &RunConfig::eval_decode, &DecodeConfig::threshold,
                         in_range(0.0, 1.0, true, true)));
    b.push_back(size_key("eval", "k_per_step", "positions per step (static rows)",
                         &RunConfig::eval_decode, &DecodeConfig::k_per_step, 1));
    b.push_back(size_key("eval", "block_size", "block length", &RunConfig::eval_decode,
                         &DecodeConfig::block_size, 1));
    return b;
}

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> b = make_bindings();
    return b;
}

std::string qualified(const ConfigKey& k) { return k.section + "." + k.name; }

}  // namespace

TaskSpec RunConfig::resolved_task() const {
    TaskSpec t = task;
    if (t.response_length == 0) t.response_length = default_response_length(t.family);
    return t;
}

ModelConfig RunConfig::resolved_model() const {
    ModelConfig m = model;
    m.mask_id = tok::kMask;
    m.seed = Rng::derive_seed(seed, "model_init");
    return m;
}

PretrainConfig RunConfig::resolved_pretrain() const {
    PretrainConfig p = pretrain;
    p.task = resolved_task();
    p.seed = Rng::derive_seed(seed, "pretrain_run");
    return p;
}

TrainConfig RunConfig::resolved_train() const {
    TrainConfig t = train;
    t.task = resolved_task();
    t.seed = Rng::derive_seed(seed, "train_run");
    t.decode = decode;
    return t;
}

EvalConfig RunConfig::resolved_eval() const {
    EvalConfig e;
    e.task = resolved_task();
    e.count = eval_count;
    e.seed = Rng::derive_seed(seed, "eval_run");
    e.decode = eval_decode;
    e.decode.sampler = SamplerConfig{};
    return e;
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& b : bindings()) k.push_back(b.key);
        return k;
    }();
    return keys;
}

void validate(const RunConfig& cfg) {
    std::vector<std::string> bad;
    std::string message;
    for (const auto& b : bindings()) {
        const std::string err = b.check(cfg);
        if (err.empty()) continue;
        bad.push_back(qualified(b.key));
        message += (message.empty() ? "" : "; ") + qualified(b.key) + " " + err;
    }
    if (!bad.empty()) throw ConfigError(message, bad);
}

RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    std::map<std::string, const Binding*> by_name;
    std::set<std::string> sections;
    for (const auto& b : bindings()) {
        by_name[qualified(b.key)] = &b;
        sections.insert(b.key.section);
    }

    std::vector<std::string> bad;
    std::string message;
    const auto fail = [&](const std::string& key, const std::string& why) {
        bad.push_back(key);
        message += (message.empty() ? "" : "; ") + key + " " + why;
    };

    std::set<std::string> seen;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                fail("line" + std::to_string(lineno), "malformed section header");
                continue;
            }
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (sections.count(section) == 0) fail(section, "unknown section");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail("line" + std::to_string(lineno), "expected key = value");
            continue;
        }
        const std::string key = section + "." + trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (sections.count(section) == 0) continue;  // already reported
        const auto it = by_name.find(key);
        if (it == by_name.end()) {
            fail(key, "unknown key");
            continue;
        }
        if (!seen.insert(key).second) {
            fail(key, "duplicate key");
            continue;
        }
        try {
            it->second->set(cfg, value);
        } catch (const std::exception& e) {
            fail(key, e.what());
        }
    }

    for (const auto& b : bindings()) {
        const std::string k = qualified(b.key);
        if (std::find(bad.begin(), bad.end(), k) != bad.end()) continue;
        const std::string err = b.check(cfg);
        if (!err.empty()) fail(k, err);
    }
    if (!bad.empty()) throw ConfigError(message, bad);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path, {"config"});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_ini(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& b : bindings()) {
        if (b.key.section != section) {
            if (!section.empty()) out << '\n';
            section = b.key.section;
            out << '[' << section << "]\n";
        }
        out << b.key.name << " = " << b.get(cfg) << '\n';
    }
    return out.str();
}

}  // namespace rldf
