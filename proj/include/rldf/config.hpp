#pragma once

// Run configuration in a flat INI dialect:
//
//   # comment
//   [section]
//   key = value
//
// Sections: run, model, task, decode, pretrain, train, eval. Every key has a
// default, so an empty file is a valid config. Unknown sections or keys,
// duplicates and out-of-range values are all reported together in one
// ConfigError whose keys name each violation as "section.key".

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rldf/model.hpp"
#include "rldf/trainer.hpp"

namespace rldf {

struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model{};
    TaskSpec task{TaskFamily::addition, 0};  // response_length 0 means the family default
    DecodeConfig decode = TrainConfig::default_rollout_decode();  // rollouts
    PretrainConfig pretrain{};
    TrainConfig train{};
    std::size_t checkpoint_every = 0;  // 0: final checkpoint only
    bool log_trajectories = true;
    std::size_t eval_count = 256;
    DecodeConfig eval_decode{};        // argmax; strategy/max_steps set per row

    // Sub-configs with task, seed and decode settings filled in.
    TaskSpec resolved_task() const;
    ModelConfig resolved_model() const;
    PretrainConfig resolved_pretrain() const;
    TrainConfig resolved_train() const;
    EvalConfig resolved_eval() const;
};

struct ConfigKey {
    std::string section;
    std::string name;
    std::string doc;
};

// All keys in canonical order.
const std::vector<ConfigKey>& config_keys();

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

// Every key in canonical order; parse_config(to_ini(c)) == c field by field.
std::string to_ini(const RunConfig& cfg);

// Throws ConfigError naming every violated key.
void validate(const RunConfig& cfg);

}  // namespace rldf
