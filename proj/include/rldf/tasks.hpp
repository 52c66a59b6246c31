#pragma once

// Synthetic verifiable tasks over a small token vocabulary.
//
//   addition  "a1 a2 + b1 b2 ="        -> "ANS s.. EOS PAD.."   binary reward
//   reverse   "REV d1 .. d5 ="         -> "ANS d5 .. d1 EOS .." binary reward
//   sort      "SORT d1 .. d8 ="        -> "ANS sorted EOS .."   pass rate over positions
//
// The answer is the run of digits following the last ANS token.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rldf/distributions.hpp"
#include "rldf/rng.hpp"

namespace rldf {

namespace tok {
// Digits 0-9 use ids 0-9.
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kEquals = 11;
inline constexpr TokenId kAnswer = 12;
inline constexpr TokenId kEos = 13;
inline constexpr TokenId kPad = 14;
inline constexpr TokenId kReverse = 15;
inline constexpr TokenId kSort = 16;
inline constexpr TokenId kMask = 17;
inline constexpr std::size_t kVocabSize = 18;

inline constexpr bool is_digit(TokenId t) { return t >= 0 && t <= 9; }
}  // namespace tok

// Human-readable rendering, e.g. "12+34=" or "A46$__" (A=ANS, $=EOS, _=PAD).
std::string render_tokens(std::span<const TokenId> tokens);

enum class TaskFamily { addition, reverse, sort };

std::string_view to_string(TaskFamily f);
TaskFamily parse_task_family(std::string_view name);

// Canonicalization applied before comparing binary answers.
enum class AnswerCanon {
    numeric,  // leading zeros stripped ("046" == "46")
    exact,    // digit strings compared verbatim
};

struct Check {
    std::size_t index;  // position within the extracted answer
    TokenId expected;
};

struct TaskInstance {
    TaskFamily family = TaskFamily::addition;
    std::vector<TokenId> prompt;
    std::vector<TokenId> reference;  // canonical clean response (length = response_length)
    std::vector<TokenId> answer;     // expected answer digits
    std::vector<Check> checks;       // pass-rate checks (sort)

    // Verifier: binary exact-answer reward, or pass rate for sort.
    double reward(std::span<const TokenId> response) const;
};

// Digits following the last ANS token; nullopt when there is no ANS token or
// no digit after it.
std::optional<std::vector<TokenId>> extract_answer(std::span<const TokenId> response);

// 1 iff the extracted answer equals target after canonicalization.
double reward_binary(std::span<const TokenId> response, std::span<const TokenId> target,
                     AnswerCanon canon = AnswerCanon::numeric);

// Fraction of checks satisfied by the extracted answer; 0 when unparseable.
// Throws InvalidArgument on an empty check list.
double reward_passrate(std::span<const TokenId> response, std::span<const Check> checks);

struct TaskSpec {
    TaskFamily family = TaskFamily::addition;
    std::size_t response_length = 6;
};

std::size_t default_response_length(TaskFamily f);

TaskInstance make_task(const TaskSpec& spec, Rng& rng);

struct DatasetManifest {
    std::uint64_t seed = 0;
    TaskFamily family = TaskFamily::addition;
    std::size_t count = 0;
    std::size_t max_len = 0;  // prompt + response tokens
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<TaskInstance> tasks;
};

Dataset generate_dataset(const TaskSpec& spec, std::size_t count, std::uint64_t seed);

}  // namespace rldf
