#include "rldf/tasks.hpp"

#include <algorithm>
#include <string>

#include "rldf/error.hpp"

namespace rldf {

std::string render_tokens(std::span<const TokenId> tokens) {
    std::string s;
    for (TokenId t : tokens) {
        if (tok::is_digit(t)) {
            s.push_back(static_cast<char>('0' + t));
            continue;
        }
        switch (t) {
            case tok::kPlus: s.push_back('+'); break;
            case tok::kEquals: s.push_back('='); break;
            case tok::kAnswer: s.push_back('A'); break;
            case tok::kEos: s.push_back('$'); break;
            case tok::kPad: s.push_back('_'); break;
            case tok::kReverse: s.push_back('R'); break;
            case tok::kSort: s.push_back('S'); break;
            case tok::kMask: s.push_back('?'); break;
            default: s.push_back('#'); break;
        }
    }
    return s;
}

std::string_view to_string(TaskFamily f) {
    switch (f) {
        case TaskFamily::addition: return "addition";
        case TaskFamily::reverse: return "reverse";
        case TaskFamily::sort: return "sort";
    }
    return "?";
}

TaskFamily parse_task_family(std::string_view name) {
    if (name == "addition") return TaskFamily::addition;
    if (name == "reverse") return TaskFamily::reverse;
    if (name == "sort") return TaskFamily::sort;
    throw InvalidArgument("unknown task family: " + std::string(name));
}

std::optional<std::vector<TokenId>> extract_answer(std::span<const TokenId> response) {
    const auto it = std::find(response.rbegin(), response.rend(), tok::kAnswer);
    if (it == response.rend()) return std::nullopt;
    std::vector<TokenId> digits;
    for (auto p = it.base(); p != response.end() && tok::is_digit(*p); ++p) digits.push_back(*p);
    if (digits.empty()) return std::nullopt;
    return digits;
}

namespace {

std::vector<TokenId> canonical(std::span<const TokenId> digits, AnswerCanon canon) {
    std::vector<TokenId> out(digits.begin(), digits.end());
    if (canon == AnswerCanon::numeric) {
        const auto first = std::find_if(out.begin(), out.end(), [](TokenId t) { return t != 0; });
        out.erase(out.begin(), first);
        if (out.empty()) out.push_back(0);
    }
    return out;
}

}  // namespace

double reward_binary(std::span<const TokenId> response, std::span<const TokenId> target,
                     AnswerCanon canon) {
    const auto got = extract_answer(response);
    if (!got) return 0.0;
    return canonical(*got, canon) == canonical(target, canon) ? 1.0 : 0.0;
}

double reward_passrate(std::span<const TokenId> response, std::span<const Check> checks) {
    if (checks.empty()) throw InvalidArgument("reward_passrate: no checks");
    const auto got = extract_answer(response);
    if (!got) return 0.0;
    std::size_t passed = 0;
    for (const auto& c : checks) {
        if (c.index < got->size() && (*got)[c.index] == c.expected) ++passed;
    }
    return static_cast<double>(passed) / static_cast<double>(checks.size());
}

double TaskInstance::reward(std::span<const TokenId> response) const {
    switch (family) {
        case TaskFamily::addition: return reward_binary(response, answer, AnswerCanon::numeric);
        case TaskFamily::reverse: return reward_binary(response, answer, AnswerCanon::exact);
        case TaskFamily::sort: return reward_passrate(response, checks);
    }
    return 0.0;
}

std::size_t default_response_length(TaskFamily f) {
    switch (f) {
        case TaskFamily::addition: return 6;   // ANS + up to 3 digits + EOS + PAD
        case TaskFamily::reverse: return 8;    // ANS + 5 digits + EOS + PAD
        case TaskFamily::sort: return 10;      // ANS + 8 digits + EOS
    }
    return 8;
}

namespace {

constexpr std::size_t kReverseDigits = 5;
constexpr std::size_t kSortDigits = 8;

TokenId digit(Rng& rng) { return static_cast<TokenId>(rng.below(10)); }

std::vector<TokenId> to_digits(int value) {
    std::vector<TokenId> out;
    const std::string s = std::to_string(value);
    for (char c : s) out.push_back(static_cast<TokenId>(c - '0'));
    return out;
}

}  // namespace

TaskInstance make_task(const TaskSpec& spec, Rng& rng) {
    TaskInstance t;
    t.family = spec.family;
    switch (spec.family) {
        case TaskFamily::addition: {
            const int a = 10 + static_cast<int>(rng.below(90));
            const int b = 10 + static_cast<int>(rng.below(90));
            t.prompt = {static_cast<TokenId>(a / 10), static_cast<TokenId>(a % 10), tok::kPlus,
                        static_cast<TokenId>(b / 10), static_cast<TokenId>(b % 10), tok::kEquals};
            t.answer = to_digits(a + b);
            break;
        }
        case TaskFamily::reverse: {
            t.prompt.push_back(tok::kReverse);
            std::vector<TokenId> ds;
            for (std::size_t i = 0; i < kReverseDigits; ++i) ds.push_back(digit(rng));
            t.prompt.insert(t.prompt.end(), ds.begin(), ds.end());
            t.prompt.push_back(tok::kEquals);
            t.answer.assign(ds.rbegin(), ds.rend());
            break;
        }
        case TaskFamily::sort: {
            t.prompt.push_back(tok::kSort);
            std::vector<TokenId> ds;
            for (std::size_t i = 0; i < kSortDigits; ++i) ds.push_back(digit(rng));
            t.prompt.insert(t.prompt.end(), ds.begin(), ds.end());
            t.prompt.push_back(tok::kEquals);
            std::sort(ds.begin(), ds.end());
            t.answer = ds;
            for (std::size_t i = 0; i < ds.size(); ++i) t.checks.push_back({i, ds[i]});
            break;
        }
    }
    if (spec.response_length < t.answer.size() + 2) {
        throw InvalidArgument("make_task: response_length too small for the answer");
    }
    t.reference.push_back(tok::kAnswer);
    t.reference.insert(t.reference.end(), t.answer.begin(), t.answer.end());
    t.reference.push_back(tok::kEos);
    t.reference.resize(spec.response_length, tok::kPad);
    return t;
}

Dataset generate_dataset(const TaskSpec& spec, std::size_t count, std::uint64_t seed) {
    Dataset ds;
    ds.manifest = {seed, spec.family, count, 0};
    Rng rng = Rng::derive(seed, "dataset");
    for (std::size_t i = 0; i < count; ++i) {
        ds.tasks.push_back(make_task(spec, rng));
        ds.manifest.max_len = std::max(ds.manifest.max_len,
                                       ds.tasks.back().prompt.size() + spec.response_length);
    }
    return ds;
}

}  // namespace rldf
