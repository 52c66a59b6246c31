#include "rldf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "rldf/error.hpp"

namespace rldf {

namespace {

void check_row(std::span<const double> row) {
    if (row.empty()) throw NumericError("sample_token: empty distribution row");
    double total = 0.0;
    for (double p : row) {
        if (std::isnan(p)) throw NumericError("sample_token: NaN in distribution row");
        if (p < 0.0) throw NumericError("sample_token: negative probability");
        total += p;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw NumericError("sample_token: distribution row has no finite positive mass");
    }
}

// q_i proportional to p_i^(1/temperature), computed in log space.
std::vector<double> tempered(std::span<const double> row, double temperature) {
    std::vector<double> logits(row.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < row.size(); ++i) {
        logits[i] = row[i] > 0.0 ? std::log(row[i]) / temperature
                                 : -std::numeric_limits<double>::infinity();
        max_logit = std::max(max_logit, logits[i]);
    }
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - max_logit);
        z += l;
    }
    for (double& l : logits) l /= z;
    return logits;
}

}  // namespace

SampledToken sample_token(std::span<const double> row, const SamplerConfig& cfg, Rng& rng) {
    check_row(row);
    if (cfg.temperature < 0.0 || std::isnan(cfg.temperature)) {
        throw InvalidArgument("sample_token: temperature must be >= 0");
    }
    if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) {
        throw InvalidArgument("sample_token: top_p must be in (0, 1]");
    }

    if (cfg.temperature == 0.0) {
        const auto best = argmax_index(row);
        return {static_cast<TokenId>(best), row[best]};
    }

    const std::vector<double> q = tempered(row, cfg.temperature);

    if (cfg.mode == SampleMode::gumbel_argmax) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < q.size(); ++i) {
            // Noise is drawn for every entry so the stream advances identically
            // regardless of the row's support.
            const double g = -std::log(-std::log(rng.uniform_open()));
            if (q[i] <= 0.0) continue;
            const double score = std::log(q[i]) + g;
            if (score > best_score) {
                best_score = score;
                best = i;
            }
        }
        return {static_cast<TokenId>(best), q[best]};
    }

    // Categorical with nucleus truncation. Order by probability, lowest
    // index first on ties.
    std::vector<std::size_t> order(q.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return q[a] > q[b]; });
    std::size_t keep = order.size();
    if (cfg.top_p < 1.0) {
        double cum = 0.0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            cum += q[order[r]];
            if (cum >= cfg.top_p) {
                keep = r + 1;
                break;
            }
        }
    }
    double mass = 0.0;
    for (std::size_t r = 0; r < keep; ++r) mass += q[order[r]];
    const double u = rng.uniform() * mass;
    double cum = 0.0;
    std::size_t chosen = order[0];
    for (std::size_t r = 0; r < keep; ++r) {
        const std::size_t i = order[r];
        if (q[i] <= 0.0) break;
        cum += q[i];
        chosen = i;
        if (u < cum) break;
    }
    return {static_cast<TokenId>(chosen), q[chosen]};
}

std::string_view to_string(SampleMode mode) {
    switch (mode) {
        case SampleMode::gumbel_argmax: return "gumbel_argmax";
        case SampleMode::categorical: return "categorical";
    }
    return "?";
}

SampleMode parse_sample_mode(std::string_view name) {
    if (name == "gumbel_argmax") return SampleMode::gumbel_argmax;
    if (name == "categorical") return SampleMode::categorical;
    throw InvalidArgument("unknown sample mode: " + std::string(name));
}

}  // namespace rldf
