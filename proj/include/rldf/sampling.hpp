#pragma once

#include <span>
#include <string_view>

#include "rldf/distributions.hpp"
#include "rldf/rng.hpp"

namespace rldf {

enum class SampleMode {
    gumbel_argmax,  // argmax(log p / temperature + Gumbel noise)
    categorical,    // temperature scaling, optional top-p truncation, then draw
};

struct SamplerConfig {
    SampleMode mode = SampleMode::gumbel_argmax;
    double temperature = 0.0;  // 0 selects the argmax token
    double top_p = 1.0;        // categorical only
};

struct SampledToken {
    TokenId token = 0;
    // Probability of the token under the temperature-scaled distribution
    // (before any Gumbel noise or top-p truncation). At temperature 0 this
    // is the model probability of the argmax token.
    double prob = 0.0;
};

// Draws one token from a probability row. Throws NumericError on rows
// containing NaN or with no positive mass, InvalidArgument on negative
// temperature or top_p outside (0, 1].
SampledToken sample_token(std::span<const double> row, const SamplerConfig& cfg, Rng& rng);

std::string_view to_string(SampleMode mode);
SampleMode parse_sample_mode(std::string_view name);

}  // namespace rldf
