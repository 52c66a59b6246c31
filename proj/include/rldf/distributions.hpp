#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rldf {

using TokenId = std::int32_t;

// One categorical distribution per response position, stored row-major
// (positions x vocab). Rows sum to 1 and entries are nonnegative.
struct PositionDistributions {
    std::size_t positions = 0;
    std::size_t vocab = 0;
    std::vector<double> probs;

    PositionDistributions() = default;
    PositionDistributions(std::size_t n_positions, std::size_t vocab_size)
        : positions(n_positions), vocab(vocab_size), probs(n_positions * vocab_size, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {probs.data() + i * vocab, vocab}; }
    std::span<double> row(std::size_t i) { return {probs.data() + i * vocab, vocab}; }

    double prob(std::size_t i, TokenId token) const {
        return probs[i * vocab + static_cast<std::size_t>(token)];
    }
};

// Shannon entropy in nats; zero-probability entries contribute nothing.
inline double distribution_entropy(std::span<const double> row) {
    double h = 0.0;
    for (double p : row) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

// Index of the largest entry, lowest index on ties.
inline std::size_t argmax_index(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i) {
        if (row[i] > row[best]) best = i;
    }
    return best;
}

}  // namespace rldf
