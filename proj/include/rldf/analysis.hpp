#pragma once

// Diagnostics over recorded trajectories and loss records.

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/policy_loss.hpp"

namespace rldf {

struct TokenStat {
    std::size_t position = 0;
    int step = 0;
    double prob = 0.0;
    double entropy = 0.0;  // nats
    double normalized_step = 0.0;  // (T - step) / T, 0 at the first event
};

std::vector<TokenStat> token_stats(const DenoiseTrajectory& traj);
std::vector<TokenStat> token_stats(std::span<const DenoiseTrajectory> trajs);

double pearson(std::span<const double> x, std::span<const double> y);
// Rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);
// Ranks starting at 1, ties get the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

struct Correlation {
    double pearson = 0.0;
    double spearman = 0.0;
    std::size_t count = 0;
};

// Probability vs entropy. Needs at least 3 stats; throws UndefinedCorrelation
// when either variable has zero variance.
Correlation correlate(std::span<const TokenStat> stats);

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;  // counts[i] covers [edges[i], edges[i+1]), last bin closed
    std::size_t total = 0;
    double high_confidence = 0.0;     // fraction with p >= 0.9
};

std::vector<double> default_bin_edges();
// Values outside [edges.front(), edges.back()] are clamped into the end bins.
Histogram bin_probabilities(std::span<const TokenStat> stats,
                            std::span<const double> edges = {});

struct ProfileBucket {
    double lo = 0.0, hi = 0.0;
    std::size_t count = 0;
    double mean = 0.0;
    double q25 = 0.0, median = 0.0, q75 = 0.0;
};

// Commit probability by normalized step in `buckets` equal-width buckets.
std::vector<ProfileBucket> confidence_profile(std::span<const TokenStat> stats,
                                              std::size_t buckets = 20);

struct UtilityRecord {
    std::string label;  // e.g. "x0_clip"
    double grad_norm = 0.0;
    double loss = 0.0;
    std::vector<StepLoss> steps;
};

struct UtilityRow {
    std::string label;
    std::size_t batches = 0;
    double mean_grad_norm = 0.0;
    double mean_loss = 0.0;
    double mean_token_utility = 0.0;
};

// One row per label in first-seen order; an empty input gives an empty table.
std::vector<UtilityRow> utility_report(std::span<const UtilityRecord> records);

// CSV with a header row; numbers use 6 significant digits.
void write_histogram_csv(std::ostream& out, const Histogram& h);
void write_profile_csv(std::ostream& out, std::span<const ProfileBucket> rows);
void write_correlation_csv(std::ostream& out, const Correlation& c);
void write_utility_csv(std::ostream& out, std::span<const UtilityRow> rows);
std::string csv_number(double v);

}  // namespace rldf
