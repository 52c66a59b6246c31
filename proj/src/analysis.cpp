#include "rldf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rldf/error.hpp"

namespace rldf {

std::vector<TokenStat> token_stats(const DenoiseTrajectory& traj) {
    std::vector<TokenStat> out;
    const double T = static_cast<double>(traj.num_steps());
    for (const auto& ev : traj.events) {
        for (std::size_t j = 0; j < ev.positions.size(); ++j) {
            TokenStat s;
            s.position = ev.positions[j];
            s.step = ev.step;
            s.prob = ev.probs[j];
            s.entropy = j < ev.entropies.size() ? ev.entropies[j] : 0.0;
            s.normalized_step = (T - static_cast<double>(ev.step)) / T;
            out.push_back(s);
        }
    }
    return out;
}

std::vector<TokenStat> token_stats(std::span<const DenoiseTrajectory> trajs) {
    std::vector<TokenStat> out;
    for (const auto& t : trajs) {
        auto s = token_stats(t);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InvalidArgument("pearson: length mismatch");
    if (x.size() < 3) throw UndefinedCorrelation("correlation needs at least 3 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("correlation: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

Correlation correlate(std::span<const TokenStat> stats) {
    std::vector<double> p, h;
    for (const auto& s : stats) {
        p.push_back(s.prob);
        h.push_back(s.entropy);
    }
    Correlation c;
    c.count = stats.size();
    c.pearson = pearson(p, h);
    c.spearman = spearman(p, h);
    return c;
}

std::vector<double> default_bin_edges() {
    std::vector<double> e;
    for (int i = 0; i <= 10; ++i) e.push_back(i / 10.0);
    return e;
}

Histogram bin_probabilities(std::span<const TokenStat> stats, std::span<const double> edges) {
    Histogram h;
    h.edges = edges.empty() ? default_bin_edges() : std::vector<double>(edges.begin(), edges.end());
    if (h.edges.size() < 2 || !std::is_sorted(h.edges.begin(), h.edges.end())) {
        throw InvalidArgument("bin_probabilities: need at least 2 ascending edges");
    }
    const std::size_t bins = h.edges.size() - 1;
    h.counts.assign(bins, 0);
    std::size_t high = 0;
    for (const auto& s : stats) {
        const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), s.prob);
        std::size_t bin = it == h.edges.begin() ? 0 : static_cast<std::size_t>(it - h.edges.begin()) - 1;
        bin = std::min(bin, bins - 1);
        ++h.counts[bin];
        if (s.prob >= 0.9) ++high;
    }
    h.total = stats.size();
    h.high_confidence = h.total == 0 ? 0.0 : static_cast<double>(high) / static_cast<double>(h.total);
    return h;
}

namespace {

// Linear interpolation between order statistics.
double quantile(std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - f) + sorted[hi] * f;
}

}  // namespace

std::vector<ProfileBucket> confidence_profile(std::span<const TokenStat> stats,
                                              std::size_t buckets) {
    if (buckets < 1) throw InvalidArgument("confidence_profile: buckets must be >= 1");
    std::vector<std::vector<double>> vals(buckets);
    for (const auto& s : stats) {
        auto b = static_cast<std::size_t>(s.normalized_step * static_cast<double>(buckets));
        vals[std::min(b, buckets - 1)].push_back(s.prob);
    }
    std::vector<ProfileBucket> out(buckets);
    for (std::size_t b = 0; b < buckets; ++b) {
        auto& r = out[b];
        r.lo = static_cast<double>(b) / static_cast<double>(buckets);
        r.hi = static_cast<double>(b + 1) / static_cast<double>(buckets);
        auto& v = vals[b];
        r.count = v.size();
        if (v.empty()) continue;
        std::sort(v.begin(), v.end());
        r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        r.q25 = quantile(v, 0.25);
        r.median = quantile(v, 0.5);
        r.q75 = quantile(v, 0.75);
    }
    return out;
}

std::vector<UtilityRow> utility_report(std::span<const UtilityRecord> records) {
    std::vector<UtilityRow> rows;
    std::vector<std::size_t> step_counts;
    for (const auto& rec : records) {
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const UtilityRow& r) { return r.label == rec.label; });
        if (it == rows.end()) {
            rows.push_back({rec.label, 0, 0.0, 0.0, 0.0});
            step_counts.push_back(0);
            it = rows.end() - 1;
        }
        const auto idx = static_cast<std::size_t>(it - rows.begin());
        ++it->batches;
        it->mean_grad_norm += rec.grad_norm;
        it->mean_loss += rec.loss;
        for (const auto& s : rec.steps) {
            it->mean_token_utility += s.token_utility;
            ++step_counts[idx];
        }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double n = static_cast<double>(rows[i].batches);
        rows[i].mean_grad_norm /= n;
        rows[i].mean_loss /= n;
        if (step_counts[i] > 0) rows[i].mean_token_utility /= static_cast<double>(step_counts[i]);
    }
    return rows;
}

std::string csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
    out << "bin_lo,bin_hi,count,fraction\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        const double frac =
            h.total == 0 ? 0.0 : static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
        out << csv_number(h.edges[i]) << ',' << csv_number(h.edges[i + 1]) << ',' << h.counts[i]
            << ',' << csv_number(frac) << '\n';
    }
}

void write_profile_csv(std::ostream& out, std::span<const ProfileBucket> rows) {
    out << "step_lo,step_hi,count,mean,q25,median,q75\n";
    for (const auto& r : rows) {
        out << csv_number(r.lo) << ',' << csv_number(r.hi) << ',' << r.count << ','
            << csv_number(r.mean) << ',' << csv_number(r.q25) << ',' << csv_number(r.median) << ','
            << csv_number(r.q75) << '\n';
    }
}

void write_correlation_csv(std::ostream& out, const Correlation& c) {
    out << "count,pearson,spearman\n";
    out << c.count << ',' << csv_number(c.pearson) << ',' << csv_number(c.spearman) << '\n';
}

void write_utility_csv(std::ostream& out, std::span<const UtilityRow> rows) {
    out << "label,batches,mean_grad_norm,mean_loss,mean_token_utility\n";
    for (const auto& r : rows) {
        out << r.label << ',' << r.batches << ',' << csv_number(r.mean_grad_norm) << ','
            << csv_number(r.mean_loss) << ',' << csv_number(r.mean_token_utility) << '\n';
    }
}

}  // namespace rldf
