#include "rldf/step_weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rldf/error.hpp"

namespace rldf {

double step_uncertainty(const UnmaskEvent& event, bool* clamped) {
    if (event.probs.empty()) throw InvalidArgument("step_uncertainty: event has no probabilities");
    double sum = 0.0;
    bool any_clamped = false;
    for (double p : event.probs) {
        if (std::isnan(p) || p > 1.0 + 1e-12) {
            throw InvalidArgument("step_uncertainty: probability outside (0, 1]");
        }
        if (p < kProbFloor) {
            p = kProbFloor;
            any_clamped = true;
        }
        sum -= std::log(p);
    }
    if (clamped != nullptr) *clamped = any_clamped;
    return sum / static_cast<double>(event.probs.size());
}

std::vector<double> step_softmax(std::span<const double> uncertainty, double tau) {
    if (!(tau > 0.0)) throw InvalidArgument("step_softmax: temperature must be > 0");
    if (uncertainty.empty()) return {};
    const double mx = *std::max_element(uncertainty.begin(), uncertainty.end());
    std::vector<double> w(uncertainty.size());
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp((uncertainty[i] - mx) / tau);
        z += w[i];
    }
    bool floored = false;
    for (double& v : w) {
        v /= z;
        if (v < kWeightFloor) {
            v = kWeightFloor;
            floored = true;
        }
    }
    if (floored) {
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (double& v : w) v /= s;
    }
    return w;
}

std::vector<std::size_t> sample_timesteps(std::span<const double> uncertainty, std::size_t k,
                                          double tau, Rng& rng) {
    if (k < 1) throw InvalidArgument("sample_timesteps: k must be >= 1");
    if (!(tau > 0.0)) throw InvalidArgument("sample_timesteps: temperature must be > 0");
    const std::size_t T = uncertainty.size();
    std::vector<std::size_t> chosen;
    if (k >= T) {
        chosen.resize(T);
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
        return chosen;
    }

    if (tau <= kDeterministicTau) {
        std::vector<std::size_t> order(T);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return uncertainty[a] > uncertainty[b];
        });
        chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(chosen.begin(), chosen.end());
        return chosen;
    }

    std::vector<double> w = step_softmax(uncertainty, tau);
    for (std::size_t draw = 0; draw < k; ++draw) {
        double total = 0.0;
        for (double v : w) total += v;
        const double u = rng.uniform() * total;
        double cum = 0.0;
        std::size_t pick = T;
        for (std::size_t i = 0; i < T; ++i) {
            if (w[i] <= 0.0) continue;
            cum += w[i];
            pick = i;
            if (u < cum) break;
        }
        chosen.push_back(pick);
        w[pick] = 0.0;
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

StepWeightTable step_weight_table(const DenoiseTrajectory& traj, double tau) {
    StepWeightTable table;
    for (const auto& ev : traj.events) {
        bool clamped = false;
        table.steps.push_back(ev.step);
        table.uncertainty.push_back(step_uncertainty(ev, &clamped));
        table.clamped = table.clamped || clamped;
    }
    table.weights = step_softmax(table.uncertainty, tau);
    return table;
}

}  // namespace rldf
