#pragma once

#include <cstdint>
#include <vector>

#include "rldf/model.hpp"

namespace rldf {

double global_norm(const Gradients& grads);

// Scales grads by max_norm / |g| when |g| > max_norm. Returns the norm
// before clipping. A non-finite max_norm disables clipping.
double clip_grad_norm(Gradients& grads, double max_norm);

class Sgd {
public:
    explicit Sgd(double lr) : lr_(lr) {}
    // Returns false and leaves params untouched when grads are not finite.
    bool step(ParamStore& params, const Gradients& grads);

private:
    double lr_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Returns false and leaves params and moments untouched when grads are
    // not finite. Bumps params.version on success.
    bool step(ParamStore& params, const Gradients& grads);

    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    std::uint64_t steps() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace rldf
