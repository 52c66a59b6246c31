#include "rldf/optim.hpp"

#include <cmath>

#include "rldf/error.hpp"

namespace rldf {

double global_norm(const Gradients& grads) {
    double s = 0.0;
    for (double g : grads.values()) s += g * g;
    return std::sqrt(s);
}

double clip_grad_norm(Gradients& grads, double max_norm) {
    const double norm = global_norm(grads);
    if (std::isfinite(max_norm) && std::isfinite(norm) && norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grads.values()) g *= scale;
    }
    return norm;
}

bool Sgd::step(ParamStore& params, const Gradients& grads) {
    if (params.size() != grads.size()) throw InvalidArgument("sgd: layout mismatch");
    if (!grads.all_finite()) return false;
    auto p = params.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
    ++params.version;
    return true;
}

bool Adam::step(ParamStore& params, const Gradients& grads) {
    if (params.size() != grads.size()) throw InvalidArgument("adam: layout mismatch");
    if (!grads.all_finite()) return false;
    if (m_.empty()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto p = params.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    ++params.version;
    return true;
}

}  // namespace rldf
