#include "rldf/mlm.hpp"

#include <cmath>

#include "rldf/error.hpp"

namespace rldf {

namespace {

void check_ratio(double mask_ratio) {
    if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) {
        throw InvalidArgument("mlm_loss: mask ratio must be in (0, 1]");
    }
}

// Adds weight * loss(x0) to out, recording the scaled logit seeds.
void accumulate_mlm(const Model& model, const ParamStore& params, const SequenceState& x0,
                    double mask_ratio, double weight, Rng& rng, MlmLoss& out) {
    check_ratio(mask_ratio);
    if (!x0.fully_unmasked()) throw InvalidArgument("mlm_loss: x0 must be clean");

    SequenceState xt = forward_mask(x0, mask_ratio, rng);
    if (xt.masked_count() == 0) xt = forward_mask(x0, mask_ratio, rng);
    const std::size_t masked = xt.masked_count();
    out.masked += masked;
    if (masked == 0) {
        out.skipped = true;
        ++out.skipped_samples;
        return;
    }

    ForwardCache cache = model.forward(params, xt.prompt, xt.response);
    const std::size_t V = cache.probs.vocab;
    std::vector<double> dlogits(cache.resp_len * V, 0.0);
    const double scale = weight / (mask_ratio * static_cast<double>(masked));
    for (std::size_t i = 0; i < xt.length(); ++i) {
        if (!xt.is_masked(i)) continue;
        out.value -= scale * std::log(cache.probs.prob(i, x0.response[i]));
        add_logprob_grad(std::span<double>(dlogits).subspan(i * V, V), cache.probs.row(i),
                         x0.response[i], -scale);
    }
    out.tape.record(std::move(cache), std::move(dlogits));
}

}  // namespace

MlmLoss mlm_loss(const Model& model, const ParamStore& params, const SequenceState& x0,
                 double mask_ratio, Rng& rng) {
    MlmLoss out;
    accumulate_mlm(model, params, x0, mask_ratio, 1.0, rng, out);
    return out;
}

MlmLoss mlm_batch_loss(const Model& model, const ParamStore& params,
                       std::span<const SequenceState> batch, std::span<const double> mask_ratios,
                       Rng& rng) {
    if (batch.size() != mask_ratios.size()) {
        throw InvalidArgument("mlm_batch_loss: batch and ratio counts differ");
    }
    if (batch.empty()) throw InvalidArgument("mlm_batch_loss: empty batch");
    MlmLoss out;
    const double weight = 1.0 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        accumulate_mlm(model, params, batch[b], mask_ratios[b], weight, rng, out);
    }
    return out;
}

double mlm_loss_fixed(const Model& model, const ParamStore& params, const SequenceState& x0,
                      const SequenceState& xt, double mask_ratio) {
    check_ratio(mask_ratio);
    const std::size_t masked = xt.masked_count();
    if (masked == 0) return 0.0;
    const auto probs = model.predict(params, xt);
    double loss = 0.0;
    for (std::size_t i = 0; i < xt.length(); ++i) {
        if (xt.is_masked(i)) loss -= std::log(probs.prob(i, x0.response[i]));
    }
    return loss / (mask_ratio * static_cast<double>(masked));
}

}  // namespace rldf
