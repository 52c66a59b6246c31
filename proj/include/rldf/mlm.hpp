#pragma once

#include <span>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/model.hpp"
#include "rldf/rng.hpp"

namespace rldf {

struct MlmLoss {
    double value = 0.0;
    GradientTape tape;
    std::size_t masked = 0;
    bool skipped = false;  // no position was masked after one resample
    std::size_t skipped_samples = 0;
};

// Masked-token cross entropy on one clean sequence:
//   (1/t) * mean over masked i of -log p(x0_i | x_t)
// where x_t = forward_mask(x0, t). Requires t in (0, 1].
MlmLoss mlm_loss(const Model& model, const ParamStore& params, const SequenceState& x0,
                 double mask_ratio, Rng& rng);

// Batch mean of mlm_loss; skipped samples contribute zero.
MlmLoss mlm_batch_loss(const Model& model, const ParamStore& params,
                       std::span<const SequenceState> batch, std::span<const double> mask_ratios,
                       Rng& rng);

// Loss on an already-masked state (no sampling, no gradient); used for
// held-out evaluation with fixed masks.
double mlm_loss_fixed(const Model& model, const ParamStore& params, const SequenceState& x0,
                      const SequenceState& xt, double mask_ratio);

}  // namespace rldf
