#pragma once

// Tiny bidirectional transformer denoiser p(x0 | x_t) in 64-bit floating
// point with an explicit reverse-mode pass.
//
// Architecture: token + learned positional embeddings, n_layers pre-LN
// blocks (multi-head self-attention over the whole sequence, GELU MLP), a
// final LayerNorm and an untied output head. The MASK token is never
// predicted: its logit is excluded from the softmax and its probability is 0.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rldf/diffusion.hpp"
#include "rldf/distributions.hpp"

namespace rldf {

struct ModelConfig {
    std::size_t vocab_size = 18;
    std::size_t embed_dim = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t ff_dim = 128;
    std::size_t max_len = 128;
    TokenId mask_id = 17;
    std::uint64_t seed = 0;
    double init_std = 0.02;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

// Named real tensors in one contiguous buffer. Gradients use the same type
// and layout, so optimizers work on the flat view.
class ParamStore {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape);

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::size_t size() const { return data_.size(); }

    std::span<double> tensor(std::size_t index);
    std::span<const double> tensor(std::size_t index) const;
    std::span<double> tensor(const std::string& name);
    std::span<const double> tensor(const std::string& name) const;
    const std::vector<TensorInfo>& tensors() const { return tensors_; }
    bool has(const std::string& name) const { return by_name_.count(name) != 0; }

    ParamStore zeros_like() const;
    void set_zero();
    bool all_finite() const;
    bool same_layout(const ParamStore& other) const;
    void add_scaled(const ParamStore& other, double scale);

    std::uint64_t version = 0;

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        return a.same_layout(b) && a.data_ == b.data_ && a.version == b.version;
    }

private:
    std::vector<TensorInfo> tensors_;
    std::map<std::string, std::size_t> by_name_;
    std::vector<double> data_;
};

using Gradients = ParamStore;

// Activations kept from a forward pass for the backward pass.
struct ForwardCache {
    std::size_t n = 0;            // prompt + response length
    std::size_t resp_offset = 0;  // index of the first response position
    std::size_t resp_len = 0;
    std::vector<TokenId> tokens;

    struct Layer {
        std::vector<double> x_in;       // n x d residual input
        std::vector<double> ln1_xhat;   // n x d
        std::vector<double> ln1_rstd;   // n
        std::vector<double> ln1_out;    // n x d
        std::vector<double> q, k, v;    // n x d
        std::vector<double> att;        // heads x n x n
        std::vector<double> ctx;        // n x d
        std::vector<double> x_mid;      // n x d after attention residual
        std::vector<double> ln2_xhat;
        std::vector<double> ln2_rstd;
        std::vector<double> ln2_out;
        std::vector<double> ff_pre;     // n x ff
        std::vector<double> ff_act;     // n x ff
    };
    std::vector<Layer> layers;
    std::vector<double> x_out;     // n x d final residual
    std::vector<double> lnf_xhat;  // resp_len x d
    std::vector<double> lnf_rstd;  // resp_len
    std::vector<double> lnf_out;   // resp_len x d
    std::vector<double> logits;    // resp_len x vocab
    PositionDistributions probs;   // resp_len x vocab
};

class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    // Parameters in canonical layout, initialized from config().seed.
    ParamStore init_params() const;
    // Canonical layout filled with zeros.
    ParamStore zero_params() const;

    ForwardCache forward(const ParamStore& params, std::span<const TokenId> prompt,
                         std::span<const TokenId> response) const;

    PositionDistributions predict(const ParamStore& params, const SequenceState& state) const;

    // Accumulates d(loss)/d(params) into grads given d(loss)/d(logits) for the
    // response rows (resp_len x vocab). The MASK column is ignored.
    void backward(const ParamStore& params, const ForwardCache& cache,
                  std::span<const double> dlogits, Gradients& grads) const;

private:
    struct LayerOffsets {
        std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };
    void check_params(const ParamStore& params) const;

    ModelConfig cfg_;
    std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, w_out_ = 0, b_out_ = 0;
    std::vector<LayerOffsets> layers_;
    std::size_t total_size_ = 0;
};

// Adapter exposing a model with fixed parameters as a Denoiser.
class ModelDenoiser final : public Denoiser {
public:
    ModelDenoiser(const Model& model, const ParamStore& params) : model_(model), params_(params) {}
    PositionDistributions predict(const SequenceState& state) const override {
        return model_.predict(params_, state);
    }

private:
    const Model& model_;
    const ParamStore& params_;
};

// Records forward passes together with the derivative of a scalar loss with
// respect to their logits; gradient() replays the backward passes.
class GradientTape {
public:
    void record(ForwardCache cache, std::vector<double> dlogits);
    // Moves other's entries in, scaling their logit seeds.
    void append(GradientTape&& other, double scale = 1.0);
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    Gradients gradient(const Model& model, const ParamStore& params) const;
    void accumulate(const Model& model, const ParamStore& params, Gradients& grads) const;

private:
    struct Entry {
        ForwardCache cache;
        std::vector<double> dlogits;
    };
    std::vector<Entry> entries_;
};

struct TapedLoss {
    double value = 0.0;
    GradientTape tape;
};

// Adds coef * d(log p[token])/d(logits) = coef * (onehot(token) - p) to a
// dlogits row.
void add_logprob_grad(std::span<double> dlogit_row, std::span<const double> prob_row,
                      TokenId token, double coef);

}  // namespace rldf
