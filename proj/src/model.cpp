#include "rldf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rldf/error.hpp"
#include "rldf/kernels.hpp"
#include "rldf/rng.hpp"

namespace rldf {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw InvalidArgument("model: vocab_size must be >= 2");
    if (embed_dim < 1 || n_layers < 1 || n_heads < 1 || ff_dim < 1 || max_len < 1) {
        throw InvalidArgument("model: dimensions must be positive");
    }
    if (embed_dim % n_heads != 0) {
        throw InvalidArgument("model: embed_dim must be divisible by n_heads");
    }
    if (mask_id < 0 || static_cast<std::size_t>(mask_id) >= vocab_size) {
        throw InvalidArgument("model: mask_id must be < vocab_size");
    }
    if (!(init_std >= 0.0)) throw InvalidArgument("model: init_std must be >= 0");
}

// ---------------------------------------------------------------------------
// ParamStore

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape) {
    if (by_name_.count(name) != 0) throw InvalidArgument("ParamStore: duplicate tensor " + name);
    TensorInfo info;
    info.size = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                std::multiplies<std::size_t>());
    info.offset = data_.size();
    info.name = name;
    info.shape = std::move(shape);
    data_.resize(data_.size() + info.size, 0.0);
    by_name_.emplace(std::move(name), tensors_.size());
    tensors_.push_back(std::move(info));
    return tensors_.back().offset;
}

std::span<double> ParamStore::tensor(std::size_t index) {
    const auto& t = tensors_.at(index);
    return std::span<double>(data_).subspan(t.offset, t.size);
}

std::span<const double> ParamStore::tensor(std::size_t index) const {
    const auto& t = tensors_.at(index);
    return std::span<const double>(data_).subspan(t.offset, t.size);
}

std::span<double> ParamStore::tensor(const std::string& name) {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvalidArgument("ParamStore: no tensor " + name);
    return tensor(it->second);
}

std::span<const double> ParamStore::tensor(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvalidArgument("ParamStore: no tensor " + name);
    return tensor(it->second);
}

ParamStore ParamStore::zeros_like() const {
    ParamStore out = *this;
    out.set_zero();
    out.version = 0;
    return out;
}

void ParamStore::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool ParamStore::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool ParamStore::same_layout(const ParamStore& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name != other.tensors_[i].name ||
            tensors_[i].shape != other.tensors_[i].shape) {
            return false;
        }
    }
    return true;
}

void ParamStore::add_scaled(const ParamStore& other, double scale) {
    if (other.data_.size() != data_.size()) throw InvalidArgument("ParamStore: layout mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

inline double gelu_grad(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

void layernorm_forward(const double* x, std::size_t rows, std::size_t d, const double* gamma,
                       const double* beta, double* xhat, double* rstd, double* out) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* xr = x + i * d;
        double mean = 0.0;
        for (std::size_t c = 0; c < d; ++c) mean += xr[c];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        rstd[i] = rs;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (xr[c] - mean) * rs;
            xhat[i * d + c] = h;
            out[i * d + c] = h * gamma[c] + beta[c];
        }
    }
}

// Accumulates into dx, dgamma and dbeta.
void layernorm_backward(const double* dy, const double* xhat, const double* rstd, std::size_t rows,
                        std::size_t d, const double* gamma, double* dx, double* dgamma,
                        double* dbeta) {
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* dyr = dy + i * d;
        const double* xr = xhat + i * d;
        double mean_dxhat = 0.0;
        double mean_dxhat_x = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            dgamma[c] += dyr[c] * xr[c];
            dbeta[c] += dyr[c];
            dxhat[c] = dyr[c] * gamma[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_x += dxhat[c] * xr[c];
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_x /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
            dx[i * d + c] += rstd[i] * (dxhat[c] - mean_dxhat - xr[c] * mean_dxhat_x);
        }
    }
}

void add_bias(double* y, std::size_t rows, std::size_t cols, const double* bias) {
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < cols; ++c) y[i * cols + c] += bias[c];
    }
}

void add_colsum(const double* dy, std::size_t rows, std::size_t cols, double* dbias) {
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < cols; ++c) dbias[c] += dy[i * cols + c];
    }
}

// y = x W + b, x: rows x in, W: in x out
std::vector<double> linear(std::span<const double> x, std::size_t rows, std::size_t in,
                           std::span<const double> w, const double* b, std::size_t out) {
    std::vector<double> y(rows * out);
    kernels::matmul(x, w, y, rows, in, out);
    add_bias(y.data(), rows, out, b);
    return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const ParamStore layout = zero_params();
    total_size_ = layout.size();
    const auto off = [&](const std::string& name) {
        for (const auto& t : layout.tensors()) {
            if (t.name == name) return t.offset;
        }
        throw InvalidState("missing tensor " + name);
    };
    tok_emb_ = off("tok_emb");
    pos_emb_ = off("pos_emb");
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        layers_.push_back({off(p + "ln1.g"), off(p + "ln1.b"), off(p + "attn.wq"),
                           off(p + "attn.bq"), off(p + "attn.wk"), off(p + "attn.bk"),
                           off(p + "attn.wv"), off(p + "attn.bv"), off(p + "attn.wo"),
                           off(p + "attn.bo"), off(p + "ln2.g"), off(p + "ln2.b"),
                           off(p + "mlp.w1"), off(p + "mlp.b1"), off(p + "mlp.w2"),
                           off(p + "mlp.b2")});
    }
    lnf_g_ = off("lnf.g");
    lnf_b_ = off("lnf.b");
    w_out_ = off("head.w");
    b_out_ = off("head.b");
}

ParamStore Model::zero_params() const {
    const std::size_t d = cfg_.embed_dim, v = cfg_.vocab_size, f = cfg_.ff_dim;
    ParamStore ps;
    ps.add("tok_emb", {v, d});
    ps.add("pos_emb", {cfg_.max_len, d});
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        ps.add(p + "ln1.g", {d});
        ps.add(p + "ln1.b", {d});
        ps.add(p + "attn.wq", {d, d});
        ps.add(p + "attn.bq", {d});
        ps.add(p + "attn.wk", {d, d});
        ps.add(p + "attn.bk", {d});
        ps.add(p + "attn.wv", {d, d});
        ps.add(p + "attn.bv", {d});
        ps.add(p + "attn.wo", {d, d});
        ps.add(p + "attn.bo", {d});
        ps.add(p + "ln2.g", {d});
        ps.add(p + "ln2.b", {d});
        ps.add(p + "mlp.w1", {d, f});
        ps.add(p + "mlp.b1", {f});
        ps.add(p + "mlp.w2", {f, d});
        ps.add(p + "mlp.b2", {d});
    }
    ps.add("lnf.g", {d});
    ps.add("lnf.b", {d});
    ps.add("head.w", {d, v});
    ps.add("head.b", {v});
    return ps;
}

ParamStore Model::init_params() const {
    ParamStore ps = zero_params();
    Rng rng = Rng::derive(cfg_.seed, "init");
    for (std::size_t i = 0; i < ps.tensors().size(); ++i) {
        const auto& info = ps.tensors()[i];
        auto t = ps.tensor(i);
        const bool is_gain = info.name.ends_with(".g");
        const bool is_bias = info.shape.size() == 1 && !is_gain;
        if (is_gain) {
            std::fill(t.begin(), t.end(), 1.0);
        } else if (!is_bias) {
            for (double& w : t) w = rng.normal(0.0, cfg_.init_std);
        }
    }
    return ps;
}

void Model::check_params(const ParamStore& params) const {
    if (params.size() != total_size_) throw InvalidArgument("model: parameter layout mismatch");
}

ForwardCache Model::forward(const ParamStore& params, std::span<const TokenId> prompt,
                            std::span<const TokenId> response) const {
    check_params(params);
    const std::size_t d = cfg_.embed_dim, V = cfg_.vocab_size, F = cfg_.ff_dim;
    const std::size_t H = cfg_.n_heads, hd = d / H;
    const std::size_t n = prompt.size() + response.size();
    if (n > cfg_.max_len) throw InvalidArgument("model: sequence longer than max_len");
    if (response.empty()) throw InvalidArgument("model: empty response");

    const double* P = params.values().data();
    ForwardCache c;
    c.n = n;
    c.resp_offset = prompt.size();
    c.resp_len = response.size();
    c.tokens.assign(prompt.begin(), prompt.end());
    c.tokens.insert(c.tokens.end(), response.begin(), response.end());

    std::vector<double> x(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto tok = c.tokens[i];
        if (tok < 0 || static_cast<std::size_t>(tok) >= V) {
            throw InvalidArgument("model: token id out of range");
        }
        const double* e = P + tok_emb_ + static_cast<std::size_t>(tok) * d;
        const double* pe = P + pos_emb_ + i * d;
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] = e[j] + pe[j];
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    c.layers.resize(cfg_.n_layers);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        const auto& o = layers_[l];
        auto& L = c.layers[l];
        L.x_in = x;
        L.ln1_xhat.resize(n * d);
        L.ln1_rstd.resize(n);
        L.ln1_out.resize(n * d);
        layernorm_forward(x.data(), n, d, P + o.ln1_g, P + o.ln1_b, L.ln1_xhat.data(),
                          L.ln1_rstd.data(), L.ln1_out.data());

        const auto wspan = [&](std::size_t off, std::size_t sz) {
            return std::span<const double>(P + off, sz);
        };
        L.q = linear(L.ln1_out, n, d, wspan(o.wq, d * d), P + o.bq, d);
        L.k = linear(L.ln1_out, n, d, wspan(o.wk, d * d), P + o.bk, d);
        L.v = linear(L.ln1_out, n, d, wspan(o.wv, d * d), P + o.bv, d);

        L.att.assign(H * n * n, 0.0);
        L.ctx.assign(n * d, 0.0);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < n; ++i) {
                double* a = L.att.data() + (h * n + i) * n;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t e = 0; e < hd; ++e) {
                        s += L.q[i * d + h * hd + e] * L.k[j * d + h * hd + e];
                    }
                    a[j] = s * scale;
                    mx = std::max(mx, a[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    a[j] = std::exp(a[j] - mx);
                    z += a[j];
                }
                for (std::size_t j = 0; j < n; ++j) a[j] /= z;
                double* out = L.ctx.data() + i * d + h * hd;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* vr = L.v.data() + j * d + h * hd;
                    for (std::size_t e = 0; e < hd; ++e) out[e] += a[j] * vr[e];
                }
            }
        }
        const auto y = linear(L.ctx, n, d, wspan(o.wo, d * d), P + o.bo, d);
        for (std::size_t i = 0; i < n * d; ++i) x[i] += y[i];
        L.x_mid = x;

        L.ln2_xhat.resize(n * d);
        L.ln2_rstd.resize(n);
        L.ln2_out.resize(n * d);
        layernorm_forward(x.data(), n, d, P + o.ln2_g, P + o.ln2_b, L.ln2_xhat.data(),
                          L.ln2_rstd.data(), L.ln2_out.data());
        L.ff_pre = linear(L.ln2_out, n, d, wspan(o.w1, d * F), P + o.b1, F);
        L.ff_act.resize(n * F);
        for (std::size_t i = 0; i < n * F; ++i) L.ff_act[i] = gelu(L.ff_pre[i]);
        const auto f = linear(L.ff_act, n, F, wspan(o.w2, F * d), P + o.b2, d);
        for (std::size_t i = 0; i < n * d; ++i) x[i] += f[i];
    }
    c.x_out = x;

    const std::size_t R = c.resp_len;
    c.lnf_xhat.resize(R * d);
    c.lnf_rstd.resize(R);
    c.lnf_out.resize(R * d);
    layernorm_forward(x.data() + c.resp_offset * d, R, d, P + lnf_g_, P + lnf_b_,
                      c.lnf_xhat.data(), c.lnf_rstd.data(), c.lnf_out.data());
    c.logits = linear(c.lnf_out, R, d, std::span<const double>(P + w_out_, d * V), P + b_out_, V);

    const auto mask = static_cast<std::size_t>(cfg_.mask_id);
    c.probs = PositionDistributions(R, V);
    for (std::size_t i = 0; i < R; ++i) {
        const double* lg = c.logits.data() + i * V;
        auto row = c.probs.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < V; ++t) {
            if (t != mask) mx = std::max(mx, lg[t]);
        }
        double z = 0.0;
        for (std::size_t t = 0; t < V; ++t) {
            row[t] = t == mask ? 0.0 : std::exp(lg[t] - mx);
            z += row[t];
        }
        for (double& p : row) p /= z;
    }
    return c;
}

PositionDistributions Model::predict(const ParamStore& params, const SequenceState& state) const {
    return forward(params, state.prompt, state.response).probs;
}

void Model::backward(const ParamStore& params, const ForwardCache& c,
                     std::span<const double> dlogits_in, Gradients& grads) const {
    check_params(params);
    check_params(grads);
    const std::size_t d = cfg_.embed_dim, V = cfg_.vocab_size, F = cfg_.ff_dim;
    const std::size_t H = cfg_.n_heads, hd = d / H;
    const std::size_t n = c.n, R = c.resp_len;
    if (dlogits_in.size() != R * V) throw InvalidArgument("backward: dlogits has wrong size");

    const double* P = params.values().data();
    double* G = grads.values().data();
    const auto cspan = [&](std::size_t off, std::size_t sz) {
        return std::span<const double>(P + off, sz);
    };
    const auto gspan = [&](std::size_t off, std::size_t sz) { return std::span<double>(G + off, sz); };

    std::vector<double> dlog(dlogits_in.begin(), dlogits_in.end());
    const auto mask = static_cast<std::size_t>(cfg_.mask_id);
    for (std::size_t i = 0; i < R; ++i) dlog[i * V + mask] = 0.0;

    // Output head and final LayerNorm.
    add_colsum(dlog.data(), R, V, G + b_out_);
    kernels::matmul_at_acc(c.lnf_out, dlog, gspan(w_out_, d * V), R, d, V);
    std::vector<double> dlnf(R * d);
    kernels::matmul_bt(dlog, cspan(w_out_, d * V), dlnf, R, V, d);
    std::vector<double> dx(n * d, 0.0);
    layernorm_backward(dlnf.data(), c.lnf_xhat.data(), c.lnf_rstd.data(), R, d, P + lnf_g_,
                       dx.data() + c.resp_offset * d, G + lnf_g_, G + lnf_b_);

    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (std::size_t li = cfg_.n_layers; li-- > 0;) {
        const auto& o = layers_[li];
        const auto& L = c.layers[li];

        // MLP residual branch.
        add_colsum(dx.data(), n, d, G + o.b2);
        kernels::matmul_at_acc(L.ff_act, dx, gspan(o.w2, F * d), n, F, d);
        std::vector<double> dff(n * F);
        kernels::matmul_bt(dx, cspan(o.w2, F * d), dff, n, d, F);
        for (std::size_t i = 0; i < n * F; ++i) dff[i] *= gelu_grad(L.ff_pre[i]);
        add_colsum(dff.data(), n, F, G + o.b1);
        kernels::matmul_at_acc(L.ln2_out, dff, gspan(o.w1, d * F), n, d, F);
        std::vector<double> dln2(n * d);
        kernels::matmul_bt(dff, cspan(o.w1, d * F), dln2, n, F, d);
        layernorm_backward(dln2.data(), L.ln2_xhat.data(), L.ln2_rstd.data(), n, d, P + o.ln2_g,
                           dx.data(), G + o.ln2_g, G + o.ln2_b);

        // Attention residual branch.
        add_colsum(dx.data(), n, d, G + o.bo);
        kernels::matmul_at_acc(L.ctx, dx, gspan(o.wo, d * d), n, d, d);
        std::vector<double> dctx(n * d);
        kernels::matmul_bt(dx, cspan(o.wo, d * d), dctx, n, d, d);

        std::vector<double> dq(n * d, 0.0), dk(n * d, 0.0), dv(n * d, 0.0);
        std::vector<double> datt(n), dscore(n);
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < n; ++i) {
                const double* a = L.att.data() + (h * n + i) * n;
                const double* dc = dctx.data() + i * d + h * hd;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* vr = L.v.data() + j * d + h * hd;
                    double s = 0.0;
                    for (std::size_t e = 0; e < hd; ++e) s += dc[e] * vr[e];
                    datt[j] = s;
                    dot += a[j] * s;
                    double* dvr = dv.data() + j * d + h * hd;
                    for (std::size_t e = 0; e < hd; ++e) dvr[e] += a[j] * dc[e];
                }
                for (std::size_t j = 0; j < n; ++j) dscore[j] = a[j] * (datt[j] - dot) * scale;
                double* dqr = dq.data() + i * d + h * hd;
                const double* qr = L.q.data() + i * d + h * hd;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* kr = L.k.data() + j * d + h * hd;
                    double* dkr = dk.data() + j * d + h * hd;
                    for (std::size_t e = 0; e < hd; ++e) {
                        dqr[e] += dscore[j] * kr[e];
                        dkr[e] += dscore[j] * qr[e];
                    }
                }
            }
        }

        std::vector<double> dln1(n * d, 0.0), tmp(n * d);
        const std::pair<const std::vector<double>*, std::pair<std::size_t, std::size_t>> proj[] = {
            {&dq, {o.wq, o.bq}}, {&dk, {o.wk, o.bk}}, {&dv, {o.wv, o.bv}}};
        for (const auto& [dproj, wb] : proj) {
            add_colsum(dproj->data(), n, d, G + wb.second);
            kernels::matmul_at_acc(L.ln1_out, *dproj, gspan(wb.first, d * d), n, d, d);
            kernels::matmul_bt(*dproj, cspan(wb.first, d * d), tmp, n, d, d);
            for (std::size_t i = 0; i < n * d; ++i) dln1[i] += tmp[i];
        }
        layernorm_backward(dln1.data(), L.ln1_xhat.data(), L.ln1_rstd.data(), n, d, P + o.ln1_g,
                           dx.data(), G + o.ln1_g, G + o.ln1_b);
    }

    for (std::size_t i = 0; i < n; ++i) {
        double* de = G + tok_emb_ + static_cast<std::size_t>(c.tokens[i]) * d;
        double* dp = G + pos_emb_ + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            de[j] += dx[i * d + j];
            dp[j] += dx[i * d + j];
        }
    }
}

// ---------------------------------------------------------------------------
// GradientTape

void GradientTape::record(ForwardCache cache, std::vector<double> dlogits) {
    entries_.push_back({std::move(cache), std::move(dlogits)});
}

void GradientTape::append(GradientTape&& other, double scale) {
    for (auto& e : other.entries_) {
        if (scale != 1.0) {
            for (double& v : e.dlogits) v *= scale;
        }
        entries_.push_back(std::move(e));
    }
    other.entries_.clear();
}

Gradients GradientTape::gradient(const Model& model, const ParamStore& params) const {
    Gradients g = params.zeros_like();
    accumulate(model, params, g);
    return g;
}

void GradientTape::accumulate(const Model& model, const ParamStore& params,
                              Gradients& grads) const {
    for (const auto& e : entries_) model.backward(params, e.cache, e.dlogits, grads);
}

void add_logprob_grad(std::span<double> dlogit_row, std::span<const double> prob_row,
                      TokenId token, double coef) {
    for (std::size_t t = 0; t < prob_row.size(); ++t) dlogit_row[t] -= coef * prob_row[t];
    dlogit_row[static_cast<std::size_t>(token)] += coef;
}

}  // namespace rldf
