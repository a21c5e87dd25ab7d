#pragma once

// Parameter registry and the transformer building blocks shared by the
// encoders, the connector, and the LM decoder. Everything here is templated
// on the scalar type: the pipeline uses the float instantiation, the
// finite-difference tests reuse the identical code in double.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "medvlm/errors.hpp"
#include "medvlm/rng.hpp"
#include "medvlm/tensor.hpp"

namespace medvlm {

constexpr double kInitStd = 0.02;  // truncated normal, all projections and queries

template <class S>
struct BasicParameter {
    std::string name;  // dot-separated path, unique within a model
    BasicTensor<S> tensor;
    bool trainable = true;
};

// Namespace of a parameter = first dotted component ("encoder2d", "lm", ...).
inline std::string param_namespace(const std::string& name) {
    const auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

template <class S>
class ParamStoreT {
public:
    BasicTensor<S> add(const std::string& name, BasicTensor<S> t) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        t.set_requires_grad(true);
        index_[name] = items_.size();
        items_.push_back(BasicParameter<S>{name, t, true});
        return t;
    }

    void remove(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        items_.erase(items_.begin() + static_cast<long>(it->second));
        reindex();
    }

    BasicParameter<S>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &items_[it->second];
    }

    const BasicParameter<S>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &items_[it->second];
    }

    std::vector<BasicParameter<S>>& items() { return items_; }
    const std::vector<BasicParameter<S>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    void set_trainable(const std::string& name, bool v) {
        auto* p = find(name);
        if (!p) throw ConfigError("unknown parameter: " + name);
        p->trainable = v;
        p->tensor.set_requires_grad(v);
    }

    void zero_grads() {
        for (auto& p : items_) p.tensor.zero_grad();
    }

    int64_t count_scalars() const {
        int64_t n = 0;
        for (const auto& p : items_) n += p.tensor.numel();
        return n;
    }

private:
    void reindex() {
        index_.clear();
        for (size_t i = 0; i < items_.size(); ++i) index_[items_[i].name] = i;
    }

    std::vector<BasicParameter<S>> items_;  // registration order, kept stable
    std::unordered_map<std::string, size_t> index_;
};

namespace init {

// Initialization streams depend only on (seed, parameter name), so the same
// name always gets identical values regardless of construction order.
template <class S>
BasicTensor<S> trunc_normal(const Rng& root, const std::string& name, Shape shape, double std) {
    Rng r = root.split(name);
    std::vector<S> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = static_cast<S>(r.truncated_normal(std));
    return BasicTensor<S>::from(std::move(shape), std::move(data));
}

template <class S>
BasicTensor<S> zeros(Shape shape) {
    return BasicTensor<S>::zeros(std::move(shape));
}

template <class S>
BasicTensor<S> ones(Shape shape) {
    return BasicTensor<S>::filled(std::move(shape), S(1));
}

}  // namespace init

// ---------------------------------------------------------------------------
// Linear with optional low-rank adapter
// ---------------------------------------------------------------------------

template <class S>
struct LoraAdapterT {
    BasicTensor<S> a;  // [in x r]
    BasicTensor<S> b;  // [r x out], zero-initialized
    S scale;           // alpha / r
};

template <class S>
struct LinearT {
    std::string name;
    BasicTensor<S> weight;  // [in x out]
    BasicTensor<S> bias;    // [out]; undefined when bias-free
    std::optional<LoraAdapterT<S>> lora;

    LinearT() = default;

    LinearT(ParamStoreT<S>& ps, const Rng& rng, std::string path, int in, int out,
            bool with_bias = true)
        : name(std::move(path)) {
        weight = ps.add(name + ".weight", init::trunc_normal<S>(rng, name + ".weight", {in, out}, kInitStd));
        if (with_bias) bias = ps.add(name + ".bias", init::zeros<S>({out}));
    }

    int in_dim() const { return weight.size(0); }
    int out_dim() const { return weight.size(1); }

    BasicTensor<S> forward(const BasicTensor<S>& x) const {
        auto y = ops::matmul(x, weight);
        if (bias.defined()) y = ops::add(y, bias);
        if (lora)
            y = ops::add(y, ops::mul_scalar(ops::matmul(ops::matmul(x, lora->a), lora->b), lora->scale));
        return y;
    }
};

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

template <class S>
struct LayerNormT {
    BasicTensor<S> gamma;
    BasicTensor<S> beta;
    S eps = S(1e-5);

    LayerNormT() = default;

    LayerNormT(ParamStoreT<S>& ps, const std::string& path, int d) {
        gamma = ps.add(path + ".gamma", init::ones<S>({d}));
        beta = ps.add(path + ".beta", init::zeros<S>({d}));
    }

    BasicTensor<S> forward(const BasicTensor<S>& x) const {
        return ops::layer_norm(x, gamma, beta, eps);
    }
};

// ---------------------------------------------------------------------------
// GELU MLP (hidden = 4x width)
// ---------------------------------------------------------------------------

template <class S>
struct FeedForwardT {
    LinearT<S> fc1, fc2;

    FeedForwardT() = default;

    FeedForwardT(ParamStoreT<S>& ps, const Rng& rng, const std::string& path, int d) {
        fc1 = LinearT<S>(ps, rng, path + ".fc1", d, 4 * d);
        fc2 = LinearT<S>(ps, rng, path + ".fc2", 4 * d, d);
    }

    BasicTensor<S> forward(const BasicTensor<S>& x) const {
        return fc2.forward(ops::gelu(fc1.forward(x)));
    }
};

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product self-attention
// ---------------------------------------------------------------------------

template <class S>
struct SelfAttentionT {
    int heads = 0;
    int head_dim = 0;
    bool causal = false;
    LinearT<S> wq, wk, wv, wo;

    SelfAttentionT() = default;

    SelfAttentionT(ParamStoreT<S>& ps, const Rng& rng, const std::string& path, int d, int n_heads,
                   bool causal_mask)
        : heads(n_heads), head_dim(d / n_heads), causal(causal_mask) {
        if (d % n_heads != 0)
            throw ConfigError("attention width " + std::to_string(d) + " not divisible by " +
                              std::to_string(n_heads) + " heads");
        wq = LinearT<S>(ps, rng, path + ".wq", d, d);
        wk = LinearT<S>(ps, rng, path + ".wk", d, d);
        wv = LinearT<S>(ps, rng, path + ".wv", d, d);
        wo = LinearT<S>(ps, rng, path + ".wo", d, d);
    }

    BasicTensor<S> forward(const BasicTensor<S>& x) const {
        const auto q = wq.forward(x);
        const auto k = wk.forward(x);
        const auto v = wv.forward(x);
        const S inv_scale = S(1) / std::sqrt(S(head_dim));
        std::vector<BasicTensor<S>> per_head;
        per_head.reserve(static_cast<size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            const int c0 = h * head_dim;
            auto qh = ops::slice_last(q, c0, head_dim);
            auto kh = ops::slice_last(k, c0, head_dim);
            auto vh = ops::slice_last(v, c0, head_dim);
            auto scores = ops::mul_scalar(ops::matmul(qh, ops::transpose(kh)), inv_scale);
            if (causal) scores = ops::add_causal_mask(scores);
            per_head.push_back(ops::matmul(ops::softmax(scores, 1), vh));
        }
        return wo.forward(ops::concat(per_head, 1));
    }
};

// ---------------------------------------------------------------------------
// Pre-norm transformer block: x += attn(ln1(x)); x += mlp(ln2(x))
// ---------------------------------------------------------------------------

template <class S>
struct TransformerBlockT {
    LayerNormT<S> ln1, ln2;
    SelfAttentionT<S> attn;
    FeedForwardT<S> mlp;

    TransformerBlockT() = default;

    TransformerBlockT(ParamStoreT<S>& ps, const Rng& rng, const std::string& path, int d, int heads,
                      bool causal)
        : ln1(ps, path + ".ln1", d),
          ln2(ps, path + ".ln2", d),
          attn(ps, rng, path + ".attn", d, heads, causal),
          mlp(ps, rng, path + ".mlp", d) {}

    BasicTensor<S> forward(const BasicTensor<S>& x) const {
        auto h = ops::add(x, attn.forward(ln1.forward(x)));
        return ops::add(h, mlp.forward(ln2.forward(h)));
    }
};

// ---------------------------------------------------------------------------
// Cross-attention over learned queries (the token compressor core).
// Single layer, no positional encoding over keys: the output is invariant
// to key order, which is part of the compressor's contract.
// ---------------------------------------------------------------------------

template <class S>
struct CrossAttentionT {
    int heads = 0;
    int head_dim = 0;
    BasicTensor<S> queries;  // [n_queries x d], learned
    LinearT<S> wq, wk, wv, wo;

    CrossAttentionT() = default;

    CrossAttentionT(ParamStoreT<S>& ps, const Rng& rng, const std::string& path, int d, int n_heads,
                    int n_queries)
        : heads(n_heads), head_dim(d / n_heads) {
        if (d % n_heads != 0)
            throw ConfigError("cross-attention width " + std::to_string(d) + " not divisible by " +
                              std::to_string(n_heads) + " heads");
        if (n_queries < 1) throw ConfigError("cross-attention needs at least one query");
        queries = ps.add(path + ".queries",
                         init::trunc_normal<S>(rng, path + ".queries", {n_queries, d}, kInitStd));
        wq = LinearT<S>(ps, rng, path + ".wq", d, d);
        wk = LinearT<S>(ps, rng, path + ".wk", d, d);
        wv = LinearT<S>(ps, rng, path + ".wv", d, d);
        wo = LinearT<S>(ps, rng, path + ".wo", d, d);
    }

    int n_queries() const { return queries.size(0); }

    // keys_values: [M x d] with M >= 1. Output: [n_queries x d].
    BasicTensor<S> forward(const BasicTensor<S>& keys_values) const {
        if (keys_values.ndim() != 2 || keys_values.size(0) < 1)
            throw ShapeError("cross-attention input must be a non-empty [M x d] sequence, got " +
                             shape_str(keys_values.shape()));
        const auto q = wq.forward(queries);
        const auto k = wk.forward(keys_values);
        const auto v = wv.forward(keys_values);
        const S inv_scale = S(1) / std::sqrt(S(head_dim));
        std::vector<BasicTensor<S>> per_head;
        per_head.reserve(static_cast<size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            const int c0 = h * head_dim;
            auto qh = ops::slice_last(q, c0, head_dim);
            auto kh = ops::slice_last(k, c0, head_dim);
            auto vh = ops::slice_last(v, c0, head_dim);
            auto scores = ops::mul_scalar(ops::matmul(qh, ops::transpose(kh)), inv_scale);
            per_head.push_back(ops::matmul(ops::softmax(scores, 1), vh));
        }
        return wo.forward(ops::concat(per_head, 1));
    }
};

// ---------------------------------------------------------------------------
// Two-layer projector bridging encoder width to LM width:
// Linear(d_in -> d_out), GELU, Linear(d_out -> d_out).
// ---------------------------------------------------------------------------

template <class S>
struct MlpProjectorT {
    LinearT<S> fc1, fc2;

    MlpProjectorT() = default;

    MlpProjectorT(ParamStoreT<S>& ps, const Rng& rng, const std::string& path, int d_in, int d_out) {
        fc1 = LinearT<S>(ps, rng, path + ".fc1", d_in, d_out);
        fc2 = LinearT<S>(ps, rng, path + ".fc2", d_out, d_out);
    }

    BasicTensor<S> forward(const BasicTensor<S>& x) const {
        if (x.size(x.ndim() - 1) != fc1.in_dim())
            throw ShapeError("projector expects width " + std::to_string(fc1.in_dim()) + ", got " +
                             shape_str(x.shape()));
        return fc2.forward(ops::gelu(fc1.forward(x)));
    }
};

using Parameter = BasicParameter<float>;
using ParamStore = ParamStoreT<float>;
using Linear = LinearT<float>;
using LayerNorm = LayerNormT<float>;
using FeedForward = FeedForwardT<float>;
using SelfAttention = SelfAttentionT<float>;
using TransformerBlock = TransformerBlockT<float>;
using CrossAttention = CrossAttentionT<float>;
using MlpProjector = MlpProjectorT<float>;

}  // namespace medvlm
