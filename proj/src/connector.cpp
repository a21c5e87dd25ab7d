#include "medvlm/connector.hpp"

#include "medvlm/errors.hpp"

namespace medvlm {

const char* connector_kind_name(ConnectorKind k) {
    switch (k) {
        case ConnectorKind::mlp: return "mlp";
        case ConnectorKind::attn_compress: return "attn_compress";
        case ConnectorKind::avg_pool: return "avg_pool";
    }
    return "?";
}

ConnectorKind connector_kind_from_name(const std::string& name) {
    if (name == "mlp") return ConnectorKind::mlp;
    if (name == "attn_compress") return ConnectorKind::attn_compress;
    if (name == "avg_pool") return ConnectorKind::avg_pool;
    throw ConfigError("unknown connector kind: '" + name + "'");
}

void ConnectorConfig::validate() const {
    if (d_i < 1 || d_t < 1) throw ConfigError("connector widths must be positive");
    if (kind == ConnectorKind::attn_compress) {
        if (l_attn < 1) throw ConfigError("attn_compress requires l_attn >= 1");
        if (heads < 1 || d_i % heads != 0)
            throw ConfigError("attn_compress: d_i " + std::to_string(d_i) + " not divisible by " +
                              std::to_string(heads) + " heads");
    }
}

Connector::Connector(ParamStore& ps, const Rng& rng, const ConnectorConfig& cfg,
                     const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    proj_ = MlpProjector(ps, rng, prefix + ".mlp", cfg.d_i, cfg.d_t);
    if (cfg.kind == ConnectorKind::attn_compress)
        attn_.emplace(ps, rng, prefix + ".attn", cfg.d_i, cfg.heads, cfg.l_attn);
}

Tensor Connector::project(const Tensor& tokens) const {
    if (tokens.ndim() != 2 || tokens.size(1) != cfg_.d_i)
        throw ShapeError("connector expects [L x " + std::to_string(cfg_.d_i) + "], got " +
                         shape_str(tokens.shape()));
    return proj_.forward(tokens);
}

Tensor Connector::compress_attention(const Tensor& flat_tokens) const {
    if (!attn_) throw ConfigError("compress_attention called on a " +
                                  std::string(connector_kind_name(cfg_.kind)) + " connector");
    if (flat_tokens.ndim() != 2 || flat_tokens.size(1) != cfg_.d_i)
        throw ShapeError("compress_attention expects [(N*L) x " + std::to_string(cfg_.d_i) +
                         "], got " + shape_str(flat_tokens.shape()));
    if (flat_tokens.size(0) < 1) throw ShapeError("compress_attention: empty input sequence");
    return proj_.forward(attn_->forward(flat_tokens));
}

Tensor Connector::compress_average(const Tensor& slice_stack) const {
    if (slice_stack.ndim() != 3 || slice_stack.size(2) != cfg_.d_i)
        throw ShapeError("compress_average expects [N x L x " + std::to_string(cfg_.d_i) +
                         "], got " + shape_str(slice_stack.shape()));
    return proj_.forward(ops::mean_axis(slice_stack, 0));
}

Tensor Connector::forward_slices(const Tensor& slice_stack) const {
    if (slice_stack.ndim() != 3)
        throw ShapeError("forward_slices expects [N x L x d_i], got " + shape_str(slice_stack.shape()));
    switch (cfg_.kind) {
        case ConnectorKind::avg_pool:
            return compress_average(slice_stack);
        case ConnectorKind::attn_compress: {
            const int n = slice_stack.size(0), l = slice_stack.size(1);
            return compress_attention(ops::reshape(slice_stack, {n * l, cfg_.d_i}));
        }
        case ConnectorKind::mlp:
            throw ConfigError("mlp connector cannot consume a slice stack; use avg_pool or attn_compress");
    }
    throw ConfigError("unreachable connector kind");
}

int Connector::output_len(int encoder_tokens) const {
    return cfg_.kind == ConnectorKind::attn_compress ? cfg_.l_attn : encoder_tokens;
}

const CrossAttention& Connector::attention() const {
    if (!attn_) throw ConfigError("connector has no attention compressor");
    return *attn_;
}

}  // namespace medvlm
