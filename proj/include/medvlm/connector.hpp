#pragma once

// The connector bridges encoder width d_i to LM width d_t. Three variants:
//   mlp           per-token two-layer projector (2D pipeline)
//   attn_compress learned-query cross-attention to a fixed token count,
//                 then the shared projector
//   avg_pool      mean over the slice axis, then the shared projector
// All variants end in the same two-layer projection, so every output token
// has width d_t.

#include <string>

#include "medvlm/nn.hpp"
#include "medvlm/tensor.hpp"

namespace medvlm {

enum class ConnectorKind { mlp, attn_compress, avg_pool };

const char* connector_kind_name(ConnectorKind k);
ConnectorKind connector_kind_from_name(const std::string& name);

struct ConnectorConfig {
    ConnectorKind kind = ConnectorKind::mlp;
    int d_i = 64;
    int d_t = 128;
    int l_attn = 256;  // query count, attn_compress only
    int heads = 4;     // attn_compress only
    void validate() const;
};

class Connector {
public:
    Connector(ParamStore& ps, const Rng& rng, const ConnectorConfig& cfg,
              const std::string& prefix = "connector");

    const ConnectorConfig& config() const { return cfg_; }

    // Per-token projection: [L x d_i] -> [L x d_t].
    Tensor project(const Tensor& tokens) const;

    // Flattened slice tokens [(N*L) x d_i] -> [l_attn x d_t].
    Tensor compress_attention(const Tensor& flat_tokens) const;

    // Slice stack [N x L x d_i] -> [L x d_t] (mean over slices, then project).
    Tensor compress_average(const Tensor& slice_stack) const;

    // Dispatch on kind for a per-slice encoder output [N x L x d_i].
    Tensor forward_slices(const Tensor& slice_stack) const;

    // Output token count given the encoder's per-image (or per-volume) count.
    int output_len(int encoder_tokens) const;

    const MlpProjector& projector() const { return proj_; }
    const CrossAttention& attention() const;

private:
    ConnectorConfig cfg_;
    MlpProjector proj_;
    std::optional<CrossAttention> attn_;
};

}  // namespace medvlm
