#pragma once

// Decoder-only transformer over a mixed prefix: image tokens (already in
// LM space) concatenated with embedded text. Learned absolute positions
// over the combined sequence, pre-norm blocks, GELU MLP at 4x width, tied
// input/output embeddings by default. Greedy decoding only; generation
// runs an incremental KV cache that is arithmetic-identical to the full
// forward pass.

#include <string>
#include <vector>

#include "medvlm/nn.hpp"
#include "medvlm/tensor.hpp"

namespace medvlm {

struct LMConfig {
    int vocab_size = 260;
    int d_t = 128;
    int depth = 2;
    int heads = 4;
    int max_seq = 2048;
    bool tie_embeddings = true;
    void validate() const;
};

class LmDecoder {
public:
    // The embedding table registers under "embed.*" (its own namespace);
    // everything else lives under `prefix` ("lm.*").
    LmDecoder(ParamStore& ps, const Rng& rng, const LMConfig& cfg,
              const std::string& prefix = "lm", const std::string& embed_prefix = "embed");

    const LMConfig& config() const { return cfg_; }

    // Token embedding lookup (no position added).
    Tensor embed_ids(const std::vector<int>& ids) const;

    // Core forward over an already-embedded sequence [T x d_t]; adds
    // positions 0..T-1, runs the causal blocks, returns logits [T x vocab].
    Tensor forward_embedded(const Tensor& seq) const;

    // concat(image_tokens, embed(text_ids)) then forward. image_tokens may
    // be undefined or zero-length for a text-only forward.
    Tensor forward_prefix(const Tensor& image_tokens, const std::vector<int>& text_ids) const;

    // Greedy decoding from an embedded prefix. Returns newly generated ids,
    // stopping at EOS (excluded) or after max_new tokens. No-grad; uses the
    // incremental cache.
    std::vector<int> generate_embedded(const Tensor& prefix, int max_new) const;

    // Greedy decoding from concat(image_tokens, embed(prompt_ids)).
    std::vector<int> generate(const Tensor& image_tokens, const std::vector<int>& prompt_ids,
                              int max_new) const;

    // Adapter targeting needs named access to every linear layer.
    void collect_linears(std::vector<Linear*>& out);

private:
    struct KvCache {
        // per block: concatenated key/value rows, [t x d_t] grown row by row
        std::vector<std::vector<float>> k, v;
        int len = 0;
    };

    // Runs one embedded row (position already added) through the blocks
    // using and extending the cache; returns the logits row [1 x vocab].
    Tensor step(KvCache& cache, Tensor x_row) const;

    Tensor logits_head(const Tensor& hidden) const;
    Tensor position_rows(int start, int len) const;

    LMConfig cfg_;
    Tensor embed_table_;  // [vocab x d_t]
    Tensor pos_embed_;    // [max_seq x d_t]
    std::vector<TransformerBlock> blocks_;
    LayerNorm final_norm_;
    Linear out_proj_;  // only when untied
};

}  // namespace medvlm
