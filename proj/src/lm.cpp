#include "medvlm/lm.hpp"

#include "medvlm/errors.hpp"
#include "medvlm/tokenizer.hpp"

namespace medvlm {

void LMConfig::validate() const {
    if (vocab_size < 1 || d_t < 1 || depth < 1 || heads < 1 || max_seq < 1)
        throw ConfigError("lm: vocab/d_t/depth/heads/max_seq must be positive");
    if (d_t % heads != 0)
        throw ConfigError("lm: d_t " + std::to_string(d_t) + " not divisible by " +
                          std::to_string(heads) + " heads");
}

LmDecoder::LmDecoder(ParamStore& ps, const Rng& rng, const LMConfig& cfg, const std::string& prefix,
                     const std::string& embed_prefix)
    : cfg_(cfg) {
    cfg_.validate();
    embed_table_ = ps.add(embed_prefix + ".table",
                          init::trunc_normal<float>(rng, embed_prefix + ".table",
                                                    {cfg.vocab_size, cfg.d_t}, kInitStd));
    pos_embed_ = ps.add(prefix + ".pos_embed",
                        init::trunc_normal<float>(rng, prefix + ".pos_embed",
                                                  {cfg.max_seq, cfg.d_t}, kInitStd));
    blocks_.reserve(static_cast<size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i)
        blocks_.emplace_back(ps, rng, prefix + ".block" + std::to_string(i), cfg.d_t, cfg.heads,
                             /*causal=*/true);
    final_norm_ = LayerNorm(ps, prefix + ".final_norm", cfg.d_t);
    if (!cfg.tie_embeddings)
        out_proj_ = Linear(ps, rng, prefix + ".out_proj", cfg.d_t, cfg.vocab_size);
}

Tensor LmDecoder::embed_ids(const std::vector<int>& ids) const {
    return ops::embedding(embed_table_, ids);
}

Tensor LmDecoder::position_rows(int start, int len) const {
    return ops::slice_rows(pos_embed_, start, len);
}

Tensor LmDecoder::logits_head(const Tensor& hidden) const {
    return cfg_.tie_embeddings ? ops::matmul(hidden, ops::transpose(embed_table_))
                               : out_proj_.forward(hidden);
}

Tensor LmDecoder::forward_embedded(const Tensor& seq) const {
    if (seq.ndim() != 2 || seq.size(1) != cfg_.d_t)
        throw ShapeError("lm expects [T x " + std::to_string(cfg_.d_t) + "] input, got " +
                         shape_str(seq.shape()));
    const int t = seq.size(0);
    if (t > cfg_.max_seq)
        throw ContractError("sequence length " + std::to_string(t) + " exceeds max_seq " +
                            std::to_string(cfg_.max_seq));
    auto x = ops::add(seq, position_rows(0, t));
    for (const auto& blk : blocks_) x = blk.forward(x);
    return logits_head(final_norm_.forward(x));
}

Tensor LmDecoder::forward_prefix(const Tensor& image_tokens, const std::vector<int>& text_ids) const {
    const bool has_image = image_tokens.defined() && image_tokens.numel() > 0;
    if (has_image && (image_tokens.ndim() != 2 || image_tokens.size(1) != cfg_.d_t))
        throw ShapeError("image tokens must be [L x " + std::to_string(cfg_.d_t) + "], got " +
                         shape_str(image_tokens.shape()));
    if (!has_image && text_ids.empty())
        throw ContractError("forward_prefix: empty image prefix and empty text");
    Tensor seq;
    if (!has_image) {
        seq = embed_ids(text_ids);
    } else if (text_ids.empty()) {
        seq = image_tokens;
    } else {
        seq = ops::concat<float>({image_tokens, embed_ids(text_ids)}, 0);
    }
    return forward_embedded(seq);
}

void LmDecoder::collect_linears(std::vector<Linear*>& out) {
    for (auto& blk : blocks_) {
        out.push_back(&blk.attn.wq);
        out.push_back(&blk.attn.wk);
        out.push_back(&blk.attn.wv);
        out.push_back(&blk.attn.wo);
        out.push_back(&blk.mlp.fc1);
        out.push_back(&blk.mlp.fc2);
    }
    if (out_proj_.weight.defined()) out.push_back(&out_proj_);
}

// --- incremental decoding ---------------------------------------------------

Tensor LmDecoder::step(KvCache& cache, Tensor x) const {
    const int d = cfg_.d_t;
    const int hd = d / cfg_.heads;
    const float inv_scale = 1.0f / std::sqrt(static_cast<float>(hd));
    for (size_t b = 0; b < blocks_.size(); ++b) {
        const auto& blk = blocks_[b];
        const auto h = blk.ln1.forward(x);
        const auto q = blk.attn.wq.forward(h);
        const auto k = blk.attn.wk.forward(h);
        const auto v = blk.attn.wv.forward(h);
        auto& kc = cache.k[b];
        auto& vc = cache.v[b];
        kc.insert(kc.end(), k.data(), k.data() + d);
        vc.insert(vc.end(), v.data(), v.data() + d);
        const int t = cache.len + 1;
        const auto kt = Tensor::from({t, d}, kc);
        const auto vt = Tensor::from({t, d}, vc);
        std::vector<Tensor> per_head;
        per_head.reserve(static_cast<size_t>(cfg_.heads));
        for (int hh = 0; hh < cfg_.heads; ++hh) {
            const int c0 = hh * hd;
            auto qh = ops::slice_last(q, c0, hd);
            auto kh = ops::slice_last(kt, c0, hd);
            auto vh = ops::slice_last(vt, c0, hd);
            auto scores = ops::mul_scalar(ops::matmul(qh, ops::transpose(kh)), inv_scale);
            per_head.push_back(ops::matmul(ops::softmax(scores, 1), vh));
        }
        x = ops::add(x, blk.attn.wo.forward(ops::concat(per_head, 1)));
        x = ops::add(x, blk.mlp.forward(blk.ln2.forward(x)));
    }
    cache.len += 1;
    return logits_head(final_norm_.forward(x));
}

namespace {
int argmax_row(const Tensor& logits_row) {
    const float* p = logits_row.data();
    const int n = static_cast<int>(logits_row.numel());
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (p[i] > p[best]) best = i;
    return best;
}
}  // namespace

std::vector<int> LmDecoder::generate_embedded(const Tensor& prefix, int max_new) const {
    if (max_new < 0) throw ContractError("generate: max_new must be >= 0");
    if (max_new == 0) return {};
    if (prefix.ndim() != 2 || prefix.size(1) != cfg_.d_t)
        throw ShapeError("generate expects an embedded [T x d_t] prefix, got " +
                         shape_str(prefix.shape()));
    const int t0 = prefix.size(0);
    if (t0 + max_new > cfg_.max_seq)
        throw ContractError("generate: prefix length " + std::to_string(t0) + " + max_new " +
                            std::to_string(max_new) + " exceeds max_seq " +
                            std::to_string(cfg_.max_seq));

    NoGradGuard ng;
    KvCache cache;
    cache.k.resize(blocks_.size());
    cache.v.resize(blocks_.size());
    Tensor last;
    for (int t = 0; t < t0; ++t)
        last = step(cache, ops::add(ops::slice_rows(prefix, t, 1), position_rows(t, 1)));

    std::vector<int> out;
    for (int i = 0; i < max_new; ++i) {
        const int next = argmax_row(last);
        if (next == tok::EOS) break;
        out.push_back(next);
        if (i + 1 == max_new) break;
        last = step(cache, ops::add(embed_ids({next}), position_rows(cache.len, 1)));
    }
    return out;
}

std::vector<int> LmDecoder::generate(const Tensor& image_tokens, const std::vector<int>& prompt_ids,
                                     int max_new) const {
    const bool has_image = image_tokens.defined() && image_tokens.numel() > 0;
    Tensor prefix;
    {
        NoGradGuard ng;
        if (!has_image) {
            if (prompt_ids.empty()) throw ContractError("generate: empty prompt and no image");
            prefix = embed_ids(prompt_ids);
        } else if (prompt_ids.empty()) {
            prefix = image_tokens;
        } else {
            prefix = ops::concat<float>({image_tokens, embed_ids(prompt_ids)}, 0);
        }
    }
    return generate_embedded(prefix, max_new);
}

}  // namespace medvlm
