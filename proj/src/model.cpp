#include "medvlm/model.hpp"

#include <nlohmann/json.hpp>

#include "medvlm/errors.hpp"
#include "medvlm/tokenizer.hpp"

namespace medvlm {

using json = nlohmann::json;

const char* encoder_kind_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::e2d: return "2d";
        case EncoderKind::e3d: return "3d";
        case EncoderKind::slices2d: return "slices2d";
    }
    return "?";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
    if (name == "2d") return EncoderKind::e2d;
    if (name == "3d") return EncoderKind::e3d;
    if (name == "slices2d") return EncoderKind::slices2d;
    throw ConfigError("unknown encoder kind: '" + name + "'");
}

void ModelConfig::validate() const {
    connector.validate();
    lm.validate();
    const int enc_di = encoder_kind == EncoderKind::e3d ? enc3d.d_i : enc2d.d_i;
    if (encoder_kind == EncoderKind::e3d)
        enc3d.validate();
    else
        enc2d.validate();
    if (connector.d_i != enc_di)
        throw ConfigError("connector d_i " + std::to_string(connector.d_i) +
                          " does not match encoder d_i " + std::to_string(enc_di));
    if (connector.d_t != lm.d_t)
        throw ConfigError("connector d_t " + std::to_string(connector.d_t) +
                          " does not match lm d_t " + std::to_string(lm.d_t));
    // Pipeline compatibility: the average pooler needs a slice stack, and a
    // slice stack always needs a compressor.
    if (connector.kind == ConnectorKind::avg_pool && encoder_kind != EncoderKind::slices2d)
        throw ConfigError("avg_pool connector requires the per-slice 2d encoder");
    if (encoder_kind == EncoderKind::slices2d && connector.kind == ConnectorKind::mlp)
        throw ConfigError("per-slice encoder requires avg_pool or attn_compress connector");
}

Modality ModelConfig::expected_modality() const {
    return encoder_kind == EncoderKind::e2d ? Modality::image2d : Modality::volume3d;
}

json ModelConfig::to_json() const {
    json j;
    j["encoder"] = encoder_kind_name(encoder_kind);
    j["enc2d"] = {{"image_size", enc2d.image_size}, {"patch_size", enc2d.patch_size},
                  {"channels", enc2d.channels},     {"depth", enc2d.depth},
                  {"heads", enc2d.heads},           {"d_i", enc2d.d_i},
                  {"use_pos_embed", enc2d.use_pos_embed}};
    j["enc3d"] = {{"slices", enc3d.slices},
                  {"height", enc3d.height},
                  {"width", enc3d.width},
                  {"patch_slices", enc3d.patch_slices},
                  {"patch_h", enc3d.patch_h},
                  {"patch_w", enc3d.patch_w},
                  {"depth", enc3d.depth},
                  {"heads", enc3d.heads},
                  {"d_i", enc3d.d_i},
                  {"use_pos_embed", enc3d.use_pos_embed}};
    j["connector"] = {{"kind", connector_kind_name(connector.kind)},
                      {"d_i", connector.d_i},
                      {"d_t", connector.d_t},
                      {"l_attn", connector.l_attn},
                      {"heads", connector.heads}};
    j["lm"] = {{"vocab_size", lm.vocab_size}, {"d_t", lm.d_t},
               {"depth", lm.depth},           {"heads", lm.heads},
               {"max_seq", lm.max_seq},       {"tie_embeddings", lm.tie_embeddings}};
    return j;
}

namespace {
template <class T>
void maybe_get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    if (j.contains("encoder")) c.encoder_kind = encoder_kind_from_name(j.at("encoder").get<std::string>());
    if (j.contains("enc2d")) {
        const auto& e = j.at("enc2d");
        maybe_get(e, "image_size", c.enc2d.image_size);
        maybe_get(e, "patch_size", c.enc2d.patch_size);
        maybe_get(e, "channels", c.enc2d.channels);
        maybe_get(e, "depth", c.enc2d.depth);
        maybe_get(e, "heads", c.enc2d.heads);
        maybe_get(e, "d_i", c.enc2d.d_i);
        maybe_get(e, "use_pos_embed", c.enc2d.use_pos_embed);
    }
    if (j.contains("enc3d")) {
        const auto& e = j.at("enc3d");
        maybe_get(e, "slices", c.enc3d.slices);
        maybe_get(e, "height", c.enc3d.height);
        maybe_get(e, "width", c.enc3d.width);
        maybe_get(e, "patch_slices", c.enc3d.patch_slices);
        maybe_get(e, "patch_h", c.enc3d.patch_h);
        maybe_get(e, "patch_w", c.enc3d.patch_w);
        maybe_get(e, "depth", c.enc3d.depth);
        maybe_get(e, "heads", c.enc3d.heads);
        maybe_get(e, "d_i", c.enc3d.d_i);
        maybe_get(e, "use_pos_embed", c.enc3d.use_pos_embed);
    }
    if (j.contains("connector")) {
        const auto& e = j.at("connector");
        if (e.contains("kind")) c.connector.kind = connector_kind_from_name(e.at("kind").get<std::string>());
        maybe_get(e, "d_i", c.connector.d_i);
        maybe_get(e, "d_t", c.connector.d_t);
        maybe_get(e, "l_attn", c.connector.l_attn);
        maybe_get(e, "heads", c.connector.heads);
    }
    if (j.contains("lm")) {
        const auto& e = j.at("lm");
        maybe_get(e, "vocab_size", c.lm.vocab_size);
        maybe_get(e, "d_t", c.lm.d_t);
        maybe_get(e, "depth", c.lm.depth);
        maybe_get(e, "heads", c.lm.heads);
        maybe_get(e, "max_seq", c.lm.max_seq);
        maybe_get(e, "tie_embeddings", c.lm.tie_embeddings);
    }
    return c;
}

ModelConfig ModelConfig::desk_2d() {
    ModelConfig c;
    c.encoder_kind = EncoderKind::e2d;
    c.enc2d.image_size = 64;
    c.enc2d.patch_size = 8;
    c.enc2d.channels = 3;
    c.enc2d.depth = 2;
    c.enc2d.heads = 4;
    c.enc2d.d_i = 64;
    c.connector.kind = ConnectorKind::mlp;
    c.connector.d_i = 64;
    c.connector.d_t = 128;
    c.lm.d_t = 128;
    c.lm.depth = 2;
    c.lm.heads = 4;
    return c;
}

ModelConfig ModelConfig::desk_3d(EncoderKind encoder, ConnectorKind connector, int slices) {
    ModelConfig c = desk_2d();
    c.encoder_kind = encoder;
    c.connector.kind = connector;
    c.connector.l_attn = 64;
    c.enc3d.slices = slices;
    c.enc3d.height = 64;
    c.enc3d.width = 64;
    c.enc3d.patch_slices = std::min(slices, 2);
    c.enc3d.patch_h = 8;
    c.enc3d.patch_w = 8;
    c.enc3d.depth = 2;
    c.enc3d.heads = 4;
    c.enc3d.d_i = 64;
    return c;
}

// ---------------------------------------------------------------------------

LvlmModel::LvlmModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
    cfg_.validate();
    const Rng rng(seed);
    if (cfg_.encoder_kind == EncoderKind::e3d)
        enc3d_.emplace(params_, rng, cfg_.enc3d, "encoder3d");
    else
        enc2d_.emplace(params_, rng, cfg_.enc2d, "encoder2d");
    connector_.emplace(params_, rng, cfg_.connector, "connector");
    lm_.emplace(params_, rng, cfg_.lm, "lm", "embed");
}

std::vector<std::string> LvlmModel::namespaces() const {
    std::vector<std::string> out;
    for (const auto& p : params_.items()) {
        const auto ns = param_namespace(p.name);
        if (std::find(out.begin(), out.end(), ns) == out.end()) out.push_back(ns);
    }
    return out;
}

int LvlmModel::image_token_count() const {
    const int enc_tokens =
        cfg_.encoder_kind == EncoderKind::e3d ? cfg_.enc3d.tokens() : cfg_.enc2d.tokens();
    return connector_->output_len(enc_tokens);
}

Tensor LvlmModel::encode_image(const MultimodalSample& s) const {
    if (s.modality != cfg_.expected_modality())
        throw DataError(std::string("model expects ") + modality_name(cfg_.expected_modality()) +
                        " samples, got " + modality_name(s.modality));
    switch (cfg_.encoder_kind) {
        case EncoderKind::e2d: {
            const auto tokens = enc2d_->forward(s.image);
            return cfg_.connector.kind == ConnectorKind::attn_compress
                       ? connector_->compress_attention(tokens)
                       : connector_->project(tokens);
        }
        case EncoderKind::e3d: {
            const auto tokens = enc3d_->forward(s.image);
            return cfg_.connector.kind == ConnectorKind::attn_compress
                       ? connector_->compress_attention(tokens)
                       : connector_->project(tokens);
        }
        case EncoderKind::slices2d:
            return connector_->forward_slices(enc2d_->forward_slices(s.image));
    }
    throw ConfigError("unreachable encoder kind");
}

Tensor LvlmModel::forward_row_logits(const BatchRow& row) const {
    std::vector<int> ids(row.token_ids.begin(), row.token_ids.begin() + row.length);
    if (!row.sample || row.sample->modality == Modality::none) return lm_->forward_prefix({}, ids);

    const int l_img = image_token_count();
    if (row.length < 1 + l_img || ids[0] != tok::BOS)
        throw ContractError("batch row does not start with [BOS, IMG...] layout");
    for (int i = 1; i <= l_img; ++i)
        if (ids[static_cast<size_t>(i)] != tok::IMG)
            throw ContractError("batch row image placeholder count does not match the model's " +
                                std::to_string(l_img) + " image tokens");
    const Tensor img = encode_image(*row.sample);
    const std::vector<int> head(ids.begin(), ids.begin() + 1);
    const std::vector<int> tail(ids.begin() + 1 + l_img, ids.end());
    std::vector<Tensor> parts{lm_->embed_ids(head), img};
    if (!tail.empty()) parts.push_back(lm_->embed_ids(tail));
    return lm_->forward_embedded(ops::concat(parts, 0));
}

Tensor LvlmModel::row_loss(const BatchRow& row) const {
    const auto logits = forward_row_logits(row);
    const std::vector<int> ids(row.token_ids.begin(), row.token_ids.begin() + row.length);
    const std::vector<uint8_t> mask(row.loss_mask.begin(), row.loss_mask.begin() + row.length);
    return ops::masked_next_token_ce(logits, ids, mask);
}

Tensor LvlmModel::prefix_embedding(const MultimodalSample& s) const {
    NoGradGuard ng;
    std::vector<Tensor> parts{lm_->embed_ids({tok::BOS})};
    if (s.modality != Modality::none) parts.push_back(encode_image(s));
    const auto prompt_ids = tok::encode(s.prompt);
    if (!prompt_ids.empty()) parts.push_back(lm_->embed_ids(prompt_ids));
    return ops::concat(parts, 0);
}

std::vector<int> LvlmModel::generate_for_sample(const MultimodalSample& s, int max_new) const {
    return lm_->generate_embedded(prefix_embedding(s), max_new);
}

void LvlmModel::collect_linears(std::vector<Linear*>& out) { lm_->collect_linears(out); }

}  // namespace medvlm
