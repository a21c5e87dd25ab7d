#pragma once

// Full pipeline assembly: configuration for the encoder/connector/LM trio,
// deterministic construction from a seed, and the per-sample forward paths
// used by training, evaluation, and generation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medvlm/connector.hpp"
#include "medvlm/data.hpp"
#include "medvlm/encoder.hpp"
#include "medvlm/lm.hpp"

namespace medvlm {

enum class EncoderKind { e2d, e3d, slices2d };

const char* encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);

struct ModelConfig {
    EncoderKind encoder_kind = EncoderKind::e2d;
    Encoder2DConfig enc2d;     // used by e2d and slices2d
    Encoder3DConfig enc3d;     // used by e3d
    ConnectorConfig connector;
    LMConfig lm;

    void validate() const;
    Modality expected_modality() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    // Small configuration that trains in CPU minutes.
    static ModelConfig desk_2d();
    static ModelConfig desk_3d(EncoderKind encoder, ConnectorKind connector, int slices = 4);
};

class LvlmModel {
public:
    LvlmModel(ModelConfig cfg, uint64_t seed);
    LvlmModel(const LvlmModel&) = delete;
    LvlmModel& operator=(const LvlmModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    uint64_t seed() const { return seed_; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    Encoder2D& encoder2d() { return *enc2d_; }
    Encoder3D& encoder3d() { return *enc3d_; }
    Connector& connector() { return *connector_; }
    LmDecoder& lm() { return *lm_; }
    const LmDecoder& lm() const { return *lm_; }
    bool has_encoder2d() const { return enc2d_.has_value(); }
    bool has_encoder3d() const { return enc3d_.has_value(); }

    // Top-level parameter namespaces present in this model.
    std::vector<std::string> namespaces() const;

    // Connector output length for image-bearing samples.
    int image_token_count() const;

    // Image/volume -> [L_img x d_t] token prefix in LM space.
    Tensor encode_image(const MultimodalSample& s) const;

    // Embedded sequence for a batch row ([BOS, IMG.., prompt, response, EOS]),
    // image placeholders replaced by connector output. Pads are dropped.
    Tensor forward_row_logits(const BatchRow& row) const;

    // Masked next-token loss for one row.
    Tensor row_loss(const BatchRow& row) const;

    // [embed(BOS); image tokens; embed(prompt)] — the generation-time prefix
    // matching the training layout.
    Tensor prefix_embedding(const MultimodalSample& s) const;

    std::vector<int> generate_for_sample(const MultimodalSample& s, int max_new) const;

    void collect_linears(std::vector<Linear*>& out);

private:
    ModelConfig cfg_;
    uint64_t seed_;
    ParamStore params_;
    std::optional<Encoder2D> enc2d_;
    std::optional<Encoder3D> enc3d_;
    std::optional<Connector> connector_;
    std::optional<LmDecoder> lm_;
};

}  // namespace medvlm
