#pragma once

// Per-module trainability control and low-rank adapters for the LM.
// Freezing suppresses grad accumulation and optimizer updates without
// detaching the graph, so gradients still flow through frozen modules to
// trainable ones upstream (the pretrain stage trains the connector through
// a frozen LM this way).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medvlm/model.hpp"

namespace medvlm {

struct LoraSpec {
    int rank = 8;
    float alpha = 16.0f;  // effective scale alpha / rank
    std::vector<std::string> targets;  // substring patterns over linear names;
                                       // empty = all LM attention/MLP projections
    std::optional<float> lr_override;  // the higher-rate variant uses 2e-4

    nlohmann::json to_json() const;
    static LoraSpec from_json(const nlohmann::json& j);
};

struct StageConfig {
    std::string name = "stage";
    std::vector<std::string> frozen;  // module namespaces
    std::optional<LoraSpec> lora;
    float lr = 1e-3f;
    int epochs = 1;
    int batch_size = 16;
    int seq_cap = 2048;
    float grad_clip = 0.0f;  // 0 disables clipping

    // Effective learning rate (adapter override wins when present).
    float effective_lr() const { return lora && lora->lr_override ? *lora->lr_override : lr; }

    // Connector-only alignment stage: freezes every namespace of the model
    // except the connector. lr 1e-3, 1 epoch, batch 64.
    static StageConfig pretrain_preset(const LvlmModel& model);

    // Joint stage: nothing frozen. lr 2e-5, 3 epochs, batch 16.
    static StageConfig instruct_preset();

    // Instruct stage with LM base weights frozen and adapters injected at
    // the base rate (2e-5).
    static StageConfig lora_preset();

    // Same, at the higher adapter learning rate 2e-4.
    static StageConfig lora_star_preset();

    nlohmann::json to_json() const;
    static StageConfig from_json(const nlohmann::json& j);
};

// Applies the stage's freeze set: Parameter.trainable becomes false exactly
// for parameters under frozen namespaces. Unknown namespace -> ConfigError.
void set_trainable(LvlmModel& model, const StageConfig& stage);

// Injects adapters into every linear whose name matches >= 1 target
// pattern: y = W x + b + (alpha/r) * (x A) B, A ~ N(0, 0.02) truncated,
// B = 0. Base weights become non-trainable. Returns matched linear names.
std::vector<std::string> lora_inject(LvlmModel& model, const LoraSpec& spec);

enum class MergeStatus { merged, no_adapters };

// Folds W += (alpha/r) * A B into every adapted linear and removes the
// adapters. A second call is a no-op with a warning status.
MergeStatus lora_merge(LvlmModel& model);

}  // namespace medvlm
