#pragma once

// Optimization loop: AdamW over trainable parameters, masked next-token
// objective, stage runner and the two-stage protocol (connector-only
// alignment on captions, then joint instruction tuning).

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "medvlm/adapters.hpp"
#include "medvlm/checkpoint.hpp"
#include "medvlm/data.hpp"
#include "medvlm/model.hpp"

namespace medvlm {

struct AdamWConfig {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

class AdamW {
public:
    AdamW(float lr, AdamWConfig cfg = {}) : lr_(lr), cfg_(cfg) {}

    float lr() const { return lr_; }

    // Applies one update to every trainable parameter with an accumulated
    // grad, then zeros the grads it consumed. Frozen parameters are never
    // touched and hold no optimizer state.
    void step(ParamStore& params);

private:
    struct Moments {
        std::vector<float> m, v;
    };
    float lr_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::unordered_map<std::string, Moments> state_;
};

// Mean cross-entropy over masked positions; mask[t] == 1 supervises
// predicting token_ids[t] from the logits at t-1. All-zero mask -> error.
Tensor masked_next_token_loss(const Tensor& logits, const std::vector<int>& token_ids,
                              const std::vector<uint8_t>& loss_mask);

struct TrainReport {
    std::string stage;
    std::vector<float> batch_losses;
    float initial_loss = 0.0f;
    float final_loss = 0.0f;
    int steps = 0;
};

// Runs epochs x batches of forward/loss/backward/step with set_trainable
// (and adapter injection, when configured) applied first. Deterministic
// under (seed, stage). Returns a checkpoint tagged with the stage name.
Checkpoint train_stage(LvlmModel& model, const std::vector<MultimodalSample>& dataset,
                       const StageConfig& stage, uint64_t seed, TrainReport* report = nullptr,
                       const std::function<void(int, float)>& on_step = {});

struct TwoStageConfig {
    StageConfig pretrain;
    StageConfig instruct;
    bool one_stage = false;  // skip the alignment stage
};

// Stage 1 (captions only, connector trainable) then stage 2 (joint). In
// one-stage mode stage 2 runs directly from the current weights.
Checkpoint run_two_stage(LvlmModel& model, const std::vector<MultimodalSample>& pretrain_data,
                         const std::vector<MultimodalSample>& instruct_data,
                         const TwoStageConfig& cfg, uint64_t seed,
                         std::vector<TrainReport>* reports = nullptr);

}  // namespace medvlm
