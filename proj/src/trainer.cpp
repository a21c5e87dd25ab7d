#include "medvlm/trainer.hpp"

#include <cmath>

#include "medvlm/errors.hpp"
#include "medvlm/rng.hpp"

namespace medvlm {

void AdamW::step(ParamStore& params) {
    t_ += 1;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (auto& p : params.items()) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        auto& mom = state_[p.name];
        const size_t n = static_cast<size_t>(p.tensor.numel());
        if (mom.m.empty()) {
            mom.m.assign(n, 0.0f);
            mom.v.assign(n, 0.0f);
        }
        float* w = p.tensor.data();
        const float* g = p.tensor.grad().data();
        for (size_t i = 0; i < n; ++i) {
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0f - cfg_.beta1) * g[i];
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
            const float mhat = mom.m[i] / bc1;
            const float vhat = mom.v[i] / bc2;
            w[i] -= lr_ * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
        }
        p.tensor.zero_grad();
    }
}

Tensor masked_next_token_loss(const Tensor& logits, const std::vector<int>& token_ids,
                              const std::vector<uint8_t>& loss_mask) {
    return ops::masked_next_token_ce(logits, token_ids, loss_mask);
}

namespace {

void clip_grads(ParamStore& params, float max_norm) {
    double sq = 0.0;
    for (const auto& p : params.items())
        if (p.trainable && p.tensor.has_grad())
            for (const float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& p : params.items())
        if (p.trainable && p.tensor.has_grad())
            for (float& g : p.tensor.grad()) g *= scale;
}

}  // namespace

Checkpoint train_stage(LvlmModel& model, const std::vector<MultimodalSample>& dataset,
                       const StageConfig& stage, uint64_t seed, TrainReport* report,
                       const std::function<void(int, float)>& on_step) {
    if (dataset.empty()) throw DataError("train_stage: empty dataset");
    if (stage.epochs < 1 || stage.batch_size < 1)
        throw ConfigError("train_stage: epochs and batch_size must be >= 1");

    set_trainable(model, stage);
    if (stage.lora) lora_inject(model, *stage.lora);

    AdamW opt(stage.effective_lr());
    Rng shuffle_rng = Rng(seed).split("train." + stage.name);

    const int l_img = model.image_token_count();
    TrainReport local;
    local.stage = stage.name;

    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int step_idx = 0;
    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(stage.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(stage.batch_size));
            std::vector<const MultimodalSample*> chunk;
            chunk.reserve(end - start);
            for (size_t i = start; i < end; ++i) chunk.push_back(&dataset[order[i]]);

            float batch_loss = 0.0f;
            const std::string ctx =
                "train_stage '" + stage.name + "' batch " + std::to_string(step_idx) + ": ";
            try {
                const Batch batch = build_batch(chunk, l_img, stage.seq_cap);
                Tensor total;
                for (const auto& row : batch.rows) {
                    const auto loss = model.row_loss(row);
                    total = total.defined() ? ops::add(total, loss) : loss;
                }
                total = ops::mul_scalar(total, 1.0f / static_cast<float>(batch.rows.size()));
                batch_loss = total.item();
                total.backward();
            } catch (const DataError& e) {
                throw DataError(ctx + e.what());
            } catch (const ShapeError& e) {
                throw ShapeError(ctx + e.what());
            } catch (const ContractError& e) {
                throw ContractError(ctx + e.what());
            }

            if (stage.grad_clip > 0.0f) clip_grads(model.params(), stage.grad_clip);
            opt.step(model.params());

            local.batch_losses.push_back(batch_loss);
            if (on_step) on_step(step_idx, batch_loss);
            ++step_idx;
        }
    }

    local.steps = step_idx;
    local.initial_loss = local.batch_losses.empty() ? 0.0f : local.batch_losses.front();
    local.final_loss = local.batch_losses.empty() ? 0.0f : local.batch_losses.back();
    if (report) *report = local;

    return snapshot(model, stage.name);
}

Checkpoint run_two_stage(LvlmModel& model, const std::vector<MultimodalSample>& pretrain_data,
                         const std::vector<MultimodalSample>& instruct_data,
                         const TwoStageConfig& cfg, uint64_t seed,
                         std::vector<TrainReport>* reports) {
    if (!cfg.one_stage) {
        for (size_t i = 0; i < pretrain_data.size(); ++i)
            if (pretrain_data[i].task != Task::caption)
                throw DataError("pre-training data must contain caption samples only; record " +
                                std::to_string(i + 1) + " is '" +
                                task_name(pretrain_data[i].task) + "'");
        TrainReport r1;
        train_stage(model, pretrain_data, cfg.pretrain, seed, &r1);
        if (reports) reports->push_back(r1);
    }
    TrainReport r2;
    Checkpoint final_ckpt = train_stage(model, instruct_data, cfg.instruct, seed, &r2);
    if (reports) reports->push_back(r2);
    return final_ckpt;
}

}  // namespace medvlm
