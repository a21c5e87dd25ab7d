#include "medvlm/ablation.hpp"

#include <cstdio>
#include <sstream>

#include "medvlm/checkpoint.hpp"
#include "medvlm/errors.hpp"
#include "medvlm/trainer.hpp"

namespace medvlm {

namespace fs = std::filesystem;

const char* ablation_axis_name(AblationAxis a) {
    switch (a) {
        case AblationAxis::encoder_freeze: return "encoder_freeze";
        case AblationAxis::llm_strategy: return "llm_strategy";
        case AblationAxis::init_3d: return "init_3d";
        case AblationAxis::stage_count: return "stage_count";
        case AblationAxis::connector_kind: return "connector_kind";
    }
    return "?";
}

AblationAxis ablation_axis_from_name(const std::string& name) {
    for (const auto a : all_ablation_axes())
        if (name == ablation_axis_name(a)) return a;
    throw ConfigError("unknown ablation axis: '" + name + "'");
}

std::vector<AblationAxis> all_ablation_axes() {
    return {AblationAxis::encoder_freeze, AblationAxis::llm_strategy, AblationAxis::init_3d,
            AblationAxis::stage_count, AblationAxis::connector_kind};
}

std::string AblationTable::to_text() const {
    std::ostringstream os;
    os << "axis=" << ablation_axis_name(axis) << "\n";
    for (const auto& run : runs) {
        os << "--- run=" << run.label << "\n";
        os << run.report.to_text();
    }
    return os.str();
}

namespace {

struct AxisData {
    std::vector<MultimodalSample> pretrain, train, eval;
};

AxisData make_axis_corpora(const fs::path& dir, Modality modality, int image_size, int slices,
                           uint64_t seed) {
    fs::create_directories(dir);
    DataGenSpec g;
    g.train_counts = {{Task::classification, 100}, {Task::vqa_short, 100}, {Task::rec, 100}};
    g.eval_counts = {{Task::classification, 20}, {Task::vqa_short, 20}, {Task::rec, 20}};
    g.pretrain_captions = 120;
    g.image_size = image_size;
    g.modality = modality;
    g.volume_slices = slices;

    make_synthetic_corpus(dir / "pretrain.jsonl", g.pretrain_spec(), seed + 1);
    make_synthetic_corpus(dir / "train.jsonl", g.train_spec(), seed + 2);
    make_synthetic_corpus(dir / "eval.jsonl", g.eval_spec(), seed + 3);

    AxisData d;
    d.pretrain = load_dataset(dir / "pretrain.jsonl");
    d.train = load_dataset(dir / "train.jsonl");
    d.eval = load_dataset(dir / "eval.jsonl");
    return d;
}

StageConfig quick_pretrain(const LvlmModel& model) {
    StageConfig s = StageConfig::pretrain_preset(model);
    s.batch_size = 16;
    return s;
}

StageConfig quick_instruct(float lr = 3e-4f) {
    StageConfig s = StageConfig::instruct_preset();
    s.lr = lr;
    s.epochs = 1;
    s.batch_size = 16;
    return s;
}

AblationRun run_config(const std::string& label, const ModelConfig& mc, const AxisData& data,
                       const StageConfig& instruct, bool one_stage, uint64_t seed,
                       const Checkpoint* init_from = nullptr) {
    LvlmModel model(mc, seed);
    if (init_from) transfer_2d_to_3d(*init_from, model);
    TwoStageConfig ts;
    ts.pretrain = quick_pretrain(model);
    ts.instruct = instruct;
    ts.one_stage = one_stage;
    run_two_stage(model, data.pretrain, data.train, ts, seed);
    return AblationRun{label, evaluate(model, data.eval)};
}

ModelConfig base_2d(const RunConfig& base) {
    ModelConfig mc = base.model;
    mc.encoder_kind = EncoderKind::e2d;
    mc.connector.kind = ConnectorKind::mlp;
    return mc;
}

ModelConfig base_3d(const RunConfig& base, EncoderKind enc, ConnectorKind conn) {
    ModelConfig mc = base.model;
    mc.encoder_kind = enc;
    mc.connector.kind = conn;
    mc.connector.l_attn = 64;
    mc.enc3d.slices = base.gen.volume_slices;
    mc.enc3d.height = mc.enc2d.image_size;
    mc.enc3d.width = mc.enc2d.image_size;
    mc.enc3d.patch_slices = std::min(base.gen.volume_slices, 2);
    mc.enc3d.patch_h = mc.enc2d.patch_size;
    mc.enc3d.patch_w = mc.enc2d.patch_size;
    mc.enc3d.depth = mc.enc2d.depth;
    mc.enc3d.heads = mc.enc2d.heads;
    mc.enc3d.d_i = mc.enc2d.d_i;
    return mc;
}

}  // namespace

AblationTable run_ablation(AblationAxis axis, const RunConfig& base, const fs::path& workdir,
                           uint64_t seed) {
    AblationTable table;
    table.axis = axis;
    const fs::path dir = workdir / ablation_axis_name(axis);
    const int img = base.model.enc2d.image_size;

    switch (axis) {
        case AblationAxis::encoder_freeze: {
            const auto data = make_axis_corpora(dir, Modality::image2d, img, 0, seed);
            const auto mc = base_2d(base);
            auto frozen_stage = quick_instruct();
            frozen_stage.frozen = {"encoder2d"};
            table.runs.push_back(run_config("encoder_unfrozen", mc, data, quick_instruct(), false, seed));
            table.runs.push_back(run_config("encoder_frozen", mc, data, frozen_stage, false, seed));
            break;
        }
        case AblationAxis::llm_strategy: {
            const auto data = make_axis_corpora(dir, Modality::image2d, img, 0, seed);
            const auto mc = base_2d(base);

            auto frozen_lm = quick_instruct(2e-5f);
            frozen_lm.frozen = {"lm", "embed"};

            auto lora = quick_instruct(2e-5f);
            lora.frozen = {"lm", "embed"};
            lora.lora = LoraSpec{};

            auto full = quick_instruct(2e-5f);

            auto lora_star = lora;
            lora_star.lora->lr_override = 2e-4f;

            table.runs.push_back(run_config("lm_frozen@2e-5", mc, data, frozen_lm, false, seed));
            table.runs.push_back(run_config("lora@2e-5", mc, data, lora, false, seed));
            table.runs.push_back(run_config("full@2e-5", mc, data, full, false, seed));
            table.runs.push_back(run_config("lora*@2e-4", mc, data, lora_star, false, seed));
            break;
        }
        case AblationAxis::init_3d: {
            const auto data2d = make_axis_corpora(dir / "2d", Modality::image2d, img, 0, seed);
            const auto data3d = make_axis_corpora(dir / "3d", Modality::volume3d, img,
                                                  base.gen.volume_slices, seed + 10);
            // A quickly trained 2D model provides the initialization.
            LvlmModel model2d(base_2d(base), seed);
            TwoStageConfig ts2d;
            ts2d.pretrain = quick_pretrain(model2d);
            ts2d.instruct = quick_instruct();
            const Checkpoint ckpt2d =
                run_two_stage(model2d, data2d.pretrain, data2d.train, ts2d, seed);

            const auto mc3d = base_3d(base, EncoderKind::slices2d, ConnectorKind::avg_pool);
            table.runs.push_back(
                run_config("3d_from_scratch", mc3d, data3d, quick_instruct(), false, seed));
            table.runs.push_back(run_config("3d_from_2d_init", mc3d, data3d, quick_instruct(), false,
                                            seed, &ckpt2d));
            break;
        }
        case AblationAxis::stage_count: {
            const auto data = make_axis_corpora(dir, Modality::image2d, img, 0, seed);
            const auto mc = base_2d(base);
            table.runs.push_back(run_config("two_stage", mc, data, quick_instruct(), false, seed));
            table.runs.push_back(run_config("one_stage", mc, data, quick_instruct(), true, seed));
            break;
        }
        case AblationAxis::connector_kind: {
            const auto data = make_axis_corpora(dir, Modality::volume3d, img,
                                                base.gen.volume_slices, seed);
            table.runs.push_back(run_config(
                "3d", base_3d(base, EncoderKind::e3d, ConnectorKind::mlp), data, quick_instruct(),
                false, seed));
            table.runs.push_back(run_config("2d_avg",
                                            base_3d(base, EncoderKind::slices2d, ConnectorKind::avg_pool),
                                            data, quick_instruct(), false, seed));
            table.runs.push_back(run_config(
                "2d_attn", base_3d(base, EncoderKind::slices2d, ConnectorKind::attn_compress), data,
                quick_instruct(), false, seed));
            break;
        }
    }
    return table;
}

}  // namespace medvlm
