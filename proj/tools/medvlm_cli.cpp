// Command-line entry point: synthetic data generation, two-stage training,
// evaluation, single-prompt generation, the ablation harness, and
// checkpoint inspection.
//
// Exit codes: 0 success, 1 validation/configuration error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "medvlm/ablation.hpp"
#include "medvlm/checkpoint.hpp"
#include "medvlm/config.hpp"
#include "medvlm/errors.hpp"
#include "medvlm/eval.hpp"
#include "medvlm/tokenizer.hpp"
#include "medvlm/trainer.hpp"

namespace fs = std::filesystem;
using namespace medvlm;

namespace {

RunConfig resolve_config(const std::string& config_path, std::optional<uint64_t> seed_flag) {
    RunConfig cfg = config_path.empty() ? RunConfig::desk_default() : load_run_config(config_path);
    if (seed_flag) cfg.seed = *seed_flag;
    return cfg;
}

int cmd_make_data(const RunConfig& cfg) {
    fs::create_directories(cfg.data_dir);
    const int n_pre = make_synthetic_corpus(cfg.pretrain_path(), cfg.gen.pretrain_spec(), cfg.seed + 1);
    const int n_train = make_synthetic_corpus(cfg.train_path(), cfg.gen.train_spec(), cfg.seed + 2);
    const int n_eval = make_synthetic_corpus(cfg.eval_path(), cfg.gen.eval_spec(), cfg.seed + 3);
    std::cout << "wrote " << n_pre << " pretrain, " << n_train << " train, " << n_eval
              << " eval records under " << cfg.data_dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, bool one_stage_flag, const std::string& out_path) {
    RunConfig run = cfg;
    if (one_stage_flag) run.one_stage = true;

    const auto instruct_data = load_dataset(run.train_path());
    std::vector<MultimodalSample> pretrain_data;
    if (!run.one_stage) pretrain_data = load_dataset(run.pretrain_path());

    LvlmModel model(run.model, run.seed);
    TwoStageConfig ts{run.pretrain, run.instruct, run.one_stage};

    std::vector<TrainReport> reports;
    Checkpoint ckpt = run_two_stage(model, pretrain_data, instruct_data, ts, run.seed, &reports);
    for (const auto& r : reports)
        std::cout << "stage=" << r.stage << " steps=" << r.steps << " first_loss=" << r.initial_loss
                  << " last_loss=" << r.final_loss << "\n";

    ckpt.config_json = run.to_json().dump();  // full run config echo
    write_checkpoint_file(out_path, ckpt);
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path, const std::string& out_path) {
    LvlmModel model(cfg.model, cfg.seed);
    load_checkpoint(ckpt_path, model);
    const auto data = load_dataset(cfg.eval_path());
    const MetricReport report = evaluate(model, data, {}, cfg.eval_max_new);
    std::cout << report.to_text();
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw IoError("cannot open report file: " + out_path);
        os << report.to_json().dump(2) << "\n";
    }
    return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& ckpt_path, const std::string& image_path,
                 const std::string& prompt, int max_new) {
    LvlmModel model(cfg.model, cfg.seed);
    load_checkpoint(ckpt_path, model);
    MultimodalSample s;
    s.prompt = prompt;
    if (!image_path.empty()) {
        s.modality = model.config().expected_modality();
        s.image = read_image_sidecar(image_path);
    }
    const auto ids = model.generate_for_sample(s, max_new);
    std::cout << tok::decode(ids) << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis_name, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<AblationAxis> axes;
    if (axis_name == "all")
        axes = all_ablation_axes();
    else
        axes.push_back(ablation_axis_from_name(axis_name));
    for (const auto axis : axes) {
        const AblationTable table = run_ablation(axis, cfg, fs::path(out_dir) / "data", cfg.seed);
        const std::string text = table.to_text();
        std::cout << text;
        std::ofstream os(fs::path(out_dir) / (std::string(ablation_axis_name(axis)) + ".txt"));
        os << text;
    }
    return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
    const Checkpoint ckpt = read_checkpoint_file(ckpt_path);
    std::cout << "version=" << ckpt.version << " stage=" << ckpt.stage << " seed=" << ckpt.seed
              << " tensors=" << ckpt.tensors.size() << "\n";
    for (const auto& [name, blob] : ckpt.tensors)
        std::cout << name << " " << shape_str(blob.shape) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale medical vision-language pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed_flag;
    app.add_option("--config", config_path, "run config file (JSON)")->capture_default_str();
    app.add_option("--seed", seed_flag, "override the config seed");

    auto* make_data = app.add_subcommand("make-data", "write synthetic corpora");

    auto* train = app.add_subcommand("train", "run two-stage training");
    bool one_stage = false;
    std::string train_out = "checkpoint.mmck";
    train->add_flag("--one-stage", one_stage, "skip the alignment stage");
    train->add_option("--out", train_out, "checkpoint output path")->capture_default_str();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_out;
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "machine-readable report path (JSON)");

    auto* gen_cmd = app.add_subcommand("generate", "answer one prompt for one image");
    std::string gen_ckpt, gen_image, gen_prompt;
    int gen_max_new = 48;
    gen_cmd->add_option("--ckpt", gen_ckpt, "checkpoint path")->required();
    gen_cmd->add_option("--image", gen_image, "image sidecar file (optional for text-only)");
    gen_cmd->add_option("--prompt", gen_prompt, "textual prompt");
    gen_cmd->add_option("--max-new", gen_max_new, "generation budget")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "run ablation axes");
    std::string axis = "all", ablate_out = "ablations";
    ablate->add_option("--axis", axis,
                       "encoder_freeze|llm_strategy|init_3d|stage_count|connector_kind|all")
        ->capture_default_str();
    ablate->add_option("--out", ablate_out, "output directory")->capture_default_str();

    auto* inspect = app.add_subcommand("inspect-ckpt", "list checkpoint tensors");
    std::string inspect_ckpt;
    inspect->add_option("--ckpt", inspect_ckpt, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const RunConfig cfg = resolve_config(config_path, seed_flag);
        if (make_data->parsed()) return cmd_make_data(cfg);
        if (train->parsed()) return cmd_train(cfg, one_stage, train_out);
        if (eval_cmd->parsed()) return cmd_eval(cfg, eval_ckpt, eval_out);
        if (gen_cmd->parsed()) return cmd_generate(cfg, gen_ckpt, gen_image, gen_prompt, gen_max_new);
        if (ablate->parsed()) return cmd_ablate(cfg, axis, ablate_out);
        if (inspect->parsed()) return cmd_inspect(inspect_ckpt);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ShapeError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
