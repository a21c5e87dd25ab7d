#pragma once

// The run configuration file: one JSON document describing the model, the
// two training stages, dataset locations, and the synthetic-data recipe.
// Echoed into checkpoints and reports so ablations stay diffable.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "medvlm/adapters.hpp"
#include "medvlm/model.hpp"
#include "medvlm/synth.hpp"

namespace medvlm {

struct DataGenSpec {
    std::map<Task, int> train_counts;
    std::map<Task, int> eval_counts;
    int pretrain_captions = 0;
    int image_size = 64;
    Modality modality = Modality::image2d;
    int volume_slices = 4;

    CorpusSpec train_spec() const;
    CorpusSpec eval_spec() const;
    CorpusSpec pretrain_spec() const;
};

struct RunConfig {
    ModelConfig model;
    StageConfig pretrain;
    StageConfig instruct;
    bool one_stage = false;
    std::filesystem::path data_dir = "data";
    std::string train_file = "train.jsonl";
    std::string eval_file = "eval.jsonl";
    std::string pretrain_file = "pretrain.jsonl";
    DataGenSpec gen;
    uint64_t seed = 7;
    int eval_max_new = 48;

    std::filesystem::path train_path() const { return data_dir / train_file; }
    std::filesystem::path eval_path() const { return data_dir / eval_file; }
    std::filesystem::path pretrain_path() const { return data_dir / pretrain_file; }

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    // A configuration that trains and evaluates well in CPU minutes.
    static RunConfig desk_default();
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace medvlm
