#include "medvlm/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "medvlm/errors.hpp"

namespace medvlm {

using json = nlohmann::json;

namespace {

CorpusSpec to_spec(const std::map<Task, int>& counts, const DataGenSpec& g) {
    CorpusSpec s;
    s.counts = counts;
    s.image_size = g.image_size;
    s.modality = g.modality;
    s.volume_slices = g.volume_slices;
    return s;
}

json counts_to_json(const std::map<Task, int>& counts) {
    json j = json::object();
    for (const auto& [task, n] : counts) j[task_name(task)] = n;
    return j;
}

std::map<Task, int> counts_from_json(const json& j) {
    std::map<Task, int> counts;
    for (const auto& [key, val] : j.items()) counts[task_from_name(key)] = val.get<int>();
    return counts;
}

}  // namespace

CorpusSpec DataGenSpec::train_spec() const { return to_spec(train_counts, *this); }
CorpusSpec DataGenSpec::eval_spec() const { return to_spec(eval_counts, *this); }

CorpusSpec DataGenSpec::pretrain_spec() const {
    DataGenSpec g = *this;
    return to_spec({{Task::caption, pretrain_captions}}, g);
}

json RunConfig::to_json() const {
    json j;
    j["model"] = model.to_json();
    j["stages"] = {{"pretrain", pretrain.to_json()},
                   {"instruct", instruct.to_json()},
                   {"one_stage", one_stage}};
    j["data"] = {{"dir", data_dir.generic_string()},
                 {"train", train_file},
                 {"eval", eval_file},
                 {"pretrain", pretrain_file}};
    j["gen"] = {{"train_counts", counts_to_json(gen.train_counts)},
                {"eval_counts", counts_to_json(gen.eval_counts)},
                {"pretrain_captions", gen.pretrain_captions},
                {"image_size", gen.image_size},
                {"modality", modality_name(gen.modality)},
                {"volume_slices", gen.volume_slices}};
    j["seed"] = seed;
    j["eval_max_new"] = eval_max_new;
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c = desk_default();
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("stages")) {
        const auto& s = j.at("stages");
        if (s.contains("pretrain")) c.pretrain = StageConfig::from_json(s.at("pretrain"));
        if (s.contains("instruct")) c.instruct = StageConfig::from_json(s.at("instruct"));
        if (s.contains("one_stage")) c.one_stage = s.at("one_stage").get<bool>();
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        if (d.contains("dir")) c.data_dir = d.at("dir").get<std::string>();
        if (d.contains("train")) c.train_file = d.at("train").get<std::string>();
        if (d.contains("eval")) c.eval_file = d.at("eval").get<std::string>();
        if (d.contains("pretrain")) c.pretrain_file = d.at("pretrain").get<std::string>();
    }
    if (j.contains("gen")) {
        const auto& g = j.at("gen");
        if (g.contains("train_counts")) c.gen.train_counts = counts_from_json(g.at("train_counts"));
        if (g.contains("eval_counts")) c.gen.eval_counts = counts_from_json(g.at("eval_counts"));
        if (g.contains("pretrain_captions"))
            c.gen.pretrain_captions = g.at("pretrain_captions").get<int>();
        if (g.contains("image_size")) c.gen.image_size = g.at("image_size").get<int>();
        if (g.contains("modality"))
            c.gen.modality = modality_from_name(g.at("modality").get<std::string>());
        if (g.contains("volume_slices")) c.gen.volume_slices = g.at("volume_slices").get<int>();
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("eval_max_new")) c.eval_max_new = j.at("eval_max_new").get<int>();
    return c;
}

RunConfig RunConfig::desk_default() {
    RunConfig c;
    c.model = ModelConfig::desk_2d();

    c.pretrain.name = "pretrain";
    c.pretrain.frozen = {"encoder2d", "lm", "embed"};
    c.pretrain.lr = 1e-3f;
    c.pretrain.epochs = 1;
    c.pretrain.batch_size = 8;

    // Small batches give the step count a desk-scale model needs, and the
    // clip keeps late training from wandering between task optima.
    c.instruct.name = "instruct";
    c.instruct.lr = 3e-4f;
    c.instruct.epochs = 13;
    c.instruct.batch_size = 8;
    c.instruct.grad_clip = 1.0f;

    c.gen.train_counts = {{Task::classification, 500}, {Task::vqa_short, 500},
                          {Task::rec, 400},            {Task::reg, 125},
                          {Task::vqa_choice, 125},     {Task::caption, 150},
                          {Task::report_generation, 150}, {Task::vqa_long, 50}};
    c.gen.eval_counts = {{Task::classification, 100}, {Task::vqa_short, 100},
                         {Task::rec, 100},            {Task::reg, 30},
                         {Task::vqa_choice, 30},      {Task::caption, 20},
                         {Task::report_generation, 10}, {Task::vqa_long, 10}};
    c.gen.pretrain_captions = 512;
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config file " + path.string() + ": " + e.what());
    }
    return RunConfig::from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open config file for writing: " + path.string());
    os << cfg.to_json().dump(2) << "\n";
}

}  // namespace medvlm
