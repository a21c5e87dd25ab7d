#include "medvlm/adapters.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "medvlm/errors.hpp"

namespace medvlm {

using json = nlohmann::json;

json LoraSpec::to_json() const {
    json j{{"rank", rank}, {"alpha", alpha}, {"targets", targets}};
    if (lr_override) j["lr_override"] = *lr_override;
    return j;
}

LoraSpec LoraSpec::from_json(const json& j) {
    LoraSpec s;
    if (j.contains("rank")) s.rank = j.at("rank").get<int>();
    if (j.contains("alpha")) s.alpha = j.at("alpha").get<float>();
    if (j.contains("targets")) s.targets = j.at("targets").get<std::vector<std::string>>();
    if (j.contains("lr_override")) s.lr_override = j.at("lr_override").get<float>();
    return s;
}

json StageConfig::to_json() const {
    json j{{"name", name},   {"frozen", frozen},       {"lr", lr},
           {"epochs", epochs}, {"batch_size", batch_size}, {"seq_cap", seq_cap},
           {"grad_clip", grad_clip}};
    if (lora) j["lora"] = lora->to_json();
    return j;
}

StageConfig StageConfig::from_json(const json& j) {
    StageConfig s;
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("frozen")) s.frozen = j.at("frozen").get<std::vector<std::string>>();
    if (j.contains("lora")) s.lora = LoraSpec::from_json(j.at("lora"));
    if (j.contains("lr")) s.lr = j.at("lr").get<float>();
    if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<int>();
    if (j.contains("seq_cap")) s.seq_cap = j.at("seq_cap").get<int>();
    if (j.contains("grad_clip")) s.grad_clip = j.at("grad_clip").get<float>();
    return s;
}

StageConfig StageConfig::pretrain_preset(const LvlmModel& model) {
    StageConfig s;
    s.name = "pretrain";
    for (const auto& ns : model.namespaces())
        if (ns != "connector") s.frozen.push_back(ns);
    s.lr = 1e-3f;
    s.epochs = 1;
    s.batch_size = 64;
    return s;
}

StageConfig StageConfig::instruct_preset() {
    StageConfig s;
    s.name = "instruct";
    s.lr = 2e-5f;
    s.epochs = 3;
    s.batch_size = 16;
    return s;
}

StageConfig StageConfig::lora_preset() {
    StageConfig s = instruct_preset();
    s.name = "lora";
    s.frozen = {"lm", "embed"};
    s.lora = LoraSpec{};
    return s;
}

StageConfig StageConfig::lora_star_preset() {
    StageConfig s = lora_preset();
    s.name = "lora_star";
    s.lora->lr_override = 2e-4f;
    return s;
}

void set_trainable(LvlmModel& model, const StageConfig& stage) {
    const auto known = model.namespaces();
    for (const auto& ns : stage.frozen)
        if (std::find(known.begin(), known.end(), ns) == known.end())
            throw ConfigError("freeze set names unknown namespace '" + ns + "' (model has: " +
                              [&] {
                                  std::string all;
                                  for (const auto& k : known) all += (all.empty() ? "" : ", ") + k;
                                  return all;
                              }() + ")");
    for (auto& p : model.params().items()) {
        const bool frozen = std::find(stage.frozen.begin(), stage.frozen.end(),
                                      param_namespace(p.name)) != stage.frozen.end();
        p.trainable = !frozen;
        p.tensor.set_requires_grad(!frozen);
    }
}

namespace {
bool matches_default_target(const std::string& name) {
    return name.rfind("lm.", 0) == 0 &&
           (name.find(".attn.") != std::string::npos || name.find(".mlp.") != std::string::npos);
}
}  // namespace

std::vector<std::string> lora_inject(LvlmModel& model, const LoraSpec& spec) {
    if (spec.rank < 1) throw ConfigError("lora rank must be >= 1, got " + std::to_string(spec.rank));
    std::vector<Linear*> linears;
    model.collect_linears(linears);

    std::vector<Linear*> matched;
    for (auto* lin : linears) {
        bool hit;
        if (spec.targets.empty()) {
            hit = matches_default_target(lin->name);
        } else {
            hit = false;
            for (const auto& pat : spec.targets) hit = hit || lin->name.find(pat) != std::string::npos;
        }
        if (hit && !lin->lora) matched.push_back(lin);
    }
    if (matched.empty()) throw ConfigError("lora target patterns matched no linear layer");

    const Rng rng(model.seed());
    const float scale = spec.alpha / static_cast<float>(spec.rank);
    std::vector<std::string> names;
    for (auto* lin : matched) {
        const int in = lin->in_dim(), out = lin->out_dim();
        LoraAdapterT<float> ad;
        ad.a = model.params().add(lin->name + ".lora_a",
                                  init::trunc_normal<float>(rng, lin->name + ".lora_a",
                                                            {in, spec.rank}, kInitStd));
        ad.b = model.params().add(lin->name + ".lora_b", init::zeros<float>({spec.rank, out}));
        ad.scale = scale;
        lin->lora = std::move(ad);
        model.params().set_trainable(lin->name + ".weight", false);
        names.push_back(lin->name);
    }
    return names;
}

MergeStatus lora_merge(LvlmModel& model) {
    std::vector<Linear*> linears;
    model.collect_linears(linears);
    bool any = false;
    for (auto* lin : linears) {
        if (!lin->lora) continue;
        any = true;
        NoGradGuard ng;
        const auto delta = ops::mul_scalar(ops::matmul(lin->lora->a, lin->lora->b), lin->lora->scale);
        float* w = lin->weight.data();
        const float* d = delta.data();
        for (int64_t i = 0; i < lin->weight.numel(); ++i) w[i] += d[i];
        model.params().remove(lin->name + ".lora_a");
        model.params().remove(lin->name + ".lora_b");
        lin->lora.reset();
    }
    return any ? MergeStatus::merged : MergeStatus::no_adapters;
}

}  // namespace medvlm
