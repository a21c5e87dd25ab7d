#pragma once

// Ablation harness: trains matched configurations on shared seeded
// synthetic corpora and reports them side by side. Purely comparative;
// it asserts nothing about which configuration wins.

#include <filesystem>
#include <string>
#include <vector>

#include "medvlm/config.hpp"
#include "medvlm/eval.hpp"

namespace medvlm {

enum class AblationAxis { encoder_freeze, llm_strategy, init_3d, stage_count, connector_kind };

const char* ablation_axis_name(AblationAxis a);
AblationAxis ablation_axis_from_name(const std::string& name);
std::vector<AblationAxis> all_ablation_axes();

struct AblationRun {
    std::string label;
    MetricReport report;
};

struct AblationTable {
    AblationAxis axis;
    std::vector<AblationRun> runs;
    std::string to_text() const;
};

// Trains every configuration of the axis on corpora generated under
// `workdir` and evaluates on a shared held-out split.
AblationTable run_ablation(AblationAxis axis, const RunConfig& base,
                           const std::filesystem::path& workdir, uint64_t seed);

}  // namespace medvlm
