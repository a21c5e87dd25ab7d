#pragma once

// Greedy-generation evaluation over a dataset, aggregated per task.

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medvlm/data.hpp"
#include "medvlm/model.hpp"

namespace medvlm {

struct TaskMetric {
    Task task;
    std::string metric;  // "exact_match" | "iou" | "token_f1"
    double value = 0.0;
    int count = 0;
};

struct MetricReport {
    std::vector<TaskMetric> per_task;
    int total_samples = 0;
    double wall_seconds = 0.0;
    std::string config_digest;  // hash of the model config echo

    double value_for(Task t) const;  // -1 when the task is absent
    std::string to_text() const;    // one "task= metric= value= n=" line per task
    nlohmann::json to_json() const;
};

// Greedy-generates a response per sample and scores it against the
// reference. `tasks` empty means every task present in the dataset.
// The model is not mutated (no-grad generation only).
MetricReport evaluate(const LvlmModel& model, const std::vector<MultimodalSample>& dataset,
                      const std::vector<Task>& tasks = {}, int max_new = 48);

}  // namespace medvlm
