#include "medvlm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medvlm/errors.hpp"
#include "medvlm/metrics.hpp"
#include "medvlm/tokenizer.hpp"

namespace medvlm {

using json = nlohmann::json;

double MetricReport::value_for(Task t) const {
    for (const auto& m : per_task)
        if (m.task == t) return m.value;
    return -1.0;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    char buf[64];
    for (const auto& m : per_task) {
        std::snprintf(buf, sizeof(buf), "%.4f", m.value);
        os << "task=" << task_name(m.task) << " metric=" << m.metric << " value=" << buf
           << " n=" << m.count << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.2f", wall_seconds);
    os << "samples=" << total_samples << " wall_seconds=" << buf << " config=" << config_digest
       << "\n";
    return os.str();
}

json MetricReport::to_json() const {
    json per = json::array();
    for (const auto& m : per_task)
        per.push_back({{"task", task_name(m.task)},
                       {"metric", m.metric},
                       {"value", m.value},
                       {"count", m.count}});
    return json{{"per_task", per},
                {"samples", total_samples},
                {"wall_seconds", wall_seconds},
                {"config", config_digest}};
}

namespace {
std::string fnv1a_hex(const std::string& text) {
    uint64_t h = 14695981039346656037ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}
}  // namespace

MetricReport evaluate(const LvlmModel& model, const std::vector<MultimodalSample>& dataset,
                      const std::vector<Task>& tasks, int max_new) {
    if (dataset.empty()) throw DataError("evaluate: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();

    std::map<Task, std::pair<double, int>> sums;
    int used = 0;
    for (const auto& s : dataset) {
        if (!tasks.empty() && std::find(tasks.begin(), tasks.end(), s.task) == tasks.end()) continue;
        const auto ids = model.generate_for_sample(s, max_new);
        const std::string pred = tok::decode(ids);
        auto& [sum, count] = sums[s.task];
        sum += metrics::score(s.task, pred, s.response);
        count += 1;
        ++used;
    }
    if (used == 0) throw DataError("evaluate: no samples match the requested tasks");

    MetricReport report;
    report.total_samples = used;
    for (const auto& [task, sc] : sums)
        report.per_task.push_back(
            TaskMetric{task, metrics::metric_for_task(task), sc.first / sc.second, sc.second});
    report.config_digest = fnv1a_hex(model.config().to_json().dump());
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace medvlm
