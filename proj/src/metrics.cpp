#include "medvlm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace medvlm {
namespace metrics {

std::string normalize(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

double exact_match(const std::string& pred, const std::string& ref) {
    return normalize(pred) == normalize(ref) ? 1.0 : 0.0;
}

double box_iou(const std::string& pred, const std::string& ref) {
    const auto pb = parse_box(normalize(pred));
    const auto rb = parse_box(normalize(ref));
    if (!pb || !rb) return 0.0;
    if (pb->x1 >= pb->x2 || pb->y1 >= pb->y2) return 0.0;
    if (rb->x1 >= rb->x2 || rb->y1 >= rb->y2) return 0.0;
    return rb->iou(*pb);
}

namespace {
std::map<std::string, int> token_counts(const std::string& s) {
    std::map<std::string, int> counts;
    std::istringstream is(normalize(s));
    std::string t;
    while (is >> t) counts[t] += 1;
    return counts;
}
}  // namespace

double token_f1(const std::string& pred, const std::string& ref) {
    const auto pc = token_counts(pred);
    const auto rc = token_counts(ref);
    int np = 0, nr = 0, overlap = 0;
    for (const auto& [t, c] : pc) np += c;
    for (const auto& [t, c] : rc) nr += c;
    if (np == 0 && nr == 0) return 1.0;
    if (np == 0 || nr == 0) return 0.0;
    for (const auto& [t, c] : pc) {
        const auto it = rc.find(t);
        if (it != rc.end()) overlap += std::min(c, it->second);
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / np;
    const double r = static_cast<double>(overlap) / nr;
    return 2.0 * p * r / (p + r);
}

const char* metric_for_task(Task t) {
    switch (t) {
        case Task::classification:
        case Task::vqa_short:
        case Task::vqa_choice:
        case Task::reg:
            return "exact_match";
        case Task::rec:
            return "iou";
        case Task::report_generation:
        case Task::vqa_long:
        case Task::caption:
            return "token_f1";
    }
    return "?";
}

double score(Task t, const std::string& pred, const std::string& ref) {
    switch (t) {
        case Task::classification:
        case Task::vqa_short:
        case Task::vqa_choice:
        case Task::reg:
            return exact_match(pred, ref);
        case Task::rec:
            return box_iou(pred, ref);
        case Task::report_generation:
        case Task::vqa_long:
        case Task::caption:
            return token_f1(pred, ref);
    }
    return 0.0;
}

}  // namespace metrics
}  // namespace medvlm
