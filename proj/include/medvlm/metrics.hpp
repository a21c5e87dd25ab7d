#pragma once

// Task metrics: normalized exact match, box IoU, and token-level F1.
// Deliberately simple definitions; each report records which one it used.

#include <string>

#include "medvlm/data.hpp"

namespace medvlm {
namespace metrics {

// Case-folded, whitespace-trimmed copy.
std::string normalize(const std::string& s);

// 1.0 when normalize(pred) == normalize(ref), else 0.0.
double exact_match(const std::string& pred, const std::string& ref);

// IoU of "x1,y1,x2,y2" boxes; unparsable or degenerate prediction -> 0.
double box_iou(const std::string& pred, const std::string& ref);

// Multiset F1 over whitespace-split tokens of the normalized strings.
// Both empty -> 1.0; one empty -> 0.0.
double token_f1(const std::string& pred, const std::string& ref);

// Metric assigned to each task.
const char* metric_for_task(Task t);
double score(Task t, const std::string& pred, const std::string& ref);

}  // namespace metrics
}  // namespace medvlm
