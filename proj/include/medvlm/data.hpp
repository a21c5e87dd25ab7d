#pragma once

// Multi-task instruction dataset: record schema, sidecar image format,
// line-delimited dataset files, and batch construction with loss masking.
//
// Dataset file: UTF-8 JSON, one record per line, fields
//   {"image": relative path or null, "modality": "2d"|"3d"|"none",
//    "prompt": string, "response": string, "task": string}
// Image sidecar: magic "MMIM", u8 ndim, ndim x u32 little-endian extents,
// then raw little-endian fp32 in row-major order. 2D payloads are H,W,C;
// 3D payloads are N,H,W; values lie in [0,1].

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medvlm/tensor.hpp"

namespace medvlm {

enum class Task {
    classification,
    report_generation,
    vqa_long,
    vqa_short,
    vqa_choice,
    rec,
    reg,
    caption,
};

const char* task_name(Task t);
Task task_from_name(const std::string& name);  // DataError on unknown tag
std::vector<Task> all_tasks();

enum class Modality { none, image2d, volume3d };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

struct ImageBox {
    int x1, y1, x2, y2;  // half-open pixel box, x1 < x2, y1 < y2
    double iou(const ImageBox& other) const;
};

// Parse "x1,y1,x2,y2" (integers). Returns nullopt on any malformation.
std::optional<ImageBox> parse_box(const std::string& text);

struct MultimodalSample {
    Modality modality = Modality::none;
    Tensor image;            // [H x W x C] or [N x H x W]; undefined when modality is none
    std::string image_path;  // relative sidecar path as stored in the record ("" when none)
    std::string prompt;
    std::string response;
    Task task = Task::caption;

    int image_height() const;  // H for both modalities
    int image_width() const;
};

// Throws DataError when a sample violates its task invariants (rec box
// malformed/out-of-bounds, caption with non-empty prompt, ...).
void validate_sample(const MultimodalSample& s, const std::string& context);

// --- sidecar I/O ---------------------------------------------------------

void write_image_sidecar(const std::filesystem::path& path, const Tensor& payload);
Tensor read_image_sidecar(const std::filesystem::path& path);

// --- dataset I/O ----------------------------------------------------------

// Writes records to `jsonl_path`; image payloads go to sidecar files under
// "<stem>_images/" next to the dataset file. Samples gain image_path.
void save_dataset(const std::filesystem::path& jsonl_path, std::vector<MultimodalSample>& samples);

// Reads and validates every record; image payloads are resolved relative to
// the dataset file's directory. Errors carry the 1-based line number.
std::vector<MultimodalSample> load_dataset(const std::filesystem::path& jsonl_path);

// --- batching -------------------------------------------------------------

struct BatchRow {
    std::vector<int> token_ids;      // layout [BOS, IMG x l_img, prompt, response, EOS, PAD...]
    std::vector<uint8_t> loss_mask;  // 1 exactly on response tokens and the terminating EOS
    int length = 0;                  // tokens before padding
    const MultimodalSample* sample = nullptr;
};

struct Batch {
    std::vector<BatchRow> rows;
    int seq_len = 0;  // common padded length
};

// l_img = number of image tokens the connector will emit for this model
// (0 for text-only samples). Throws DataError when image+prompt leave no
// room for a single response token under the cap.
Batch build_batch(const std::vector<const MultimodalSample*>& samples, int l_img, int cap = 2048);

}  // namespace medvlm
