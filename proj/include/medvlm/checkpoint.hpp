#pragma once

// Named-tensor checkpoint container with a binary file format:
//   magic "MMCK", u32 version, u32 config-blob length + UTF-8 bytes,
//   u32 tensor count, then per tensor: u32 name length + bytes, u8 ndim,
//   ndim x u32 extents, fp32 little-endian data.
// The config blob is JSON carrying the model config echo, the RNG seed,
// and a stage provenance tag. Loads validate fully before mutating the
// model, so a truncated file leaves the model untouched.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medvlm/model.hpp"

namespace medvlm {

constexpr uint32_t kCheckpointVersion = 1;

struct TensorBlob {
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    uint32_t version = kCheckpointVersion;
    std::string config_json;  // model config echo (+ run config when present)
    uint64_t seed = 0;
    std::string stage;  // provenance tag ("pretrain", "instruct", ...)
    std::vector<std::pair<std::string, TensorBlob>> tensors;  // registration order

    const TensorBlob* find(const std::string& name) const;
};

// Snapshot of the model's parameters (all of them, or only those under the
// given namespaces when the filter is non-empty).
Checkpoint snapshot(const LvlmModel& model, const std::string& stage_tag,
                    const std::vector<std::string>& namespace_filter = {});

// Copies checkpoint tensors into the model by name.
//  - partial = false: checkpoint and model must carry exactly the same
//    parameter names, each with equal shape.
//  - partial = true: only names present in the checkpoint are written;
//    everything else keeps its current values. Shapes must still match.
// Returns the names written.
std::vector<std::string> apply_checkpoint(const Checkpoint& ckpt, LvlmModel& model,
                                          bool partial = false);

void write_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

// Convenience wrappers.
void save_checkpoint(const LvlmModel& model, const std::filesystem::path& path,
                     const std::string& stage_tag = "manual");
std::vector<std::string> load_checkpoint(const std::filesystem::path& path, LvlmModel& model,
                                         bool partial = false);

// Initializes a volumetric model from a trained 2D model's checkpoint.
// Per-slice variants receive encoder2d.*, the connector projection, lm.*
// and embed.*; compressor-specific parameters (attention queries and
// projections) stay freshly initialized. The 3D-encoder variant receives
// connector projection, lm.* and embed.* only. Returns the names written;
// any shape mismatch aborts with an error naming the tensor.
std::vector<std::string> transfer_2d_to_3d(const Checkpoint& ckpt2d, LvlmModel& model3d);

}  // namespace medvlm
