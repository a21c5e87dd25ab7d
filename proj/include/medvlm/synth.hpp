#pragma once

// Synthetic multi-task corpus generator. Scenes are colored geometric
// shapes placed on an 8-pixel grid; every task's answer is derived from
// the scene parameters, so ground truth is exact by construction.
// Deterministic under a seed: the same (spec, seed) pair produces
// byte-identical dataset files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "medvlm/data.hpp"

namespace medvlm {

enum class ShapeKind { square, circle, triangle, cross };

const char* shape_name(ShapeKind k);

struct SceneShape {
    ShapeKind kind;
    int color;              // index into the fixed palette
    int x1, y1, x2, y2;     // half-open bounding box on the pixel grid
};

const char* color_name(int color);
int palette_size();

struct Scene {
    int height = 64;
    int width = 64;
    std::vector<SceneShape> shapes;
};

// Rasterize to [H x W x 3] floats in [0,1].
Tensor render_scene(const Scene& scene);

// Grayscale luminance extruded across n identical slices: [N x H x W].
Tensor render_scene_volume(const Scene& scene, int n_slices);

struct CorpusSpec {
    std::map<Task, int> counts;     // records per task
    int image_size = 64;
    Modality modality = Modality::image2d;
    int volume_slices = 4;          // used when modality is 3d
};

// One generated record with its scene retained for auditing.
struct GeneratedSample {
    Scene scene;
    MultimodalSample sample;
};

// Build all samples in memory (scene metadata included for self-audit).
std::vector<GeneratedSample> generate_corpus(const CorpusSpec& spec, uint64_t seed);

// Generate and persist as a dataset file + sidecars; returns record count.
int make_synthetic_corpus(const std::filesystem::path& jsonl_path, const CorpusSpec& spec,
                          uint64_t seed);

}  // namespace medvlm
