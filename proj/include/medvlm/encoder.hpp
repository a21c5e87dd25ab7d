#pragma once

// Visual front-ends: a 2D patch encoder, a 3D volumetric encoder, and
// per-slice application of the 2D encoder. All are pre-norm ViTs from
// random initialization (truncated normal, std 0.02), no CLS token: every
// patch token is emitted.

#include <string>
#include <vector>

#include "medvlm/nn.hpp"
#include "medvlm/tensor.hpp"

namespace medvlm {

struct Encoder2DConfig {
    int image_size = 256;
    int patch_size = 16;
    int channels = 3;
    int depth = 2;
    int heads = 4;
    int d_i = 64;
    bool use_pos_embed = true;

    int tokens() const { return (image_size / patch_size) * (image_size / patch_size); }
    void validate() const;
};

struct Encoder3DConfig {
    int slices = 32;
    int height = 256;
    int width = 256;
    int patch_slices = 4;
    int patch_h = 16;
    int patch_w = 16;
    int depth = 2;
    int heads = 4;
    int d_i = 64;
    bool use_pos_embed = true;

    int tokens() const {
        return (slices / patch_slices) * (height / patch_h) * (width / patch_w);
    }
    void validate() const;
};

class Encoder2D {
public:
    Encoder2D(ParamStore& ps, const Rng& rng, const Encoder2DConfig& cfg,
              const std::string& prefix = "encoder2d");

    const Encoder2DConfig& config() const { return cfg_; }

    // image: [H x W x C] -> [tokens x d_i]
    Tensor forward(const Tensor& image) const;

    // volume: [N x H x W], single-channel slices replicated to the encoder's
    // channel count; output [N x tokens x d_i], block j == forward(slice j).
    Tensor forward_slices(const Tensor& volume) const;

    // Standalone per-slice image: [H x W] -> [H x W x C] channel replica.
    Tensor slice_to_image(const Tensor& volume, int slice) const;

private:
    Encoder2DConfig cfg_;
    Linear patch_proj_;
    Tensor pos_embed_;
    std::vector<TransformerBlock> blocks_;
    LayerNorm final_norm_;
};

class Encoder3D {
public:
    Encoder3D(ParamStore& ps, const Rng& rng, const Encoder3DConfig& cfg,
              const std::string& prefix = "encoder3d");

    const Encoder3DConfig& config() const { return cfg_; }

    // volume: [N x H x W] -> [tokens x d_i]
    Tensor forward(const Tensor& volume) const;

private:
    Encoder3DConfig cfg_;
    Linear patch_proj_;
    Tensor pos_embed_;
    std::vector<TransformerBlock> blocks_;
    LayerNorm final_norm_;
};

}  // namespace medvlm
