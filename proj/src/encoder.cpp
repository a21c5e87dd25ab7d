#include "medvlm/encoder.hpp"

#include "medvlm/errors.hpp"

namespace medvlm {

void Encoder2DConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        throw ConfigError("2d encoder: image size " + std::to_string(image_size) +
                          " not divisible by patch size " + std::to_string(patch_size));
    if (channels < 1 || depth < 1 || heads < 1 || d_i < 1)
        throw ConfigError("2d encoder: channels/depth/heads/d_i must be positive");
    if (d_i % heads != 0)
        throw ConfigError("2d encoder: d_i " + std::to_string(d_i) + " not divisible by " +
                          std::to_string(heads) + " heads");
}

void Encoder3DConfig::validate() const {
    if (slices % patch_slices != 0 || height % patch_h != 0 || width % patch_w != 0)
        throw ConfigError("3d encoder: volume " + std::to_string(slices) + "x" +
                          std::to_string(height) + "x" + std::to_string(width) +
                          " not divisible by patch " + std::to_string(patch_slices) + "x" +
                          std::to_string(patch_h) + "x" + std::to_string(patch_w));
    if (depth < 1 || heads < 1 || d_i < 1 || d_i % heads != 0)
        throw ConfigError("3d encoder: bad depth/heads/d_i");
}

// ---------------------------------------------------------------------------
// Encoder2D
// ---------------------------------------------------------------------------

Encoder2D::Encoder2D(ParamStore& ps, const Rng& rng, const Encoder2DConfig& cfg,
                     const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    const int patch_dim = cfg.patch_size * cfg.patch_size * cfg.channels;
    patch_proj_ = Linear(ps, rng, prefix + ".patch_proj", patch_dim, cfg.d_i);
    if (cfg.use_pos_embed)
        pos_embed_ = ps.add(prefix + ".pos_embed",
                            init::trunc_normal<float>(rng, prefix + ".pos_embed",
                                                      {cfg.tokens(), cfg.d_i}, kInitStd));
    blocks_.reserve(static_cast<size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i)
        blocks_.emplace_back(ps, rng, prefix + ".block" + std::to_string(i), cfg.d_i, cfg.heads,
                             /*causal=*/false);
    final_norm_ = LayerNorm(ps, prefix + ".final_norm", cfg.d_i);
}

Tensor Encoder2D::forward(const Tensor& image) const {
    if (image.ndim() != 3 || image.size(0) != cfg_.image_size || image.size(1) != cfg_.image_size ||
        image.size(2) != cfg_.channels)
        throw ShapeError("2d encoder expects [" + std::to_string(cfg_.image_size) + "x" +
                         std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.channels) +
                         "], got " + shape_str(image.shape()));
    auto x = patch_proj_.forward(ops::patchify2d(image, cfg_.patch_size, cfg_.patch_size));
    if (pos_embed_.defined()) x = ops::add(x, pos_embed_);
    for (const auto& blk : blocks_) x = blk.forward(x);
    return final_norm_.forward(x);
}

Tensor Encoder2D::slice_to_image(const Tensor& volume, int slice) const {
    const int h = volume.size(1), w = volume.size(2), c = cfg_.channels;
    std::vector<float> img(static_cast<size_t>(h) * w * c);
    const float* src = volume.data() + static_cast<size_t>(slice) * h * w;
    for (int i = 0; i < h * w; ++i)
        for (int ch = 0; ch < c; ++ch) img[static_cast<size_t>(i) * c + ch] = src[i];
    return Tensor::from({h, w, c}, std::move(img));
}

Tensor Encoder2D::forward_slices(const Tensor& volume) const {
    if (volume.ndim() != 3 || volume.size(1) != cfg_.image_size || volume.size(2) != cfg_.image_size)
        throw ShapeError("per-slice encoder expects [N x " + std::to_string(cfg_.image_size) + " x " +
                         std::to_string(cfg_.image_size) + "], got " + shape_str(volume.shape()));
    const int n = volume.size(0);
    std::vector<Tensor> blocks;
    blocks.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) blocks.push_back(forward(slice_to_image(volume, j)));
    return ops::reshape(ops::concat(blocks, 0), {n, cfg_.tokens(), cfg_.d_i});
}

// ---------------------------------------------------------------------------
// Encoder3D
// ---------------------------------------------------------------------------

Encoder3D::Encoder3D(ParamStore& ps, const Rng& rng, const Encoder3DConfig& cfg,
                     const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    const int patch_dim = cfg.patch_slices * cfg.patch_h * cfg.patch_w;
    patch_proj_ = Linear(ps, rng, prefix + ".patch_proj", patch_dim, cfg.d_i);
    if (cfg.use_pos_embed)
        pos_embed_ = ps.add(prefix + ".pos_embed",
                            init::trunc_normal<float>(rng, prefix + ".pos_embed",
                                                      {cfg.tokens(), cfg.d_i}, kInitStd));
    blocks_.reserve(static_cast<size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i)
        blocks_.emplace_back(ps, rng, prefix + ".block" + std::to_string(i), cfg.d_i, cfg.heads,
                             /*causal=*/false);
    final_norm_ = LayerNorm(ps, prefix + ".final_norm", cfg.d_i);
}

Tensor Encoder3D::forward(const Tensor& volume) const {
    if (volume.ndim() != 3 || volume.size(0) != cfg_.slices || volume.size(1) != cfg_.height ||
        volume.size(2) != cfg_.width)
        throw ShapeError("3d encoder expects [" + std::to_string(cfg_.slices) + "x" +
                         std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + "], got " +
                         shape_str(volume.shape()));
    auto x = patch_proj_.forward(
        ops::patchify3d(volume, cfg_.patch_slices, cfg_.patch_h, cfg_.patch_w));
    if (pos_embed_.defined()) x = ops::add(x, pos_embed_);
    for (const auto& blk : blocks_) x = blk.forward(x);
    return final_norm_.forward(x);
}

}  // namespace medvlm
