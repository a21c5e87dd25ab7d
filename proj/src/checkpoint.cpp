#include "medvlm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "medvlm/errors.hpp"

namespace medvlm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};

void put_u32(std::ostream& os, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                                static_cast<unsigned char>((v >> 8) & 0xFF),
                                static_cast<unsigned char>((v >> 16) & 0xFF),
                                static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint (" + what + ")");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

const TensorBlob* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, blob] : tensors)
        if (n == name) return &blob;
    return nullptr;
}

Checkpoint snapshot(const LvlmModel& model, const std::string& stage_tag,
                    const std::vector<std::string>& namespace_filter) {
    Checkpoint ckpt;
    json cfg;
    cfg["model"] = model.config().to_json();
    ckpt.config_json = cfg.dump();
    ckpt.seed = model.seed();
    ckpt.stage = stage_tag;
    for (const auto& p : model.params().items()) {
        if (!namespace_filter.empty()) {
            const auto ns = param_namespace(p.name);
            if (std::find(namespace_filter.begin(), namespace_filter.end(), ns) ==
                namespace_filter.end())
                continue;
        }
        ckpt.tensors.emplace_back(p.name, TensorBlob{p.tensor.shape(), p.tensor.values()});
    }
    return ckpt;
}

std::vector<std::string> apply_checkpoint(const Checkpoint& ckpt, LvlmModel& model, bool partial) {
    // Validate everything first; only then mutate.
    for (const auto& [name, blob] : ckpt.tensors) {
        const auto* p = model.params().find(name);
        if (!p) throw IoError("checkpoint tensor '" + name + "' has no parameter in the model");
        if (p->tensor.shape() != blob.shape)
            throw IoError("checkpoint tensor '" + name + "' shape " + shape_str(blob.shape) +
                          " does not match model shape " + shape_str(p->tensor.shape()));
    }
    if (!partial) {
        for (const auto& p : model.params().items())
            if (!ckpt.find(p.name))
                throw IoError("model parameter '" + p.name + "' is missing from the checkpoint");
    }
    std::vector<std::string> written;
    for (const auto& [name, blob] : ckpt.tensors) {
        auto* p = model.params().find(name);
        std::copy(blob.data.begin(), blob.data.end(), p->tensor.data());
        written.push_back(name);
    }
    return written;
}

void write_checkpoint_file(const fs::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, 4);
    put_u32(os, ckpt.version);
    json blob;
    blob["config"] = json::parse(ckpt.config_json.empty() ? "{}" : ckpt.config_json);
    blob["seed"] = ckpt.seed;
    blob["stage"] = ckpt.stage;
    const std::string blob_text = blob.dump();
    put_u32(os, static_cast<uint32_t>(blob_text.size()));
    os.write(blob_text.data(), static_cast<std::streamsize>(blob_text.size()));
    put_u32(os, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const unsigned char ndim = static_cast<unsigned char>(tensor.shape.size());
        os.write(reinterpret_cast<const char*>(&ndim), 1);
        for (const int e : tensor.shape) put_u32(os, static_cast<uint32_t>(e));
        os.write(reinterpret_cast<const char*>(tensor.data.data()),
                 static_cast<std::streamsize>(tensor.data.size() * 4));
    }
    if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad checkpoint magic in " + path.string());
    Checkpoint ckpt;
    ckpt.version = get_u32(is, "version");
    if (ckpt.version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
    const uint32_t blob_len = get_u32(is, "config length");
    std::string blob_text(blob_len, '\0');
    if (!is.read(blob_text.data(), blob_len)) throw IoError("truncated checkpoint (config blob)");
    try {
        const json blob = json::parse(blob_text);
        if (blob.contains("config")) ckpt.config_json = blob.at("config").dump();
        if (blob.contains("seed")) ckpt.seed = blob.at("seed").get<uint64_t>();
        if (blob.contains("stage")) ckpt.stage = blob.at("stage").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint config blob: " + std::string(e.what()));
    }
    const uint32_t count = get_u32(is, "tensor count");
    ckpt.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(is, "tensor name length");
        if (name_len > 4096) throw IoError("implausible tensor name length in " + path.string());
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw IoError("truncated checkpoint (tensor name)");
        unsigned char ndim = 0;
        if (!is.read(reinterpret_cast<char*>(&ndim), 1)) throw IoError("truncated checkpoint (ndim)");
        if (ndim == 0 || ndim > 8) throw IoError("implausible tensor rank in " + path.string());
        TensorBlob blob;
        blob.shape.resize(ndim);
        for (int d = 0; d < ndim; ++d) {
            const uint32_t e = get_u32(is, "extent");
            if (e == 0 || e > (1u << 28)) throw IoError("implausible extent in " + path.string());
            blob.shape[static_cast<size_t>(d)] = static_cast<int>(e);
        }
        blob.data.resize(static_cast<size_t>(shape_numel(blob.shape)));
        if (!is.read(reinterpret_cast<char*>(blob.data.data()),
                     static_cast<std::streamsize>(blob.data.size() * 4)))
            throw IoError("truncated checkpoint (tensor '" + name + "' payload)");
        ckpt.tensors.emplace_back(std::move(name), std::move(blob));
    }
    return ckpt;
}

void save_checkpoint(const LvlmModel& model, const fs::path& path, const std::string& stage_tag) {
    write_checkpoint_file(path, snapshot(model, stage_tag));
}

std::vector<std::string> load_checkpoint(const fs::path& path, LvlmModel& model, bool partial) {
    return apply_checkpoint(read_checkpoint_file(path), model, partial);
}

std::vector<std::string> transfer_2d_to_3d(const Checkpoint& ckpt2d, LvlmModel& model3d) {
    const auto kind = model3d.config().encoder_kind;
    if (kind == EncoderKind::e2d)
        throw ConfigError("2d-to-3d transfer target must be a volumetric model");

    std::vector<std::string> prefixes{"connector.mlp.", "lm.", "embed."};
    if (kind == EncoderKind::slices2d) prefixes.push_back("encoder2d.");

    Checkpoint filtered;
    for (const auto& [name, blob] : ckpt2d.tensors) {
        for (const auto& pre : prefixes) {
            if (name.rfind(pre, 0) == 0) {
                const auto* p = model3d.params().find(name);
                if (!p)
                    throw ShapeError("2d-to-3d transfer: model has no parameter '" + name + "'");
                if (p->tensor.shape() != blob.shape)
                    throw ShapeError("2d-to-3d transfer: shape mismatch for tensor '" + name +
                                     "': checkpoint " + shape_str(blob.shape) + " vs model " +
                                     shape_str(p->tensor.shape()));
                filtered.tensors.emplace_back(name, blob);
                break;
            }
        }
    }
    if (filtered.tensors.empty())
        throw ConfigError("2d-to-3d transfer: checkpoint contains no transferable tensors");
    return apply_checkpoint(filtered, model3d, /*partial=*/true);
}

}  // namespace medvlm
