#include "medvlm/data.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "medvlm/errors.hpp"
#include "medvlm/tokenizer.hpp"
#include <nlohmann/json.hpp>

namespace medvlm {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// enums
// ---------------------------------------------------------------------------

namespace {
constexpr std::array<std::pair<Task, const char*>, 8> kTaskNames{{
    {Task::classification, "classification"},
    {Task::report_generation, "report_generation"},
    {Task::vqa_long, "vqa_long"},
    {Task::vqa_short, "vqa_short"},
    {Task::vqa_choice, "vqa_choice"},
    {Task::rec, "rec"},
    {Task::reg, "reg"},
    {Task::caption, "caption"},
}};
}  // namespace

const char* task_name(Task t) {
    for (const auto& [task, name] : kTaskNames)
        if (task == t) return name;
    return "?";
}

Task task_from_name(const std::string& name) {
    for (const auto& [task, n] : kTaskNames)
        if (name == n) return task;
    throw DataError("unknown task tag: '" + name + "'");
}

std::vector<Task> all_tasks() {
    std::vector<Task> out;
    for (const auto& [task, name] : kTaskNames) out.push_back(task);
    return out;
}

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::none: return "none";
        case Modality::image2d: return "2d";
        case Modality::volume3d: return "3d";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    if (name == "none") return Modality::none;
    if (name == "2d") return Modality::image2d;
    if (name == "3d") return Modality::volume3d;
    throw DataError("unknown modality: '" + name + "'");
}

// ---------------------------------------------------------------------------
// boxes
// ---------------------------------------------------------------------------

double ImageBox::iou(const ImageBox& o) const {
    const int ix1 = std::max(x1, o.x1), iy1 = std::max(y1, o.y1);
    const int ix2 = std::min(x2, o.x2), iy2 = std::min(y2, o.y2);
    const int64_t inter =
        static_cast<int64_t>(std::max(0, ix2 - ix1)) * std::max(0, iy2 - iy1);
    const int64_t area_a = static_cast<int64_t>(x2 - x1) * (y2 - y1);
    const int64_t area_b = static_cast<int64_t>(o.x2 - o.x1) * (o.y2 - o.y1);
    const int64_t uni = area_a + area_b - inter;
    return uni <= 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<ImageBox> parse_box(const std::string& text) {
    std::array<int, 4> vals{};
    size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        if (pos >= text.size()) return std::nullopt;
        size_t consumed = 0;
        int v = 0;
        try {
            v = std::stoi(text.substr(pos), &consumed);
        } catch (...) {
            return std::nullopt;
        }
        if (consumed == 0) return std::nullopt;
        vals[static_cast<size_t>(i)] = v;
        pos += consumed;
        if (i < 3) {
            if (pos >= text.size() || text[pos] != ',') return std::nullopt;
            ++pos;
        }
    }
    if (pos != text.size()) return std::nullopt;
    return ImageBox{vals[0], vals[1], vals[2], vals[3]};
}

// ---------------------------------------------------------------------------
// samples
// ---------------------------------------------------------------------------

int MultimodalSample::image_height() const {
    if (!image.defined()) return 0;
    return modality == Modality::image2d ? image.size(0) : image.size(1);
}

int MultimodalSample::image_width() const {
    if (!image.defined()) return 0;
    return modality == Modality::image2d ? image.size(1) : image.size(2);
}

void validate_sample(const MultimodalSample& s, const std::string& context) {
    if (s.modality != Modality::none) {
        if (!s.image.defined() || s.image.ndim() != 3)
            throw DataError(context + ": sample with modality '" + modality_name(s.modality) +
                            "' lacks a 3-extent image payload");
    } else if (s.image.defined()) {
        throw DataError(context + ": text-only sample carries an image payload");
    }
    if (s.task == Task::caption && !s.prompt.empty())
        throw DataError(context + ": caption samples must have an empty prompt");
    if (s.task == Task::rec) {
        const auto box = parse_box(s.response);
        if (!box)
            throw DataError(context + ": rec response is not an 'x1,y1,x2,y2' box: '" + s.response + "'");
        if (box->x1 >= box->x2 || box->y1 >= box->y2)
            throw DataError(context + ": rec box has non-positive extent: '" + s.response + "'");
        if (box->x1 < 0 || box->y1 < 0 || box->x2 > s.image_width() || box->y2 > s.image_height())
            throw DataError(context + ": rec box '" + s.response + "' outside image bounds " +
                            std::to_string(s.image_width()) + "x" + std::to_string(s.image_height()));
    }
}

// ---------------------------------------------------------------------------
// sidecar I/O
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v & 0xFF),
                                         static_cast<unsigned char>((v >> 8) & 0xFF),
                                         static_cast<unsigned char>((v >> 16) & 0xFF),
                                         static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b.data()), 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4))
        throw IoError("truncated while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32_block(std::ostream& os, const float* data, size_t n) {
    // Little-endian host assumed (checked once at startup below).
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void get_f32_block(std::istream& is, float* data, size_t n, const std::string& what) {
    if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4)))
        throw IoError("truncated while reading " + what);
}

const bool kLittleEndianChecked = [] {
    const uint32_t probe = 1;
    if (*reinterpret_cast<const unsigned char*>(&probe) != 1)
        throw IoError("big-endian hosts are not supported by the sidecar/checkpoint formats");
    return true;
}();

constexpr char kImageMagic[4] = {'M', 'M', 'I', 'M'};

}  // namespace

void write_image_sidecar(const fs::path& path, const Tensor& payload) {
    if (!payload.defined() || payload.ndim() != 3)
        throw IoError("image sidecar payload must have 3 extents");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open sidecar for writing: " + path.string());
    os.write(kImageMagic, 4);
    const unsigned char ndim = 3;
    os.write(reinterpret_cast<const char*>(&ndim), 1);
    for (int i = 0; i < 3; ++i) put_u32(os, static_cast<uint32_t>(payload.size(i)));
    put_f32_block(os, payload.data(), static_cast<size_t>(payload.numel()));
    if (!os) throw IoError("failed writing sidecar: " + path.string());
}

Tensor read_image_sidecar(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open sidecar: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kImageMagic, 4) != 0)
        throw IoError("bad sidecar magic in " + path.string());
    unsigned char ndim = 0;
    if (!is.read(reinterpret_cast<char*>(&ndim), 1) || ndim != 3)
        throw IoError("unsupported sidecar ndim in " + path.string());
    Shape shape(3);
    for (int i = 0; i < 3; ++i) {
        const uint32_t e = get_u32(is, "sidecar extent");
        if (e == 0 || e > (1u << 24)) throw IoError("implausible sidecar extent in " + path.string());
        shape[static_cast<size_t>(i)] = static_cast<int>(e);
    }
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    get_f32_block(is, data.data(), data.size(), "sidecar payload " + path.string());
    return Tensor::from(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------
// dataset I/O
// ---------------------------------------------------------------------------

void save_dataset(const fs::path& jsonl_path, std::vector<MultimodalSample>& samples) {
    const fs::path dir = jsonl_path.parent_path();
    const std::string stem = jsonl_path.stem().string();
    const fs::path img_dir_rel = stem + "_images";
    bool img_dir_made = false;

    std::ofstream os(jsonl_path);
    if (!os) throw IoError("cannot open dataset for writing: " + jsonl_path.string());
    int idx = 0;
    for (auto& s : samples) {
        validate_sample(s, jsonl_path.string() + " record " + std::to_string(idx + 1));
        json rec;
        if (s.modality == Modality::none) {
            rec["image"] = nullptr;
            s.image_path.clear();
        } else {
            if (!img_dir_made) {
                fs::create_directories(dir / img_dir_rel);
                img_dir_made = true;
            }
            char name[32];
            std::snprintf(name, sizeof(name), "%06d.mmim", idx);
            s.image_path = (img_dir_rel / name).generic_string();
            write_image_sidecar(dir / s.image_path, s.image);
            rec["image"] = s.image_path;
        }
        rec["modality"] = modality_name(s.modality);
        rec["prompt"] = s.prompt;
        rec["response"] = s.response;
        rec["task"] = task_name(s.task);
        os << rec.dump() << "\n";
        ++idx;
    }
    if (!os) throw IoError("failed writing dataset: " + jsonl_path.string());
}

std::vector<MultimodalSample> load_dataset(const fs::path& jsonl_path) {
    std::ifstream is(jsonl_path);
    if (!is) throw IoError("cannot open dataset: " + jsonl_path.string());
    const fs::path dir = jsonl_path.parent_path();
    std::vector<MultimodalSample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string context = jsonl_path.filename().string() + ":" + std::to_string(line_no);
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(context + ": malformed record: " + e.what());
        }
        MultimodalSample s;
        try {
            s.modality = modality_from_name(rec.at("modality").get<std::string>());
            s.prompt = rec.at("prompt").get<std::string>();
            s.response = rec.at("response").get<std::string>();
            s.task = task_from_name(rec.at("task").get<std::string>());
            if (!rec.at("image").is_null()) s.image_path = rec.at("image").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError(context + ": missing or mistyped field: " + e.what());
        }
        if (s.modality != Modality::none) {
            if (s.image_path.empty())
                throw DataError(context + ": modality '" + modality_name(s.modality) +
                                "' requires an image path");
            s.image = read_image_sidecar(dir / s.image_path);
        } else if (!s.image_path.empty()) {
            throw DataError(context + ": modality 'none' with a non-null image path");
        }
        validate_sample(s, context);
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

Batch build_batch(const std::vector<const MultimodalSample*>& samples, int l_img, int cap) {
    if (samples.empty()) throw DataError("build_batch: empty sample list");
    const Modality modality = samples[0]->modality;
    for (const auto* s : samples)
        if (s->modality != modality)
            throw DataError("build_batch: samples mix image modalities");

    Batch batch;
    batch.rows.reserve(samples.size());
    int max_len = 0;
    for (const auto* s : samples) {
        const int li = s->modality == Modality::none ? 0 : l_img;
        const auto prompt_ids = tok::encode(s->prompt);
        auto response_ids = tok::encode(s->response);

        const int fixed = 1 + li + static_cast<int>(prompt_ids.size());  // BOS + image + prompt
        // Room for at least one supervised response token; otherwise the
        // row would carry zero supervision, which must not happen silently.
        const int room = cap - fixed;
        if (room < 1)
            throw DataError("build_batch: image+prompt occupy " + std::to_string(fixed) +
                            " tokens, leaving no room for a response under cap " + std::to_string(cap));
        bool keep_eos = true;
        if (static_cast<int>(response_ids.size()) + 1 > room) {
            response_ids.resize(static_cast<size_t>(room));  // truncate tail, drop EOS
            keep_eos = false;
        }

        BatchRow row;
        row.sample = s;
        row.token_ids.push_back(tok::BOS);
        row.token_ids.insert(row.token_ids.end(), static_cast<size_t>(li), tok::IMG);
        row.token_ids.insert(row.token_ids.end(), prompt_ids.begin(), prompt_ids.end());
        row.loss_mask.assign(row.token_ids.size(), 0);
        for (const int id : response_ids) {
            row.token_ids.push_back(id);
            row.loss_mask.push_back(1);
        }
        if (keep_eos) {
            row.token_ids.push_back(tok::EOS);
            row.loss_mask.push_back(1);
        }
        row.length = static_cast<int>(row.token_ids.size());
        max_len = std::max(max_len, row.length);
        batch.rows.push_back(std::move(row));
    }

    batch.seq_len = max_len;
    for (auto& row : batch.rows) {
        row.token_ids.resize(static_cast<size_t>(max_len), tok::PAD);
        row.loss_mask.resize(static_cast<size_t>(max_len), 0);
    }
    return batch;
}

}  // namespace medvlm
