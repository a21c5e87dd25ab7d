#include "medvlm/synth.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include "medvlm/errors.hpp"
#include "medvlm/rng.hpp"

namespace medvlm {

namespace {

struct Rgb {
    float r, g, b;
};

// Saturated palette on a dark background keeps shape/color cues strong at
// small resolutions.
constexpr std::array<std::pair<const char*, Rgb>, 4> kPalette{{
    {"red", {1.0f, 0.15f, 0.15f}},
    {"green", {0.15f, 0.9f, 0.2f}},
    {"blue", {0.2f, 0.35f, 1.0f}},
    {"yellow", {0.95f, 0.9f, 0.15f}},
}};

constexpr float kBackground = 0.08f;
constexpr int kGrid = 8;  // placement and box coordinates snap to this

bool inside_shape(const SceneShape& s, int x, int y) {
    if (x < s.x1 || x >= s.x2 || y < s.y1 || y >= s.y2) return false;
    const float w = static_cast<float>(s.x2 - s.x1);
    const float h = static_cast<float>(s.y2 - s.y1);
    const float fx = (static_cast<float>(x) + 0.5f - static_cast<float>(s.x1)) / w;  // [0,1)
    const float fy = (static_cast<float>(y) + 0.5f - static_cast<float>(s.y1)) / h;
    switch (s.kind) {
        case ShapeKind::square:
            return true;
        case ShapeKind::circle: {
            const float dx = fx - 0.5f, dy = fy - 0.5f;
            return dx * dx + dy * dy <= 0.25f;
        }
        case ShapeKind::triangle:
            // Up-pointing isoceles triangle: apex top-center, base at the bottom.
            return std::abs(fx - 0.5f) <= 0.5f * fy;
        case ShapeKind::cross: {
            const bool vert = fx > 0.35f && fx < 0.65f;
            const bool horiz = fy > 0.35f && fy < 0.65f;
            return vert || horiz;
        }
    }
    return false;
}

}  // namespace

const char* shape_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::square: return "square";
        case ShapeKind::circle: return "circle";
        case ShapeKind::triangle: return "triangle";
        case ShapeKind::cross: return "cross";
    }
    return "?";
}

const char* color_name(int color) { return kPalette[static_cast<size_t>(color)].first; }
int palette_size() { return static_cast<int>(kPalette.size()); }

Tensor render_scene(const Scene& scene) {
    const int h = scene.height, w = scene.width;
    std::vector<float> data(static_cast<size_t>(h) * w * 3, kBackground);
    for (const auto& s : scene.shapes) {
        const Rgb c = kPalette[static_cast<size_t>(s.color)].second;
        for (int y = s.y1; y < s.y2; ++y)
            for (int x = s.x1; x < s.x2; ++x)
                if (inside_shape(s, x, y)) {
                    float* px = data.data() + (static_cast<size_t>(y) * w + x) * 3;
                    px[0] = c.r;
                    px[1] = c.g;
                    px[2] = c.b;
                }
    }
    return Tensor::from({h, w, 3}, std::move(data));
}

Tensor render_scene_volume(const Scene& scene, int n_slices) {
    const Tensor img = render_scene(scene);
    const int h = scene.height, w = scene.width;
    std::vector<float> slice(static_cast<size_t>(h) * w);
    const float* src = img.data();
    for (size_t i = 0; i < slice.size(); ++i) {
        // Rec. 601 luminance
        slice[i] = 0.299f * src[i * 3] + 0.587f * src[i * 3 + 1] + 0.114f * src[i * 3 + 2];
    }
    std::vector<float> vol;
    vol.reserve(slice.size() * static_cast<size_t>(n_slices));
    for (int s = 0; s < n_slices; ++s) vol.insert(vol.end(), slice.begin(), slice.end());
    return Tensor::from({n_slices, h, w}, std::move(vol));
}

namespace {

// Shapes live in quadrant cells so multi-shape scenes never overlap. Box
// coordinates stay multiples of kGrid.
SceneShape random_shape_in_cell(Rng& rng, int img, int cell_x, int cell_y) {
    const int half = img / 2;
    // Prefer large shapes (many patches carry signal); must fit the quadrant.
    const int size = half >= 32 ? (rng.uniform() < 0.5 ? 24 : 32)
                                : half >= 24 ? (rng.uniform() < 0.5 ? 16 : 24)
                                             : 16;
    const int slots = (half - size) / kGrid + 1;  // 8-aligned offsets that fit
    const int ox = kGrid * rng.range_int(0, slots - 1);
    const int oy = kGrid * rng.range_int(0, slots - 1);
    SceneShape s;
    s.kind = static_cast<ShapeKind>(rng.range_int(0, 3));
    s.color = rng.range_int(0, palette_size() - 1);
    s.x1 = cell_x * half + ox;
    s.y1 = cell_y * half + oy;
    s.x2 = s.x1 + size;
    s.y2 = s.y1 + size;
    return s;
}

Scene random_scene(Rng& rng, int img, int n_shapes) {
    Scene scene;
    scene.height = img;
    scene.width = img;
    std::vector<int> cells{0, 1, 2, 3};
    rng.shuffle(cells);
    for (int i = 0; i < n_shapes; ++i) {
        const int c = cells[static_cast<size_t>(i)];
        scene.shapes.push_back(random_shape_in_cell(rng, img, c % 2, c / 2));
    }
    return scene;
}

std::string shape_phrase(const SceneShape& s) {
    return std::string(color_name(s.color)) + " " + shape_name(s.kind);
}

std::string box_text(const SceneShape& s) {
    std::ostringstream os;
    os << s.x1 << "," << s.y1 << "," << s.x2 << "," << s.y2;
    return os.str();
}

std::string list_phrase(const Scene& scene) {
    std::string out;
    for (size_t i = 0; i < scene.shapes.size(); ++i) {
        if (i > 0) out += i + 1 == scene.shapes.size() ? " and " : ", ";
        out += "a " + shape_phrase(scene.shapes[i]);
    }
    return out;
}

GeneratedSample make_task_sample(Task task, Rng& rng, const CorpusSpec& spec) {
    const int img = spec.image_size;
    GeneratedSample g;
    MultimodalSample& s = g.sample;
    s.task = task;

    switch (task) {
        case Task::classification: {
            g.scene = random_scene(rng, img, 1);
            s.prompt = "What shape?";
            s.response = shape_name(g.scene.shapes[0].kind);
            break;
        }
        case Task::vqa_short: {
            g.scene = random_scene(rng, img, rng.range_int(1, 3));
            s.prompt = "How many shapes?";
            s.response = std::to_string(g.scene.shapes.size());
            break;
        }
        case Task::vqa_choice: {
            g.scene = random_scene(rng, img, 1);
            const auto present = g.scene.shapes[0].kind;
            ShapeKind asked = present;
            const bool yes = rng.uniform() < 0.5;
            if (!yes) {
                do {
                    asked = static_cast<ShapeKind>(rng.range_int(0, 3));
                } while (asked == present);
            }
            s.prompt = std::string("Is there a ") + shape_name(asked) + "? A yes B no.";
            s.response = yes ? "A" : "B";
            break;
        }
        case Task::rec: {
            g.scene = random_scene(rng, img, 1);
            s.prompt = "Box the " + shape_phrase(g.scene.shapes[0]) + ".";
            s.response = box_text(g.scene.shapes[0]);
            break;
        }
        case Task::reg: {
            g.scene = random_scene(rng, img, 1);
            s.prompt = "Name the region " + box_text(g.scene.shapes[0]) + ".";
            s.response = shape_phrase(g.scene.shapes[0]);
            break;
        }
        case Task::caption: {
            g.scene = random_scene(rng, img, rng.range_int(1, 2));
            s.prompt = "";
            s.response = "an image with " + list_phrase(g.scene);
            break;
        }
        case Task::report_generation: {
            g.scene = random_scene(rng, img, rng.range_int(1, 2));
            s.prompt = "Report.";
            s.response = "findings: " + list_phrase(g.scene) + ". impression: normal.";
            break;
        }
        case Task::vqa_long: {
            g.scene = random_scene(rng, img, rng.range_int(1, 2));
            s.prompt = "Describe.";
            s.response = "there is " + list_phrase(g.scene) + ".";
            break;
        }
    }

    if (spec.modality == Modality::image2d) {
        s.modality = Modality::image2d;
        s.image = render_scene(g.scene);
    } else if (spec.modality == Modality::volume3d) {
        s.modality = Modality::volume3d;
        s.image = render_scene_volume(g.scene, spec.volume_slices);
    } else {
        throw ConfigError("synthetic corpus requires an image modality");
    }
    return g;
}

}  // namespace

std::vector<GeneratedSample> generate_corpus(const CorpusSpec& spec, uint64_t seed) {
    if (spec.image_size % (2 * kGrid) != 0 || spec.image_size < 32)
        throw ConfigError("synthetic image size must be a multiple of 16 and at least 32");
    std::vector<GeneratedSample> out;
    const Rng root(seed);
    for (const auto& [task, count] : spec.counts) {
        if (count < 0) throw ConfigError("negative count for task " + std::string(task_name(task)));
        Rng task_rng = root.split(std::string("synth.") + task_name(task));
        for (int i = 0; i < count; ++i) out.push_back(make_task_sample(task, task_rng, spec));
    }
    return out;
}

int make_synthetic_corpus(const std::filesystem::path& jsonl_path, const CorpusSpec& spec,
                          uint64_t seed) {
    auto generated = generate_corpus(spec, seed);
    std::vector<MultimodalSample> samples;
    samples.reserve(generated.size());
    for (auto& g : generated) samples.push_back(std::move(g.sample));
    std::filesystem::create_directories(jsonl_path.parent_path());
    save_dataset(jsonl_path, samples);
    return static_cast<int>(samples.size());
}

}  // namespace medvlm
