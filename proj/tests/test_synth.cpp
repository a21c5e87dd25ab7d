#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "medvlm/errors.hpp"
#include "medvlm/metrics.hpp"
#include "medvlm/synth.hpp"

using namespace medvlm;
namespace fs = std::filesystem;

namespace {
fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("medvlm_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

CorpusSpec small_spec() {
    CorpusSpec spec;
    spec.counts = {{Task::classification, 5}, {Task::vqa_short, 5}, {Task::rec, 5},
                   {Task::reg, 3},            {Task::vqa_choice, 3}, {Task::caption, 3},
                   {Task::report_generation, 2}, {Task::vqa_long, 2}};
    spec.image_size = 64;
    return spec;
}
}  // namespace

TEST_CASE("same seed produces byte-identical corpora") {
    const auto d1 = fresh_dir("synth_a");
    const auto d2 = fresh_dir("synth_b");
    make_synthetic_corpus(d1 / "c.jsonl", small_spec(), 7);
    make_synthetic_corpus(d2 / "c.jsonl", small_spec(), 7);
    CHECK(file_bytes(d1 / "c.jsonl") == file_bytes(d2 / "c.jsonl"));
    for (const auto& entry : fs::directory_iterator(d1 / "c_images")) {
        const auto other = d2 / "c_images" / entry.path().filename();
        CHECK(fs::exists(other));
        CHECK(file_bytes(entry.path()) == file_bytes(other));
    }

    const auto d3 = fresh_dir("synth_c");
    make_synthetic_corpus(d3 / "c.jsonl", small_spec(), 8);
    CHECK(file_bytes(d1 / "c.jsonl") != file_bytes(d3 / "c.jsonl"));
}

TEST_CASE("record count matches the requested count per task") {
    const auto gen = generate_corpus(small_spec(), 11);
    std::map<Task, int> seen;
    for (const auto& g : gen) seen[g.sample.task] += 1;
    for (const auto& [task, n] : small_spec().counts) CHECK(seen[task] == n);
}

TEST_CASE("generator self-audit: answers match the scenes actually drawn") {
    const auto gen = generate_corpus(small_spec(), 13);
    for (const auto& g : gen) {
        const auto& s = g.sample;
        // Rendering from the logged scene must reproduce the stored payload.
        const Tensor re = render_scene(g.scene);
        REQUIRE(s.image.defined());
        CHECK(std::equal(re.data(), re.data() + re.numel(), s.image.data()));

        switch (s.task) {
            case Task::classification:
                CHECK(s.response == shape_name(g.scene.shapes[0].kind));
                break;
            case Task::vqa_short:
                CHECK(s.response == std::to_string(g.scene.shapes.size()));
                break;
            case Task::rec: {
                const auto box = parse_box(s.response);
                REQUIRE(box.has_value());
                const auto& sh = g.scene.shapes[0];
                CHECK(box->x1 == sh.x1);
                CHECK(box->y1 == sh.y1);
                CHECK(box->x2 == sh.x2);
                CHECK(box->y2 == sh.y2);
                break;
            }
            case Task::reg: {
                const auto& sh = g.scene.shapes[0];
                const std::string expect =
                    std::string(color_name(sh.color)) + " " + shape_name(sh.kind);
                CHECK(s.response == expect);
                break;
            }
            case Task::caption:
                CHECK(s.prompt.empty());
                CHECK(s.response.rfind("an image with", 0) == 0);
                break;
            default:
                CHECK_FALSE(s.response.empty());
        }
    }
}

TEST_CASE("rendered pixels stay in [0,1] and shapes are visible") {
    const auto gen = generate_corpus(small_spec(), 17);
    for (const auto& g : gen) {
        const auto& img = g.sample.image;
        float mx = 0.0f;
        for (int64_t i = 0; i < img.numel(); ++i) {
            CHECK(img.data()[i] >= 0.0f);
            CHECK(img.data()[i] <= 1.0f);
            mx = std::max(mx, img.data()[i]);
        }
        CHECK(mx > 0.5f);  // at least one bright shape pixel
    }
}

TEST_CASE("3d corpora extrude scenes across identical slices") {
    CorpusSpec spec = small_spec();
    spec.modality = Modality::volume3d;
    spec.volume_slices = 4;
    const auto gen = generate_corpus(spec, 19);
    for (const auto& g : gen) {
        const auto& vol = g.sample.image;
        REQUIRE(vol.ndim() == 3);
        CHECK(vol.size(0) == 4);
        const int64_t hw = static_cast<int64_t>(vol.size(1)) * vol.size(2);
        for (int s = 1; s < 4; ++s)
            CHECK(std::equal(vol.data(), vol.data() + hw, vol.data() + s * hw));
    }
}

TEST_CASE("unknown task in a corpus spec is rejected at the type level") {
    CorpusSpec spec;
    spec.counts = {{Task::classification, -1}};
    CHECK_THROWS_AS(generate_corpus(spec, 1), ConfigError);
    spec.counts = {{Task::classification, 1}};
    spec.image_size = 30;  // not grid-compatible
    CHECK_THROWS_AS(generate_corpus(spec, 1), ConfigError);
}
