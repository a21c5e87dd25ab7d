#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck_util.hpp"
#include "medvlm/nn.hpp"

using namespace medvlm;
using gradcheck::DTensor;

namespace {

constexpr int kSeeds = 20;
constexpr double kTol = 1e-3;

// Runs `build` once per seed: it creates the inputs and returns the closure
// computing the scalar loss from their current values.
template <class Build>
void check_op(const char* name, Build&& build) {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(1000 + static_cast<uint64_t>(seed) * 77);
        std::vector<DTensor> inputs;
        auto loss_fn = build(rng, inputs);
        Rng coord_rng(static_cast<uint64_t>(seed) + 5);
        const auto res = gradcheck::check(loss_fn, inputs, coord_rng);
        INFO(name << " seed " << seed << " rel err " << res.max_rel_err);
        CHECK(res.max_rel_err < kTol);
    }
}

}  // namespace

TEST_CASE("gradcheck matmul") {
    check_op("matmul", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        in.push_back(gradcheck::random_tensor(rng, {4, 5}));
        auto w = gradcheck::random_tensor(rng, {3, 5}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::matmul(in[0], in[1]), w); };
    });
}

TEST_CASE("gradcheck add mul broadcast") {
    check_op("add", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        auto w = gradcheck::random_tensor(rng, {3, 4}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::add(in[0], in[1]), w); };
    });
    check_op("add_rowvec", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        in.push_back(gradcheck::random_tensor(rng, {4}));
        auto w = gradcheck::random_tensor(rng, {3, 4}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::add(in[0], in[1]), w); };
    });
    check_op("mul", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        auto w = gradcheck::random_tensor(rng, {3, 4}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::mul(in[0], in[1]), w); };
    });
    check_op("mul_scalar", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        auto w = gradcheck::random_tensor(rng, {3, 4}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::mul_scalar(in[0], 1.7), w); };
    });
}

TEST_CASE("gradcheck gelu softmax layer_norm") {
    check_op("gelu", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 5}));
        auto w = gradcheck::random_tensor(rng, {3, 5}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::gelu(in[0]), w); };
    });
    check_op("softmax_axis1", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 5}));
        auto w = gradcheck::random_tensor(rng, {3, 5}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::softmax(in[0], 1), w); };
    });
    check_op("softmax_axis0", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 5}));
        auto w = gradcheck::random_tensor(rng, {3, 5}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::softmax(in[0], 0), w); };
    });
    check_op("layer_norm", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 8}));
        in.push_back(gradcheck::random_tensor(rng, {8}));
        in.push_back(gradcheck::random_tensor(rng, {8}));
        auto w = gradcheck::random_tensor(rng, {3, 8}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::layer_norm(in[0], in[1], in[2], 1e-5), w); };
    });
}

TEST_CASE("gradcheck losses and embedding") {
    check_op("cross_entropy", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {7}));
        const int target = static_cast<int>(rng.below(7));
        return [=]() { return ops::cross_entropy(in[0], target); };
    });
    check_op("masked_next_token_ce", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {5, 7}));
        const std::vector<int> ids{1, 3, 0, 6, 2};
        const std::vector<uint8_t> mask{0, 0, 1, 1, 1};
        return [=]() { return ops::masked_next_token_ce(in[0], ids, mask); };
    });
    check_op("embedding", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {6, 4}));
        const std::vector<int> ids{2, 2, 5, 0};  // duplicate id exercises scatter-add
        auto w = gradcheck::random_tensor(rng, {4, 4}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::embedding(in[0], ids), w); };
    });
}

TEST_CASE("gradcheck shape plumbing") {
    check_op("reshape_transpose", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        auto w = gradcheck::random_tensor(rng, {2, 6}, 1.0, false);
        return [=]() {
            return gradcheck::weighted_sum(ops::reshape(ops::transpose(in[0]), {2, 6}), w);
        };
    });
    check_op("concat", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {2, 3}));
        in.push_back(gradcheck::random_tensor(rng, {2, 3}));
        auto w = gradcheck::random_tensor(rng, {2, 6}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::concat<double>({in[0], in[1]}, 1), w); };
    });
    check_op("slices", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 6}));
        auto w = gradcheck::random_tensor(rng, {2, 3}, 1.0, false);
        return [=]() {
            return gradcheck::weighted_sum(ops::slice_last(ops::slice_rows(in[0], 1, 2), 2, 3), w);
        };
    });
    check_op("mean_axis", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 3, 2}));
        auto w = gradcheck::random_tensor(rng, {3, 2}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::mean_axis(in[0], 0), w); };
    });
    check_op("add_causal_mask", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 4}));
        auto w = gradcheck::random_tensor(rng, {4, 4}, 1.0, false);
        return [=]() {
            return gradcheck::weighted_sum(ops::softmax(ops::add_causal_mask(in[0]), 1), w);
        };
    });
    check_op("patchify2d", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 4, 2}));
        auto w = gradcheck::random_tensor(rng, {4, 8}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::patchify2d(in[0], 2, 2), w); };
    });
    check_op("patchify3d", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 4, 4}));
        auto w = gradcheck::random_tensor(rng, {8, 8}, 1.0, false);
        return [=]() { return gradcheck::weighted_sum(ops::patchify3d(in[0], 2, 2, 2), w); };
    });
}

TEST_CASE("gradcheck diamond reuse sums both paths") {
    check_op("diamond", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 3}));
        auto w = gradcheck::random_tensor(rng, {3, 3}, 1.0, false);
        return [=]() {
            // x used twice: x*x and x+x share the same leaf.
            const auto y = ops::add(ops::mul(in[0], in[0]), ops::add(in[0], in[0]));
            return gradcheck::weighted_sum(y, w);
        };
    });
}

TEST_CASE("gradcheck composite matmul+softmax+cross_entropy") {
    check_op("composite_mm_sm_ce", [](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {1, 5}));
        in.push_back(gradcheck::random_tensor(rng, {5, 9}));
        const int target = static_cast<int>(rng.below(9));
        return [=]() {
            const auto logits = ops::reshape(ops::matmul(in[0], in[1]), {9});
            return ops::cross_entropy(logits, target);
        };
    });
}

// Composite blocks reuse the production modules instantiated in double.

TEST_CASE("gradcheck encoder block (non-causal transformer block)") {
    check_op("encoder_block", [](Rng& rng, std::vector<DTensor>& in) {
        auto ps = std::make_shared<ParamStoreT<double>>();
        const Rng init(rng.next_u64());
        auto blk = std::make_shared<TransformerBlockT<double>>(*ps, init, "blk", 8, 2, false);
        for (auto& p : ps->items()) in.push_back(p.tensor);
        in.push_back(gradcheck::random_tensor(rng, {5, 8}, 0.5));
        auto w = gradcheck::random_tensor(rng, {5, 8}, 1.0, false);
        const auto x = in.back();
        return [=]() { return gradcheck::weighted_sum(blk->forward(x), w); };
    });
}

TEST_CASE("gradcheck LM block (causal transformer block)") {
    check_op("lm_block", [](Rng& rng, std::vector<DTensor>& in) {
        auto ps = std::make_shared<ParamStoreT<double>>();
        const Rng init(rng.next_u64());
        auto blk = std::make_shared<TransformerBlockT<double>>(*ps, init, "blk", 8, 2, true);
        for (auto& p : ps->items()) in.push_back(p.tensor);
        in.push_back(gradcheck::random_tensor(rng, {5, 8}, 0.5));
        auto w = gradcheck::random_tensor(rng, {5, 8}, 1.0, false);
        const auto x = in.back();
        return [=]() { return gradcheck::weighted_sum(blk->forward(x), w); };
    });
}

TEST_CASE("gradcheck cross-attention compressor") {
    check_op("cross_attention", [](Rng& rng, std::vector<DTensor>& in) {
        auto ps = std::make_shared<ParamStoreT<double>>();
        const Rng init(rng.next_u64());
        auto attn = std::make_shared<CrossAttentionT<double>>(*ps, init, "attn", 8, 2, 3);
        for (auto& p : ps->items()) in.push_back(p.tensor);
        in.push_back(gradcheck::random_tensor(rng, {6, 8}, 0.5));
        auto w = gradcheck::random_tensor(rng, {3, 8}, 1.0, false);
        const auto kv = in.back();
        return [=]() { return gradcheck::weighted_sum(attn->forward(kv), w); };
    });
}

TEST_CASE("gradcheck projector") {
    check_op("mlp_projector", [](Rng& rng, std::vector<DTensor>& in) {
        auto ps = std::make_shared<ParamStoreT<double>>();
        const Rng init(rng.next_u64());
        auto proj = std::make_shared<MlpProjectorT<double>>(*ps, init, "proj", 6, 10);
        for (auto& p : ps->items()) in.push_back(p.tensor);
        in.push_back(gradcheck::random_tensor(rng, {4, 6}, 0.5));
        auto w = gradcheck::random_tensor(rng, {4, 10}, 1.0, false);
        const auto x = in.back();
        return [=]() { return gradcheck::weighted_sum(proj->forward(x), w); };
    });
}
