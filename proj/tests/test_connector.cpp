#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "medvlm/connector.hpp"
#include "medvlm/errors.hpp"

using namespace medvlm;

namespace {

Tensor random_tokens(Rng& rng, int l, int d) {
    std::vector<float> data(static_cast<size_t>(l) * d);
    for (auto& v : data) v = static_cast<float>(rng.normal(0.0, 0.5));
    return Tensor::from({l, d}, std::move(data));
}

ConnectorConfig cfg_of(ConnectorKind kind, int d_i = 16, int d_t = 24, int l_attn = 5) {
    ConnectorConfig c;
    c.kind = kind;
    c.d_i = d_i;
    c.d_t = d_t;
    c.l_attn = l_attn;
    c.heads = 2;
    return c;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    float m = 0.0f;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace

TEST_CASE("project preserves sequence length and maps width") {
    ParamStore ps;
    const Connector conn(ps, Rng(1), cfg_of(ConnectorKind::mlp));
    Rng rng(2);
    NoGradGuard ng;
    const auto out = conn.project(random_tokens(rng, 256, 16));
    CHECK(out.shape() == Shape{256, 24});
    CHECK_THROWS_AS(conn.project(random_tokens(rng, 4, 8)), ShapeError);
}

TEST_CASE("zeroed projector with second-layer bias is a constant map") {
    ParamStore ps;
    const Connector conn(ps, Rng(3), cfg_of(ConnectorKind::mlp));
    for (const char* name : {"connector.mlp.fc1.weight", "connector.mlp.fc2.weight"}) {
        auto* p = ps.find(name);
        REQUIRE(p != nullptr);
        std::fill(p->tensor.data(), p->tensor.data() + p->tensor.numel(), 0.0f);
    }
    auto* b2 = ps.find("connector.mlp.fc2.bias");
    REQUIRE(b2 != nullptr);
    for (int i = 0; i < 24; ++i) b2->tensor.data()[i] = static_cast<float>(i) * 0.5f;

    Rng rng(4);
    NoGradGuard ng;
    const auto out = conn.project(random_tokens(rng, 7, 16));
    for (int t = 0; t < 7; ++t)
        for (int i = 0; i < 24; ++i)
            CHECK(out.data()[t * 24 + i] == doctest::Approx(0.5 * i).epsilon(1e-6));
}

TEST_CASE("compress_attention emits exactly l_attn tokens for any N") {
    ParamStore ps;
    const Connector conn(ps, Rng(5), cfg_of(ConnectorKind::attn_compress));
    Rng rng(6);
    NoGradGuard ng;
    for (const int n : {1, 2, 8, 32}) {
        const auto out = conn.compress_attention(random_tokens(rng, n * 4, 16));
        CHECK(out.shape() == Shape{5, 24});
    }
    CHECK_THROWS_AS(conn.compress_attention(random_tokens(rng, 4, 8)), ShapeError);
}

TEST_CASE("single-key attention reduces to the value projection path") {
    ParamStore ps;
    const Connector conn(ps, Rng(7), cfg_of(ConnectorKind::attn_compress));
    Rng rng(8);
    NoGradGuard ng;
    const auto x = random_tokens(rng, 1, 16);

    const auto out = conn.compress_attention(x);

    // softmax over one key is 1 for every query: each row equals
    // proj(wo(wv(x))) regardless of the query values.
    const auto& attn = conn.attention();
    const auto expected = conn.projector().forward(attn.wo.forward(attn.wv.forward(x)));
    for (int q = 0; q < 5; ++q)
        for (int j = 0; j < 24; ++j)
            CHECK(out.data()[q * 24 + j] ==
                  doctest::Approx(expected.data()[j]).epsilon(1e-5));
}

TEST_CASE("compress_average of identical slice blocks equals the single-block path") {
    ParamStore ps;
    const Connector conn(ps, Rng(9), cfg_of(ConnectorKind::avg_pool));
    Rng rng(10);
    NoGradGuard ng;
    const auto block = random_tokens(rng, 6, 16);
    std::vector<float> stacked;
    for (int n = 0; n < 4; ++n)
        stacked.insert(stacked.end(), block.values().begin(), block.values().end());
    const auto stack = Tensor::from({4, 6, 16}, std::move(stacked));
    const auto pooled = conn.compress_average(stack);
    const auto single = conn.project(block);
    CHECK(max_abs_diff(pooled, single) < 1e-6f);
}

TEST_CASE("compress_average cancels opposite blocks to the zero-input map") {
    ParamStore ps;
    const Connector conn(ps, Rng(11), cfg_of(ConnectorKind::avg_pool));
    Rng rng(12);
    NoGradGuard ng;
    const auto z = random_tokens(rng, 6, 16);
    std::vector<float> stacked(z.values());
    for (const float v : z.values()) stacked.push_back(-v);
    const auto stack = Tensor::from({2, 6, 16}, std::move(stacked));
    const auto pooled = conn.compress_average(stack);
    const auto zero_path = conn.project(Tensor::zeros({6, 16}));
    CHECK(max_abs_diff(pooled, zero_path) < 1e-7f);
}

TEST_CASE("slice mean matches an elementwise oracle") {
    Rng rng(13);
    const int n = 5, l = 6, d = 4;
    std::vector<float> data(static_cast<size_t>(n) * l * d);
    for (auto& v : data) v = static_cast<float>(rng.normal());
    const auto stack = Tensor::from({n, l, d}, data);
    const auto mean = ops::mean_axis(stack, 0);
    for (int i = 0; i < l * d; ++i) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s) acc += data[static_cast<size_t>(s) * l * d + i];
        CHECK(std::abs(mean.data()[i] - acc / n) < 1e-6);
    }
}

TEST_CASE("slice permutation leaves both compressors unchanged") {
    Rng rng(14);
    const int n = 4, l = 6;
    std::vector<Tensor> blocks;
    for (int i = 0; i < n; ++i) blocks.push_back(random_tokens(rng, l, 16));

    auto stack_of = [&](const std::vector<int>& order) {
        std::vector<float> data;
        for (const int idx : order)
            data.insert(data.end(), blocks[static_cast<size_t>(idx)].values().begin(),
                        blocks[static_cast<size_t>(idx)].values().end());
        return Tensor::from({n, l, 16}, std::move(data));
    };
    const std::vector<int> fwd{0, 1, 2, 3};
    const std::vector<int> perm{2, 0, 3, 1};

    NoGradGuard ng;
    {
        ParamStore ps;
        const Connector conn(ps, Rng(15), cfg_of(ConnectorKind::avg_pool));
        CHECK(max_abs_diff(conn.compress_average(stack_of(fwd)),
                           conn.compress_average(stack_of(perm))) < 1e-5f);
    }
    {
        ParamStore ps;
        const Connector conn(ps, Rng(16), cfg_of(ConnectorKind::attn_compress));
        const auto a = conn.forward_slices(stack_of(fwd));
        const auto b = conn.forward_slices(stack_of(perm));
        CHECK(max_abs_diff(a, b) < 1e-5f);
    }
}

TEST_CASE("connector config validation") {
    auto bad = cfg_of(ConnectorKind::attn_compress);
    bad.l_attn = 0;
    CHECK_THROWS_AS(ConnectorConfig(bad).validate(), ConfigError);
    auto odd = cfg_of(ConnectorKind::attn_compress);
    odd.heads = 3;
    CHECK_THROWS_AS(ConnectorConfig(odd).validate(), ConfigError);

    ParamStore ps;
    const Connector mlp_conn(ps, Rng(17), cfg_of(ConnectorKind::mlp));
    Rng rng(18);
    CHECK_THROWS_AS(mlp_conn.compress_attention(random_tokens(rng, 4, 16)), ConfigError);
    CHECK(mlp_conn.output_len(256) == 256);

    ParamStore ps2;
    const Connector attn_conn(ps2, Rng(19), cfg_of(ConnectorKind::attn_compress));
    CHECK(attn_conn.output_len(256) == 5);
}
