// Acceptance suite: runs every acceptance criterion end to end and prints
// one PASS/FAIL line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "gradcheck_util.hpp"
#include "medvlm/ablation.hpp"
#include "medvlm/checkpoint.hpp"
#include "medvlm/config.hpp"
#include "medvlm/eval.hpp"
#include "medvlm/metrics.hpp"
#include "medvlm/tokenizer.hpp"
#include "medvlm/trainer.hpp"
#include "test_util.hpp"

using namespace medvlm;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void run_criterion(int number, const std::string& label, const std::function<bool(std::string&)>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = fn(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
        ok = false;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1fs", seconds_since(t0));
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << number << ": " << label << " (" << detail
              << ", " << buf << ")" << std::endl;
    if (!ok) ++g_failures;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("medvlm_accept_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// --- criterion 1: gradient correctness --------------------------------------

bool criterion_gradients(std::string& detail) {
    using gradcheck::DTensor;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    int checks = 0;

    auto sweep = [&](const std::function<std::function<DTensor()>(Rng&, std::vector<DTensor>&)>& build) {
        for (int seed = 0; seed < 20; ++seed) {
            Rng rng(4000 + static_cast<uint64_t>(seed) * 131);
            std::vector<DTensor> inputs;
            auto fn = build(rng, inputs);
            Rng coords(static_cast<uint64_t>(seed) + 17);
            const auto res = gradcheck::check(fn, inputs, coords);
            worst = std::max(worst, res.max_rel_err);
            checks += res.coords_checked;
            if (res.max_rel_err >= 1e-3) return false;
        }
        return true;
    };

    bool ok = true;
    // Every differentiable op.
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        in.push_back(gradcheck::random_tensor(rng, {4, 5}));
        auto w = gradcheck::random_tensor(rng, {3, 5}, 1.0, false);
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(ops::matmul(in[0], in[1]), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 4}));
        in.push_back(gradcheck::random_tensor(rng, {4}));
        auto w = gradcheck::random_tensor(rng, {3, 4}, 1.0, false);
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(ops::add(in[0], in[1]), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 4}));
        in.push_back(gradcheck::random_tensor(rng, {4, 4}));
        auto w = gradcheck::random_tensor(rng, {4, 4}, 1.0, false);
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(ops::mul(in[0], in[1]), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 5}));
        auto w = gradcheck::random_tensor(rng, {3, 5}, 1.0, false);
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(ops::gelu(in[0]), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 5}));
        auto w = gradcheck::random_tensor(rng, {3, 5}, 1.0, false);
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(ops::softmax(in[0], 1), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {3, 8}));
        in.push_back(gradcheck::random_tensor(rng, {8}));
        in.push_back(gradcheck::random_tensor(rng, {8}));
        auto w = gradcheck::random_tensor(rng, {3, 8}, 1.0, false);
        return std::function<DTensor()>(
            [=]() { return gradcheck::weighted_sum(ops::layer_norm(in[0], in[1], in[2], 1e-5), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {7}));
        const int target = static_cast<int>(rng.below(7));
        return std::function<DTensor()>([=]() { return ops::cross_entropy(in[0], target); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {5, 7}));
        const std::vector<int> ids{1, 3, 0, 6, 2};
        const std::vector<uint8_t> mask{0, 0, 1, 1, 1};
        return std::function<DTensor()>([=]() { return ops::masked_next_token_ce(in[0], ids, mask); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {6, 4}));
        const std::vector<int> ids{2, 2, 5, 0};
        auto w = gradcheck::random_tensor(rng, {4, 4}, 1.0, false);
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(ops::embedding(in[0], ids), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 6}));
        auto w = gradcheck::random_tensor(rng, {6, 4}, 1.0, false);
        return std::function<DTensor()>(
            [=]() { return gradcheck::weighted_sum(ops::transpose(in[0]), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 3, 2}));
        auto w = gradcheck::random_tensor(rng, {3, 2}, 1.0, false);
        return std::function<DTensor()>(
            [=]() { return gradcheck::weighted_sum(ops::mean_axis(in[0], 0), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {2, 3}));
        in.push_back(gradcheck::random_tensor(rng, {2, 3}));
        auto w = gradcheck::random_tensor(rng, {2, 6}, 1.0, false);
        return std::function<DTensor()>(
            [=]() { return gradcheck::weighted_sum(ops::concat<double>({in[0], in[1]}, 1), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 6}));
        auto w = gradcheck::random_tensor(rng, {2, 3}, 1.0, false);
        return std::function<DTensor()>([=]() {
            return gradcheck::weighted_sum(ops::slice_last(ops::slice_rows(in[0], 1, 2), 2, 3), w);
        });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 4}));
        auto w = gradcheck::random_tensor(rng, {4, 4}, 1.0, false);
        return std::function<DTensor()>([=]() {
            return gradcheck::weighted_sum(ops::softmax(ops::add_causal_mask(in[0]), 1), w);
        });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 4, 2}));
        auto w = gradcheck::random_tensor(rng, {4, 8}, 1.0, false);
        return std::function<DTensor()>(
            [=]() { return gradcheck::weighted_sum(ops::patchify2d(in[0], 2, 2), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<DTensor>& in) {
        in.push_back(gradcheck::random_tensor(rng, {4, 4, 4}));
        auto w = gradcheck::random_tensor(rng, {8, 8}, 1.0, false);
        return std::function<DTensor()>(
            [=]() { return gradcheck::weighted_sum(ops::patchify3d(in[0], 2, 2, 2), w); });
    });

    // Composite blocks: encoder block, LM block, cross-attention compressor.
    ok = ok && sweep([](Rng& rng, std::vector<gradcheck::DTensor>& in) {
        auto ps = std::make_shared<ParamStoreT<double>>();
        const Rng init(rng.next_u64());
        auto blk = std::make_shared<TransformerBlockT<double>>(*ps, init, "blk", 8, 2, false);
        for (auto& p : ps->items()) in.push_back(p.tensor);
        in.push_back(gradcheck::random_tensor(rng, {5, 8}, 0.5));
        auto w = gradcheck::random_tensor(rng, {5, 8}, 1.0, false);
        const auto x = in.back();
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(blk->forward(x), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<gradcheck::DTensor>& in) {
        auto ps = std::make_shared<ParamStoreT<double>>();
        const Rng init(rng.next_u64());
        auto blk = std::make_shared<TransformerBlockT<double>>(*ps, init, "blk", 8, 2, true);
        for (auto& p : ps->items()) in.push_back(p.tensor);
        in.push_back(gradcheck::random_tensor(rng, {5, 8}, 0.5));
        auto w = gradcheck::random_tensor(rng, {5, 8}, 1.0, false);
        const auto x = in.back();
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(blk->forward(x), w); });
    });
    ok = ok && sweep([](Rng& rng, std::vector<gradcheck::DTensor>& in) {
        auto ps = std::make_shared<ParamStoreT<double>>();
        const Rng init(rng.next_u64());
        auto attn = std::make_shared<CrossAttentionT<double>>(*ps, init, "attn", 8, 2, 3);
        for (auto& p : ps->items()) in.push_back(p.tensor);
        in.push_back(gradcheck::random_tensor(rng, {6, 8}, 0.5));
        auto w = gradcheck::random_tensor(rng, {3, 8}, 1.0, false);
        const auto kv = in.back();
        return std::function<DTensor()>([=]() { return gradcheck::weighted_sum(attn->forward(kv), w); });
    });

    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << checks << " coords, max rel err " << worst;
    detail = os.str();
    return ok && elapsed < 120.0;
}

// --- criterion 2: shape ledger ----------------------------------------------

bool criterion_shapes(std::string& detail) {
    NoGradGuard ng;
    Rng rng(51);

    Encoder2DConfig c2;  // reference extents, thin transformer for speed
    c2.image_size = 256;
    c2.patch_size = 16;
    c2.depth = 1;
    c2.heads = 2;
    c2.d_i = 32;
    ParamStore ps2;
    const Encoder2D enc2(ps2, Rng(52), c2);
    std::vector<float> img(256 * 256 * 3);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    const auto t2 = enc2.forward(Tensor::from({256, 256, 3}, img));
    if (t2.size(0) != 256) {
        detail = "2d tokens " + std::to_string(t2.size(0));
        return false;
    }

    Encoder3DConfig c3;
    c3.slices = 32;
    c3.height = 256;
    c3.width = 256;
    c3.patch_slices = 4;
    c3.patch_h = 16;
    c3.patch_w = 16;
    c3.depth = 1;
    c3.heads = 2;
    c3.d_i = 32;
    ParamStore ps3;
    const Encoder3D enc3(ps3, Rng(53), c3);
    std::vector<float> vol(static_cast<size_t>(32) * 256 * 256);
    for (auto& v : vol) v = static_cast<float>(rng.uniform());
    const auto t3 = enc3.forward(Tensor::from({32, 256, 256}, vol));
    if (t3.size(0) != 2048) {
        detail = "3d tokens " + std::to_string(t3.size(0));
        return false;
    }

    const auto stack = enc2.forward_slices(Tensor::from({32, 256, 256}, vol));
    const int flattened = stack.size(0) * stack.size(1);
    if (flattened != 8192) {
        detail = "slice tokens " + std::to_string(flattened);
        return false;
    }

    ConnectorConfig cc;
    cc.kind = ConnectorKind::attn_compress;
    cc.d_i = 32;
    cc.d_t = 48;
    cc.l_attn = 256;
    cc.heads = 2;
    ParamStore psc;
    const Connector conn(psc, Rng(54), cc);
    for (const int n : {1, 2, 8, 32}) {
        std::vector<float> toks(static_cast<size_t>(n) * 64 * 32);
        for (auto& v : toks) v = static_cast<float>(rng.normal(0.0, 0.5));
        const auto out = conn.compress_attention(Tensor::from({n * 64, 32}, toks));
        if (out.size(0) != 256) {
            detail = "attn output " + std::to_string(out.size(0)) + " at N=" + std::to_string(n);
            return false;
        }
    }
    detail = "256 / 2048 / 8192 / 256 tokens";
    return true;
}

// --- criterion 3: pooling identities ----------------------------------------

bool criterion_pooling(std::string& detail) {
    NoGradGuard ng;
    Rng rng(61);
    float worst_identity = 0.0f, worst_perm = 0.0f;

    {
        ConnectorConfig cc;
        cc.kind = ConnectorKind::avg_pool;
        cc.d_i = 16;
        cc.d_t = 24;
        ParamStore ps;
        const Connector conn(ps, Rng(62), cc);
        std::vector<float> block(6 * 16);
        for (auto& v : block) v = static_cast<float>(rng.normal(0.0, 0.5));
        std::vector<float> stacked;
        for (int n = 0; n < 4; ++n) stacked.insert(stacked.end(), block.begin(), block.end());
        const auto pooled = conn.compress_average(Tensor::from({4, 6, 16}, stacked));
        const auto single = conn.project(Tensor::from({6, 16}, block));
        for (int64_t i = 0; i < pooled.numel(); ++i)
            worst_identity = std::max(worst_identity, std::abs(pooled.data()[i] - single.data()[i]));
        if (worst_identity >= 1e-6f) {
            detail = "identity delta " + std::to_string(worst_identity);
            return false;
        }
    }

    for (const ConnectorKind kind : {ConnectorKind::avg_pool, ConnectorKind::attn_compress}) {
        ConnectorConfig cc;
        cc.kind = kind;
        cc.d_i = 16;
        cc.d_t = 24;
        cc.l_attn = 5;
        cc.heads = 2;
        ParamStore ps;
        const Connector conn(ps, Rng(63), cc);
        const int n = 4, l = 6;
        std::vector<std::vector<float>> blocks(static_cast<size_t>(n));
        for (auto& b : blocks) {
            b.resize(static_cast<size_t>(l) * 16);
            for (auto& v : b) v = static_cast<float>(rng.normal(0.0, 0.5));
        }
        auto stack_of = [&](const std::vector<int>& order) {
            std::vector<float> data;
            for (const int idx : order)
                data.insert(data.end(), blocks[static_cast<size_t>(idx)].begin(),
                            blocks[static_cast<size_t>(idx)].end());
            return Tensor::from({n, l, 16}, std::move(data));
        };
        const auto a = conn.forward_slices(stack_of({0, 1, 2, 3}));
        const auto b = conn.forward_slices(stack_of({3, 1, 0, 2}));
        for (int64_t i = 0; i < a.numel(); ++i)
            worst_perm = std::max(worst_perm, std::abs(a.data()[i] - b.data()[i]));
        if (worst_perm >= 1e-5f) {
            detail = "permutation delta " + std::to_string(worst_perm);
            return false;
        }
    }
    std::ostringstream os;
    os << "identity " << worst_identity << ", permutation " << worst_perm;
    detail = os.str();
    return true;
}

// --- criterion 4: freeze invariant -------------------------------------------

bool criterion_freeze(std::string& detail) {
    const auto captions = testutil::tiny_corpus({{Task::caption, 16}}, 71);
    const auto tasks = testutil::tiny_corpus({{Task::classification, 16}}, 72);

    LvlmModel model(testutil::tiny_2d_config(), 73);
    const auto init = testutil::param_bytes(model);

    StageConfig pre = StageConfig::pretrain_preset(model);
    pre.batch_size = 4;
    train_stage(model, captions, pre, 73);
    auto changed = testutil::changed_namespaces(init, testutil::param_bytes(model));
    if (changed.at("encoder2d") || changed.at("lm") || changed.at("embed")) {
        detail = "pretrain stage touched a frozen module";
        return false;
    }
    if (!changed.at("connector")) {
        detail = "pretrain stage did not train the connector";
        return false;
    }

    const auto after_pre = testutil::param_bytes(model);
    StageConfig ins = StageConfig::instruct_preset();
    ins.lr = 1e-3f;
    ins.epochs = 1;
    ins.batch_size = 4;
    train_stage(model, tasks, ins, 73);
    changed = testutil::changed_namespaces(after_pre, testutil::param_bytes(model));
    for (const auto& ns : {"encoder2d", "connector", "lm", "embed"})
        if (!changed.at(ns)) {
            detail = std::string("instruct stage left '") + ns + "' unchanged";
            return false;
        }
    detail = "pretrain froze encoder+lm+embed; instruct trained all groups";
    return true;
}

// --- criterion 5: LoRA contract ----------------------------------------------

bool criterion_lora(std::string& detail) {
    LvlmModel model(testutil::tiny_2d_config(), 81);
    const std::vector<int> probe{1, 20, 40, 60, 80};
    NoGradGuard ng;
    const auto before = model.lm().forward_prefix(Tensor{}, probe);
    LoraSpec spec;
    lora_inject(model, spec);
    const auto after = model.lm().forward_prefix(Tensor{}, probe);
    float delta = 0.0f;
    for (int64_t i = 0; i < before.numel(); ++i)
        delta = std::max(delta, std::abs(before.data()[i] - after.data()[i]));
    if (delta >= 1e-7f) {
        detail = "injection delta " + std::to_string(delta);
        return false;
    }

    // Train the adapters a little, then merge and compare on 100 inputs.
    LvlmModel trained(testutil::tiny_2d_config(), 82);
    const auto data = testutil::tiny_corpus({{Task::classification, 8}}, 83);
    StageConfig stage;
    stage.name = "lora";
    stage.frozen = {"lm", "embed"};
    stage.lora = LoraSpec{};
    stage.lr = 5e-3f;
    stage.epochs = 2;
    stage.batch_size = 4;
    train_stage(trained, data, stage, 82);

    Rng rng(84);
    std::vector<std::vector<int>> prompts;
    for (int i = 0; i < 100; ++i) {
        std::vector<int> ids(6);
        for (auto& id : ids) id = 4 + static_cast<int>(rng.below(256));
        prompts.push_back(std::move(ids));
    }
    std::vector<Tensor> adapted;
    for (const auto& p : prompts) adapted.push_back(trained.lm().forward_prefix(Tensor{}, p));
    if (lora_merge(trained) != MergeStatus::merged) {
        detail = "merge did not report adapters";
        return false;
    }
    float merge_delta = 0.0f;
    for (size_t i = 0; i < prompts.size(); ++i) {
        const auto merged = trained.lm().forward_prefix(Tensor{}, prompts[i]);
        for (int64_t j = 0; j < merged.numel(); ++j)
            merge_delta =
                std::max(merge_delta, std::abs(merged.data()[j] - adapted[i].data()[j]));
    }
    if (merge_delta >= 1e-5f) {
        detail = "merge delta " + std::to_string(merge_delta);
        return false;
    }

    if (StageConfig::lora_preset().effective_lr() != 2e-5f ||
        StageConfig::lora_star_preset().effective_lr() != 2e-4f) {
        detail = "preset learning rates wrong";
        return false;
    }
    std::ostringstream os;
    os << "inject delta " << delta << ", merge delta " << merge_delta << ", lrs 2e-5/2e-4";
    detail = os.str();
    return true;
}

// --- criterion 6: 2d -> 3d transfer identity ----------------------------------

bool criterion_transfer(std::string& detail) {
    LvlmModel model2d(testutil::tiny_2d_config(), 91);
    const Checkpoint ckpt2d = snapshot(model2d, "instruct");
    LvlmModel model3d(testutil::tiny_3d_config(EncoderKind::slices2d, ConnectorKind::avg_pool, 4),
                      92);
    transfer_2d_to_3d(ckpt2d, model3d);

    Rng rng(93);
    std::vector<float> gray(32 * 32);
    for (auto& v : gray) v = static_cast<float>(rng.uniform());
    std::vector<float> vol_data;
    for (int s = 0; s < 4; ++s) vol_data.insert(vol_data.end(), gray.begin(), gray.end());
    std::vector<float> img_data(32 * 32 * 3);
    for (int i = 0; i < 32 * 32; ++i)
        for (int c = 0; c < 3; ++c)
            img_data[static_cast<size_t>(i) * 3 + c] = gray[static_cast<size_t>(i)];

    MultimodalSample s2d, s3d;
    s2d.modality = Modality::image2d;
    s2d.image = Tensor::from({32, 32, 3}, img_data);
    s2d.prompt = s3d.prompt = "What shape is in the image?";
    s2d.response = s3d.response = "square";
    s2d.task = s3d.task = Task::classification;
    s3d.modality = Modality::volume3d;
    s3d.image = Tensor::from({4, 32, 32}, vol_data);

    const Batch b2d = build_batch({&s2d}, model2d.image_token_count(), 2048);
    const Batch b3d = build_batch({&s3d}, model3d.image_token_count(), 2048);
    NoGradGuard ng;
    const auto l2d = model2d.forward_row_logits(b2d.rows[0]);
    const auto l3d = model3d.forward_row_logits(b3d.rows[0]);
    float delta = 0.0f;
    for (int64_t i = 0; i < l2d.numel(); ++i)
        delta = std::max(delta, std::abs(l2d.data()[i] - l3d.data()[i]));
    detail = "logit delta " + std::to_string(delta);
    return delta < 1e-5f;
}

// --- criterion 7: causality and decoding --------------------------------------

bool criterion_causality(std::string& detail) {
    LMConfig cfg;
    cfg.d_t = 16;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.max_seq = 64;
    ParamStore ps;
    const LmDecoder lm(ps, Rng(101), cfg);
    Rng rng(102);
    NoGradGuard ng;

    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> ids(12);
        for (auto& id : ids) id = 4 + static_cast<int>(rng.below(256));
        const auto base = lm.forward_prefix(Tensor{}, ids);
        const int t = 1 + static_cast<int>(rng.below(11));
        ids[static_cast<size_t>(t)] = 4 + static_cast<int>(rng.below(256));
        const auto mod = lm.forward_prefix(Tensor{}, ids);
        if (std::memcmp(base.data(), mod.data(), sizeof(float) * static_cast<size_t>(t) * 260) != 0) {
            detail = "suffix perturbation leaked to earlier positions at trial " +
                     std::to_string(trial);
            return false;
        }
    }

    int compared = 0;
    for (const uint64_t seed : {111u, 112u, 113u, 114u, 115u}) {
        ParamStore ps2;
        const LmDecoder lm2(ps2, Rng(seed), cfg);
        Rng prng(seed + 1000);
        std::vector<int> prompt(5);
        for (auto& id : prompt) id = 4 + static_cast<int>(prng.below(256));

        const auto cached = lm2.generate(Tensor{}, prompt, 16);
        std::vector<int> replay_ids = prompt;
        std::vector<int> replay;
        for (int i = 0; i < 16; ++i) {
            const auto logits = lm2.forward_prefix(Tensor{}, replay_ids);
            const float* row =
                logits.data() + static_cast<size_t>(logits.size(0) - 1) * logits.size(1);
            int best = 0;
            for (int j = 1; j < logits.size(1); ++j)
                if (row[j] > row[best]) best = j;
            if (best == tok::EOS) break;
            replay.push_back(best);
            replay_ids.push_back(best);
        }
        if (cached != replay) {
            detail = "cached and replay decoding diverged at model seed " + std::to_string(seed);
            return false;
        }
        compared += static_cast<int>(cached.size());
    }
    detail = "50 perturbations clean, " + std::to_string(compared) + " replay tokens identical";
    return true;
}

// --- criterion 8: end-to-end synthetic run ------------------------------------

bool criterion_end_to_end(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = fresh_dir("e2e");
    RunConfig cfg = RunConfig::desk_default();
    cfg.data_dir = dir;
    cfg.seed = 7;

    make_synthetic_corpus(cfg.pretrain_path(), cfg.gen.pretrain_spec(), cfg.seed + 1);
    make_synthetic_corpus(cfg.train_path(), cfg.gen.train_spec(), cfg.seed + 2);
    make_synthetic_corpus(cfg.eval_path(), cfg.gen.eval_spec(), cfg.seed + 3);

    const auto pretrain_data = load_dataset(cfg.pretrain_path());
    const auto train_data = load_dataset(cfg.train_path());
    const auto eval_data = load_dataset(cfg.eval_path());

    LvlmModel model(cfg.model, cfg.seed);
    TwoStageConfig ts{cfg.pretrain, cfg.instruct, false};
    std::vector<TrainReport> reports;
    run_two_stage(model, pretrain_data, train_data, ts, cfg.seed, &reports);

    const MetricReport report = evaluate(model, eval_data, {}, cfg.eval_max_new);
    const double cls = report.value_for(Task::classification);
    const double vqa = report.value_for(Task::vqa_short);
    const double rec = report.value_for(Task::rec);
    const double elapsed = seconds_since(t0);

    std::ostringstream os;
    os << "classification " << cls << ", vqa_short " << vqa << ", rec IoU " << rec << ", "
       << static_cast<int>(elapsed) << "s";
    detail = os.str();
    return cls >= 0.90 && vqa >= 0.90 && rec >= 0.5 && elapsed < 900.0;
}

// --- criterion 9: ablation harness completeness --------------------------------

bool criterion_ablations(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = fresh_dir("ablate");
    RunConfig base = RunConfig::desk_default();

    const std::map<AblationAxis, size_t> expected_runs{
        {AblationAxis::encoder_freeze, 2}, {AblationAxis::llm_strategy, 4},
        {AblationAxis::init_3d, 2},        {AblationAxis::stage_count, 2},
        {AblationAxis::connector_kind, 3}};

    for (const auto axis : all_ablation_axes()) {
        const AblationTable table = run_ablation(axis, base, dir, 7);
        if (table.runs.size() != expected_runs.at(axis)) {
            detail = std::string("axis ") + ablation_axis_name(axis) + " produced " +
                     std::to_string(table.runs.size()) + " runs";
            return false;
        }
        for (const auto& run : table.runs)
            if (run.report.per_task.empty()) {
                detail = std::string("axis ") + ablation_axis_name(axis) + " run '" + run.label +
                         "' has an empty report";
                return false;
            }
        if (table.to_text().find("axis=") != 0) {
            detail = "table text missing header";
            return false;
        }
    }
    const double elapsed = seconds_since(t0);
    detail = "5 axes, 13 runs, " + std::to_string(static_cast<int>(elapsed)) + "s";
    return elapsed < 1800.0;
}

// --- criterion 10: determinism --------------------------------------------------

bool criterion_determinism(std::string& detail) {
    const auto dir = fresh_dir("determinism");
    const auto data = testutil::tiny_corpus({{Task::classification, 12}, {Task::caption, 12}}, 121);

    auto run = [&](const fs::path& out) {
        LvlmModel model(testutil::tiny_2d_config(), 7);
        StageConfig stage = StageConfig::instruct_preset();
        stage.lr = 1e-3f;
        stage.epochs = 2;
        stage.batch_size = 4;
        const Checkpoint ckpt = train_stage(model, data, stage, 7);
        write_checkpoint_file(out, ckpt);
    };
    run(dir / "a.mmck");
    run(dir / "b.mmck");

    std::ifstream fa(dir / "a.mmck", std::ios::binary), fb(dir / "b.mmck", std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    if (ba != bb || ba.empty()) {
        detail = "checkpoint files differ between equal-seed runs";
        return false;
    }

    // Save/load round-trips logits bit-for-bit.
    LvlmModel model(testutil::tiny_2d_config(), 7);
    NoGradGuard ng;
    const std::vector<int> probe{1, 30, 60, 90};
    const auto before = model.lm().forward_prefix(Tensor{}, probe);
    save_checkpoint(model, dir / "c.mmck", "x");
    LvlmModel other(testutil::tiny_2d_config(), 8);
    load_checkpoint(dir / "c.mmck", other);
    const auto after = other.lm().forward_prefix(Tensor{}, probe);
    if (std::memcmp(before.data(), after.data(),
                    sizeof(float) * static_cast<size_t>(before.numel())) != 0) {
        detail = "save/load changed logits";
        return false;
    }
    detail = "byte-identical checkpoints, bit-exact round-trip";
    return true;
}

}  // namespace

int main() {
    run_criterion(1, "gradient correctness (ops + composite blocks, 20 seeds)", criterion_gradients);
    run_criterion(2, "shape ledger at reference extents", criterion_shapes);
    run_criterion(3, "pooling identities and permutation invariance", criterion_pooling);
    run_criterion(4, "freeze invariant across stages", criterion_freeze);
    run_criterion(5, "lora inject/merge contract and preset rates", criterion_lora);
    run_criterion(6, "2d-to-3d transfer identity", criterion_transfer);
    run_criterion(7, "causality and cached-vs-replay decoding", criterion_causality);
    run_criterion(8, "end-to-end two-stage synthetic run", criterion_end_to_end);
    run_criterion(9, "ablation harness completeness", criterion_ablations);
    run_criterion(10, "determinism and checkpoint round-trip", criterion_determinism);

    if (g_failures == 0)
        std::cout << "acceptance: all criteria passed" << std::endl;
    else
        std::cout << "acceptance: " << g_failures << " criterion(s) failed" << std::endl;
    return g_failures;
}
