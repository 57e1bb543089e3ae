#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "geb/errors.hpp"
#include "geb/model/checkpoint.hpp"
#include "geb/model/transformer.hpp"
#include "support.hpp"

using namespace geb;
using namespace geb::model;
using geb::testutil::max_abs_diff;
using nd::TensorD;

namespace {

// Independent shape enumeration: every tensor's extent product.
std::uint64_t enumerate_shapes(std::uint64_t vocab, std::uint64_t hidden, std::uint64_t ffn, std::uint64_t heads,
                               std::uint64_t layers, std::uint64_t groups) {
    const std::uint64_t head_dim = hidden / heads;
    const std::uint64_t kv = groups * head_dim;
    const std::uint64_t per_layer = hidden * hidden + hidden * kv + hidden * kv + hidden * hidden +
                                    hidden * ffn + hidden * ffn + ffn * hidden + hidden + hidden;
    return vocab * hidden + layers * per_layer + hidden + hidden * vocab;
}

TensorD random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    TensorD t({r, c});
    for (auto& v : t.data()) v = n(rng);
    return t;
}

TensorD attention(const TensorD& x, const ModelParams<double>& p, const ModelConfig& cfg, std::size_t start = 0) {
    nd::Tape<double> tape(false);
    const auto vars = bind_params(tape, p, false);
    return gqa_attention(tape.constant(x), vars.layers[0], cfg, start).value();
}

}  // namespace

TEST(ParamCount, FullScaleConfig) {
    const ModelConfig cfg = ModelConfig::geb_1_3b();
    const std::uint64_t oracle = enumerate_shapes(64896, 2048, 5632, 16, 24, 4);
    EXPECT_EQ(oracle, 1348044800u);
    EXPECT_EQ(param_count(cfg), oracle);
    EXPECT_GE(param_count(cfg), 1.30e9);
    EXPECT_LE(param_count(cfg), 1.40e9);
}

TEST(ParamCount, ToyConfigMatchesMaterializedTensors) {
    const ModelConfig cfg = testutil::toy_config();
    EXPECT_EQ(param_count(cfg), enumerate_shapes(64, 16, 48, 4, 2, 2));
    EXPECT_EQ(param_count(cfg), init_params<float>(cfg, 1).numel());
}

TEST(ParamCount, FullGroupsEqualMultiHeadShapes) {
    ModelConfig cfg = testutil::toy_config();
    cfg.kv_groups = cfg.n_heads;
    const std::uint64_t mha = 64 * 16 + 2 * (4 * 16 * 16 + 3 * 16 * 48 + 2 * 16) + 16 + 16 * 64;
    EXPECT_EQ(param_count(cfg), mha);
}

TEST(Config, FfnRoundingReproducesFullScaleWidth) {
    EXPECT_EQ(swiglu_ffn_size(2048), 5632u);
    EXPECT_EQ(ModelConfig::geb_1_3b().ffn_size, swiglu_ffn_size(2048));
}

TEST(Config, FullScaleShape) {
    const ModelConfig cfg = ModelConfig::geb_1_3b();
    EXPECT_EQ(cfg.vocab_size, 64896u);
    EXPECT_EQ(cfg.hidden_size, 2048u);
    EXPECT_EQ(cfg.n_heads, 16u);
    EXPECT_EQ(cfg.n_layers, 24u);
    EXPECT_EQ(cfg.kv_groups, 4u);
    EXPECT_EQ(cfg.max_seq_len, 4096u);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, RejectsOddHeadDim) {
    ModelConfig cfg = testutil::toy_config();
    cfg.hidden_size = 12;  // head_dim 3
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, RejectsIndivisibleGroups) {
    ModelConfig cfg = testutil::toy_config();
    cfg.kv_groups = 3;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, KvRoundTrip) {
    ModelConfig cfg = testutil::toy_config();
    cfg.norm_placement = NormPlacement::Pre;
    cfg.rope_base = 500000.0;
    EXPECT_EQ(ModelConfig::from_kv(util::KvDoc::parse(cfg.to_kv().to_text())), cfg);
}

TEST(Rope, PositionZeroIsIdentity) {
    const TensorD x = random_matrix(1, 8, 3);
    const std::vector<std::size_t> pos = {0};
    EXPECT_EQ(apply_rope(x, pos, 10000.0), x);
}

TEST(Rope, QuarterTurn) {
    // Pair 1 of a 4-wide head turns by base^(-1/2) per position; with base
    // (2/pi)^2 position 1 is a quarter turn.
    const double base = (2 / std::numbers::pi) * (2 / std::numbers::pi);
    const TensorD q = TensorD::matrix(1, 4, {0, 0, 1, 0});
    const std::vector<std::size_t> pos = {1};
    const TensorD r = apply_rope(q, pos, base);
    EXPECT_NEAR(r[2], 0.0, 1e-6);
    EXPECT_NEAR(r[3], 1.0, 1e-6);
}

TEST(Rope, OddHeadDimThrows) {
    const std::vector<std::size_t> pos = {0};
    EXPECT_THROW(apply_rope(TensorD({1, 3}), pos, 10000.0), ConfigError);
}

TEST(Rope, ScoresDependOnRelativeOffsetOnly) {
    const TensorD q = random_matrix(1, 8, 4);
    const TensorD k = random_matrix(1, 8, 5);
    const auto score = [&](std::size_t m, std::size_t n) {
        const std::vector<std::size_t> pm = {m}, pn = {n};
        const TensorD a = apply_rope(q, pm, 10000.0), b = apply_rope(k, pn, 10000.0);
        double s = 0.0;
        for (std::size_t i = 0; i < 8; ++i) s += a[i] * b[i];
        return s;
    };
    for (std::size_t shift : {1u, 17u, 1000u}) {
        EXPECT_NEAR(score(5, 2), score(5 + shift, 2 + shift), 1e-5);
    }
}

TEST(Rope, RotationPreservesNorm) {
    const TensorD x = random_matrix(3, 8, 6);
    const std::vector<std::size_t> pos = {4, 99, 4095};
    const TensorD r = apply_rope(x, pos, 10000.0);
    for (std::size_t row = 0; row < 3; ++row) {
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            a += x.at(row, i) * x.at(row, i);
            b += r.at(row, i) * r.at(row, i);
        }
        EXPECT_NEAR(a, b, 1e-12);
    }
}

TEST(RmsNorm, ConstantVectorNormalizesToOne) {
    nd::Tape<double> tape(false);
    const auto out = rmsnorm(tape.constant(TensorD(nd::Shape{1, 6}, 3.5)), tape.constant(TensorD(nd::Shape{6}, 1.0)),
                             1e-12)
                         .value();
    for (double v : out.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(RmsNorm, ZeroVectorStaysZero) {
    nd::Tape<double> tape(false);
    const auto out =
        rmsnorm(tape.constant(TensorD({1, 6})), tape.constant(TensorD(nd::Shape{6}, 1.0)), 1e-5).value();
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(RmsNorm, RandomInputHasUnitRms) {
    nd::Tape<double> tape(false);
    const auto out = rmsnorm(tape.constant(random_matrix(4, 32, 7, 3.0)), tape.constant(TensorD(nd::Shape{32}, 1.0)),
                             1e-5)
                         .value();
    for (std::size_t r = 0; r < 4; ++r) {
        double ms = 0.0;
        for (double v : out.row(r)) ms += v * v;
        EXPECT_NEAR(std::sqrt(ms / 32), 1.0, 1e-4);
    }
}

TEST(SwiGlu, ZeroInputGivesZero) {
    nd::Tape<double> tape(false);
    const auto out = swiglu_ffn(tape.constant(TensorD({2, 4})), tape.constant(random_matrix(4, 6, 1)),
                                tape.constant(random_matrix(4, 6, 2)), tape.constant(random_matrix(6, 4, 3)))
                         .value();
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(SwiGlu, MatchesStraightLineFormula) {
    const TensorD x = random_matrix(3, 4, 11), wg = random_matrix(4, 6, 12), wu = random_matrix(4, 6, 13),
                  wd = random_matrix(6, 4, 14);
    nd::Tape<double> tape(false);
    const TensorD out =
        swiglu_ffn(tape.constant(x), tape.constant(wg), tape.constant(wu), tape.constant(wd)).value();
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<double> hidden(6);
        for (std::size_t j = 0; j < 6; ++j) {
            double g = 0.0, u = 0.0;
            for (std::size_t i = 0; i < 4; ++i) {
                g += x.at(r, i) * wg.at(i, j);
                u += x.at(r, i) * wu.at(i, j);
            }
            hidden[j] = g / (1.0 + std::exp(-g)) * u;
        }
        for (std::size_t c = 0; c < 4; ++c) {
            double y = 0.0;
            for (std::size_t j = 0; j < 6; ++j) y += hidden[j] * wd.at(j, c);
            EXPECT_NEAR(out.at(r, c), y, 1e-6);
        }
    }
}

TEST(Attention, FullGroupsEqualMultiHead) {
    ModelConfig cfg = testutil::toy_config();
    cfg.kv_groups = cfg.n_heads;
    const auto p = init_params<double>(cfg, 21);
    const TensorD x = random_matrix(6, cfg.hidden_size, 22);
    EXPECT_LT(max_abs_diff(attention(x, p, cfg), testutil::reference_attention(x, p.layers[0], cfg)), 1e-6);
}

TEST(Attention, GroupedMatchesLoopReference) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<double>(cfg, 23);
    const TensorD x = random_matrix(5, cfg.hidden_size, 24);
    EXPECT_LT(max_abs_diff(attention(x, p, cfg), testutil::reference_attention(x, p.layers[0], cfg)), 1e-5);
}

TEST(Attention, SingleTokenIsValuePath) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<double>(cfg, 25);
    const TensorD x = random_matrix(1, cfg.hidden_size, 26);
    const TensorD v = nd::matmul(x, p.layers[0].wv);
    // Each query head reads its group's value row.
    TensorD heads({1, cfg.hidden_size});
    const std::size_t hd = cfg.head_dim();
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        for (std::size_t d = 0; d < hd; ++d) heads[h * hd + d] = v[(h / cfg.group_size()) * hd + d];
    }
    EXPECT_LT(max_abs_diff(attention(x, p, cfg), nd::matmul(heads, p.layers[0].wo)), 1e-12);
}

TEST(Attention, GlobalPositionShiftLeavesOutputUnchanged) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<double>(cfg, 27);
    const TensorD x = random_matrix(5, cfg.hidden_size, 28);
    EXPECT_LT(max_abs_diff(attention(x, p, cfg, 0), attention(x, p, cfg, 37)), 1e-5);
}

TEST(Attention, OverflowThrows) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<double>(cfg, 29);
    EXPECT_THROW(attention(random_matrix(4, cfg.hidden_size, 1), p, cfg, cfg.max_seq_len - 3), LengthError);
}

TEST(Block, ZeroProjectionsReduceToDoubleNorm) {
    const ModelConfig cfg = testutil::toy_config();
    auto p = init_params<double>(cfg, 31);
    p.layers[0].wo = TensorD(p.layers[0].wo.shape());
    p.layers[0].w_down = TensorD(p.layers[0].w_down.shape());
    const TensorD x = random_matrix(4, cfg.hidden_size, 32);
    nd::Tape<double> tape(false);
    const auto vars = bind_params(tape, p, false);
    const TensorD out = block_forward(tape.constant(x), vars.layers[0], cfg).value();
    const TensorD ref =
        rmsnorm(rmsnorm(tape.constant(x), vars.layers[0].attn_norm, cfg.norm_eps), vars.layers[0].ffn_norm,
                cfg.norm_eps)
            .value();
    EXPECT_LT(max_abs_diff(out, ref), 1e-12);
}

TEST(Block, PostNormMatchesHandComposition) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<double>(cfg, 33);
    const TensorD x = random_matrix(4, cfg.hidden_size, 34);
    nd::Tape<double> tape(false);
    const auto vars = bind_params(tape, p, false);
    const auto& l = vars.layers[0];
    const TensorD out = block_forward(tape.constant(x), l, cfg).value();

    const TensorD a = testutil::reference_attention(x, p.layers[0], cfg);
    auto h = rmsnorm(tape.constant(nd::add(x, a)), l.attn_norm, cfg.norm_eps);
    auto f = swiglu_ffn(h, l.w_gate, l.w_up, l.w_down);
    const TensorD ref = rmsnorm(nd::add(h, f), l.ffn_norm, cfg.norm_eps).value();
    EXPECT_LT(max_abs_diff(out, ref), 1e-10);
}

TEST(Block, PreAndPostPlacementDiffer) {
    ModelConfig post = testutil::toy_config();
    ModelConfig pre = post;
    pre.norm_placement = NormPlacement::Pre;
    const auto p = init_params<double>(post, 35);
    const std::vector<nd::TokenId> ids = {1, 5, 9, 2};
    EXPECT_GT(max_abs_diff(model_forward(std::span<const nd::TokenId>(ids), p, post),
                           model_forward(std::span<const nd::TokenId>(ids), p, pre)),
              1e-3);
}

TEST(Forward, EmptySequenceGivesEmptyLogits) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<float>(cfg, 1);
    const auto logits = model_forward(std::span<const nd::TokenId>(), p, cfg);
    EXPECT_EQ(logits.shape(), (nd::Shape{0, cfg.vocab_size}));
}

TEST(Forward, OutOfRangeIdThrows) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<float>(cfg, 1);
    const std::vector<nd::TokenId> ids = {1, 64};
    EXPECT_THROW(model_forward(std::span<const nd::TokenId>(ids), p, cfg), VocabularyError);
}

TEST(Forward, TooLongThrows) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<float>(cfg, 1);
    const std::vector<nd::TokenId> ids(cfg.max_seq_len + 1, 1);
    EXPECT_THROW(model_forward(std::span<const nd::TokenId>(ids), p, cfg), LengthError);
}

TEST(Forward, DeterministicAcrossRuns) {
    const ModelConfig cfg = testutil::toy_config();
    const std::vector<nd::TokenId> ids = {3, 1, 4, 1, 5, 9, 2, 6};
    const auto a = model_forward(std::span<const nd::TokenId>(ids), init_params<float>(cfg, 42), cfg);
    const auto b = model_forward(std::span<const nd::TokenId>(ids), init_params<float>(cfg, 42), cfg);
    EXPECT_EQ(a, b);
}

TEST(Forward, Causal) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<double>(cfg, 43);
    std::vector<nd::TokenId> ids = {3, 1, 4, 1, 5, 9, 2, 6};
    const TensorD before = model_forward(std::span<const nd::TokenId>(ids), p, cfg);
    ids[5] = 60;
    const TensorD after = model_forward(std::span<const nd::TokenId>(ids), p, cfg);
    for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < cfg.vocab_size; ++c) EXPECT_EQ(before.at(r, c), after.at(r, c));
    }
    EXPECT_NE(before.at(5, 0), after.at(5, 0));
}

TEST(Params, UntiedStorage) {
    const ModelConfig cfg = testutil::toy_config();
    auto p = init_params<float>(cfg, 44);
    const auto emb = p.tok_embedding;
    for (auto& v : p.out_head.data()) v += 1.0f;
    EXPECT_EQ(p.tok_embedding, emb);
}

TEST(Params, SameSeedSameParameters) {
    const ModelConfig cfg = testutil::toy_config();
    EXPECT_EQ(init_params<float>(cfg, 5), init_params<float>(cfg, 5));
    EXPECT_NE(init_params<float>(cfg, 5), init_params<float>(cfg, 6));
}

TEST(Params, InitStatistics) {
    ModelConfig cfg = testutil::toy_config();
    cfg.vocab_size = 4096;
    cfg.hidden_size = 64;
    const auto p = init_params<double>(cfg, 45);
    double s = 0.0, ss = 0.0;
    for (double v : p.tok_embedding.data()) {
        s += v;
        ss += v * v;
    }
    const double n = static_cast<double>(p.tok_embedding.numel());
    const double sd = std::sqrt(ss / n - (s / n) * (s / n));
    EXPECT_NEAR(sd, 0.02, 0.002);
    for (double v : p.final_norm.data()) EXPECT_EQ(v, 1.0);
    for (const auto& l : p.layers) {
        for (double v : l.attn_norm.data()) EXPECT_EQ(v, 1.0);
        for (double v : l.ffn_norm.data()) EXPECT_EQ(v, 1.0);
    }
}

TEST(Params, CheckShapesRejectsMismatch) {
    const ModelConfig cfg = testutil::toy_config();
    auto p = init_params<float>(cfg, 46);
    p.layers[1].wk = nd::TensorF({16, 16});
    EXPECT_THROW(check_shapes(p, cfg), DimensionError);
}

TEST(Gradient, MeanLogitMatchesFiniteDifferences) {
    ModelConfig cfg = testutil::toy_config();
    cfg.vocab_size = 16;
    cfg.ffn_size = 24;
    const auto params = testutil::gradcheck_params(cfg, 47);
    const std::vector<nd::TokenId> ids = {1, 7, 3, 12, 5};
    const auto mean_logit = [&](const ModelParams<double>& p, nd::Tape<double>& tape) {
        const auto vars = bind_params(tape, p, tape.recording());
        const auto logits = model_forward(tape, std::span<const nd::TokenId>(ids), vars, cfg);
        return nd::scale(nd::sum_all(logits), 1.0 / double(ids.size() * cfg.vocab_size));
    };
    nd::Tape<double> tape;
    const auto analytic = tape.backward(mean_logit(params, tape));
    const auto numeric = testutil::numeric_gradients(params, [&](const ModelParams<double>& p) {
        nd::Tape<double> t(false);
        return mean_logit(p, t).value().item();
    });
    for (const auto& [name, g] : numeric) {
        ASSERT_TRUE(analytic.count(name)) << name;
        const auto& a = analytic.at(name);
        EXPECT_LT(testutil::relative_error({a.data().begin(), a.data().end()}, {g.data().begin(), g.data().end()}),
                  1e-3)
            << name;
    }
}

TEST(Checkpoint, RoundTrip) {
    const ModelConfig cfg = testutil::toy_config();
    const auto p = init_params<float>(cfg, 48);
    testutil::TempDir dir("ckpt");
    save_model(dir / "m.ckpt", cfg, p);
    const auto [cfg2, p2] = load_model(dir / "m.ckpt");
    EXPECT_EQ(cfg2, cfg);
    EXPECT_EQ(p2, p);
}

TEST(Checkpoint, TensorsInDeclarationOrder) {
    const ModelConfig cfg = testutil::toy_config();
    testutil::TempDir dir("ckpt");
    save_model(dir / "m.ckpt", cfg, init_params<float>(cfg, 49));
    const Checkpoint ck = read_checkpoint(dir / "m.ckpt");
    ASSERT_FALSE(ck.tensors.empty());
    EXPECT_EQ(ck.tensors.front().first, "tok_embedding");
    EXPECT_EQ(ck.tensors[1].first, "layers.0.wq");
    EXPECT_EQ(ck.tensors.back().first, "out_head");
}

TEST(Checkpoint, TruncatedFileThrows) {
    const ModelConfig cfg = testutil::toy_config();
    testutil::TempDir dir("ckpt");
    save_model(dir / "m.ckpt", cfg, init_params<float>(cfg, 50));
    std::string bytes = testutil::read_file(dir / "m.ckpt");
    bytes.resize(bytes.size() / 2);
    testutil::write_file(dir / "t.ckpt", bytes);
    EXPECT_THROW(load_model(dir / "t.ckpt"), IoError);
    testutil::write_file(dir / "junk.ckpt", "not a checkpoint");
    EXPECT_THROW(load_model(dir / "junk.ckpt"), IoError);
}
