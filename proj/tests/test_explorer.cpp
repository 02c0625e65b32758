#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nltm/conductor.hpp"
#include "nltm/explorer.hpp"
#include "nltm/lowrank.hpp"
#include "nltm/rng.hpp"
#include "nltm/runtime.hpp"
#include "nltm/zoo.hpp"

using namespace nltm;

namespace {

Tensor random_tensor(const std::vector<int64_t>& shape, uint64_t seed, double scale = 1.0) {
    Tensor t(shape);
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
    return t;
}

Conv2DLayer make_conv(int64_t in, int64_t out, int64_t k, int64_t pad, uint64_t seed) {
    Conv2DLayer l;
    l.geom = ConvGeometry{.kernel_h = k, .kernel_w = k, .pad_h = pad, .pad_w = pad,
                          .in_ch = in, .out_ch = out};
    l.weight = random_tensor({out, in, k, k}, seed, 0.3);
    l.bias = random_tensor({out}, seed + 1, 0.05);
    return l;
}

DenseLayer make_dense(int64_t in, int64_t out, uint64_t seed) {
    DenseLayer l;
    l.in = in;
    l.out = out;
    l.weight = random_tensor({in, out}, seed, 0.3);
    l.bias = random_tensor({out}, seed + 1, 0.05);
    return l;
}

Tensor cp_kernel(int64_t out, int64_t in, int64_t kh, int64_t kw, int64_t r, uint64_t seed) {
    Rng rng(seed);
    Tensor k({out, in, kh, kw});
    for (int64_t t = 0; t < r; ++t) {
        std::vector<double> a(static_cast<size_t>(out)), b(static_cast<size_t>(in)),
            c(static_cast<size_t>(kh)), d(static_cast<size_t>(kw));
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        for (auto& v : c) v = rng.normal();
        for (auto& v : d) v = rng.normal();
        for (int64_t i = 0; i < out; ++i)
            for (int64_t j = 0; j < in; ++j)
                for (int64_t y = 0; y < kh; ++y)
                    for (int64_t x = 0; x < kw; ++x)
                        k.at(i, j, y, x) += a[static_cast<size_t>(i)] * b[static_cast<size_t>(j)] *
                                            c[static_cast<size_t>(y)] * d[static_cast<size_t>(x)];
    }
    return k;
}

}  // namespace

TEST_CASE("break-even ranks from the closed forms") {
    // conv 3x3, 64 -> 128: floor(73727 / 198) = 372
    CHECK(break_even_rank(LayerSpec{make_conv(64, 128, 3, 1, 1)}) == 372);
    // dense 512x100: floor(51199 / 613) = 83
    CHECK(break_even_rank(LayerSpec{make_dense(512, 100, 3)}) == 83);
    // a 1x1 conv with one channel each: no compressing rank exists
    CHECK(break_even_rank(LayerSpec{make_conv(1, 1, 1, 0, 5)}) == 0);
}

TEST_CASE("break-even is consistent with the parameter counter") {
    Conv2DLayer conv = make_conv(8, 16, 3, 1, 7);
    const int64_t be = break_even_rank(LayerSpec{conv});
    REQUIRE(be >= 1);
    AlsOptions als;
    als.max_iters = 1;
    als.restarts = 1;
    const int64_t dense_weights = count_params(LayerSpec{conv}) - 16;  // minus bias
    const int64_t at = count_params(LayerSpec{decompose_conv(conv, be, als)}) - 16;
    const int64_t above = count_params(LayerSpec{decompose_conv(conv, be + 1, als)}) - 16;
    CHECK(at < dense_weights);
    CHECK(above >= dense_weights);
}

TEST_CASE("initial_ranks finds the constructed CP rank of a conv kernel") {
    Conv2DLayer conv = make_conv(12, 16, 3, 1, 9);
    conv.weight = cp_kernel(16, 12, 3, 3, 4, 11);
    Model m;
    m.input_shape = {12, 8, 8};
    m.num_classes = 16 * 64;
    m.layers = {conv, FlattenLayer{}};
    ComposedList cl{{1}};
    AlsOptions als;
    als.max_iters = 300;
    als.restarts = 3;
    als.seed = 13;
    RankAssignment ranks = initial_ranks(m, cl, 0.05, als);
    REQUIRE(ranks.count(0) == 1);
    CHECK(ranks.at(0) == 4);
}

TEST_CASE("initial_ranks on a dense layer follows singular-value tail energy") {
    // diag(10, 1e-3, ...) padded: rank 1 already explains the energy.
    DenseLayer dense = make_dense(32, 16, 15);
    Tensor u = random_tensor({32, 2}, 17);
    Tensor v = random_tensor({16, 2}, 19);
    for (int64_t i = 0; i < 32; ++i)
        for (int64_t j = 0; j < 16; ++j)
            dense.weight.at(i, j) = 10.0 * u.at(i, 0) * v.at(j, 0) + 1e-4 * u.at(i, 1) * v.at(j, 1);
    Model m;
    m.input_shape = {32};
    m.num_classes = 16;
    m.layers = {dense};
    ComposedList cl{{1}};
    RankAssignment ranks = initial_ranks(m, cl, 0.05, AlsOptions{});
    CHECK(ranks.at(0) == 1);
}

TEST_CASE("stage1 on an exactly low-rank model succeeds in round 1 with ~zero drop") {
    // Build a model, project its optimizable layers to low rank exactly, and
    // confirm the explorer reproduces it without needing backoff.
    Model m;
    m.input_shape = {1, 12, 12};
    m.num_classes = 4;
    Conv2DLayer conv = make_conv(1, 12, 3, 1, 21);
    conv.weight = cp_kernel(12, 1, 3, 3, 2, 23);
    DenseLayer dense = make_dense(12 * 36, 4, 25);
    {
        SvdResult svd = truncated_svd(dense.weight, 3);
        for (int64_t i = 0; i < dense.in; ++i)
            for (int64_t j = 0; j < dense.out; ++j) {
                double acc = 0.0;
                for (int64_t t = 0; t < 3; ++t) acc += svd.u.at(i, t) * svd.s[t] * svd.v.at(j, t);
                dense.weight.at(i, j) = acc;
            }
    }
    m.layers = {conv, ReLULayer{}, MaxPool2DLayer{2, 2}, FlattenLayer{}, dense};

    Dataset data = synth_shapes(30, 4, 12, 27);
    ZNormStats stats = znorm_stats(data);
    data = apply_znorm(data, stats);
    auto [train_set, val] = stratified_split(data, 0.2, 29);
    const double baseline = evaluate_top1(m, val);

    OptimizationConfig cfg;
    cfg.delta = 100.0;  // any drop is within delta: round 1 must succeed
    cfg.min_layer_params = 1;
    cfg.finetune_epochs_stage1 = 1;
    cfg.als.max_iters = 300;
    cfg.als.restarts = 3;
    cfg.augment = false;
    ComposedList cl = build_composed_list(m, cfg);

    Stage1Result res = stage1(m, train_set, val, baseline, cl, cfg);
    CHECK(res.state.rounds == 1);
    CHECK(res.state.delta_met);
    CHECK(count_params(res.model) < count_params(m));
    // Exact low-rank layers mean near-zero reconstruction fits.
    for (const auto& [idx, fit] : res.state.fits) CHECK(fit < 0.05);
}

TEST_CASE("stage1 backoff reverts an over-capped dense layer to dense with bit 0") {
    // An impossible delta forces every backoff round; the test pins the
    // invariants rather than the accuracy outcome.
    Model m = make_reference_mlp({1, 12, 12}, 3, 31);
    Dataset data = synth_shapes(20, 3, 12, 33);
    ZNormStats stats = znorm_stats(data);
    data = apply_znorm(data, stats);
    auto [train_set, val] = stratified_split(data, 0.2, 35);
    const double baseline = evaluate_top1(m, val);

    OptimizationConfig cfg;
    cfg.delta = -200.0;  // required accuracy exceeds 100%: never attainable
    cfg.min_layer_params = 1;
    cfg.finetune_epochs_stage1 = 1;
    cfg.backoff_rounds = 2;
    cfg.als.max_iters = 50;
    cfg.als.restarts = 1;
    cfg.augment = false;
    ComposedList cl = build_composed_list(m, cfg);
    REQUIRE(cl.any());

    Stage1Result res = stage1(m, train_set, val, baseline, cl, cfg);
    CHECK(res.state.rounds <= cfg.backoff_rounds);
    CHECK_FALSE(res.state.delta_met);
    CHECK_FALSE(res.state.audit.empty());
    // Every surviving decomposed layer respects its break-even cap.
    const auto opt_idx = optimizable_indices(m);
    for (const auto& [idx, r] : res.state.ranks) {
        const int64_t cap = break_even_rank(m.layers[static_cast<size_t>(idx)]);
        CHECK(r <= cap);
        CHECK(r >= 1);
    }
}
