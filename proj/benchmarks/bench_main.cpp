// Microbenchmarks for the hot paths: direct convolution, the decomposed
// forward pass, CP-ALS fitting, and truncated SVD.

#include <benchmark/benchmark.h>

#include "nltm/conductor.hpp"
#include "nltm/lowrank.hpp"
#include "nltm/rng.hpp"
#include "nltm/runtime.hpp"
#include "nltm/tensor.hpp"
#include "nltm/zoo.hpp"

namespace {

nltm::Tensor random_tensor(const std::vector<int64_t>& shape, uint64_t seed) {
    nltm::Tensor t(shape);
    nltm::Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
}

void BM_Conv2d(benchmark::State& state) {
    const int64_t c = state.range(0);
    nltm::Tensor x = random_tensor({1, c, 32, 32}, 1);
    nltm::Tensor w = random_tensor({2 * c, c, 3, 3}, 2);
    nltm::ConvGeometry geom{.kernel_h = 3, .kernel_w = 3, .pad_h = 1, .pad_w = 1,
                            .in_ch = c, .out_ch = 2 * c};
    for (auto _ : state) {
        benchmark::DoNotOptimize(nltm::conv2d(x, w, geom));
    }
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(16)->Arg(32);

void BM_DecomposedForward(benchmark::State& state) {
    nltm::Model model = nltm::make_reference_cnn({1, 16, 16}, 4, 7);
    nltm::OptimizationConfig cfg;
    nltm::ComposedList cl = nltm::build_composed_list(model, cfg);
    nltm::AlsOptions als;
    als.max_iters = 30;
    als.restarts = 1;
    const auto opt_idx = nltm::optimizable_indices(model);
    for (size_t pos = 0; pos < opt_idx.size(); ++pos) {
        if (!cl.bits[pos]) continue;
        const int64_t li = opt_idx[pos];
        if (const auto* conv =
                std::get_if<nltm::Conv2DLayer>(&model.layers[static_cast<size_t>(li)])) {
            model = nltm::replace_layer(model, li, nltm::decompose_conv(*conv, 8, als));
        } else if (const auto* dense = std::get_if<nltm::DenseLayer>(
                       &model.layers[static_cast<size_t>(li)])) {
            const int64_t r = std::min<int64_t>(8, std::min(dense->in, dense->out));
            model = nltm::replace_layer(model, li, nltm::decompose_dense(*dense, r));
        }
    }
    nltm::Tensor x = random_tensor({8, 1, 16, 16}, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(nltm::forward(model, x));
    }
}
BENCHMARK(BM_DecomposedForward);

void BM_CpAls(benchmark::State& state) {
    const int64_t r = state.range(0);
    nltm::Tensor k = random_tensor({16, 8, 3, 3}, 9);
    nltm::AlsOptions opts;
    opts.max_iters = 50;
    opts.restarts = 1;
    opts.seed = 13;
    for (auto _ : state) {
        benchmark::DoNotOptimize(nltm::cp_als(k, r, opts));
    }
}
BENCHMARK(BM_CpAls)->Arg(4)->Arg(16);

void BM_TruncatedSvd(benchmark::State& state) {
    const int64_t n = state.range(0);
    nltm::Tensor a = random_tensor({n, n}, 21);
    for (auto _ : state) {
        benchmark::DoNotOptimize(nltm::truncated_svd(a, n / 4));
    }
}
BENCHMARK(BM_TruncatedSvd)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
