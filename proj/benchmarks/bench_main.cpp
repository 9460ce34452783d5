#include <benchmark/benchmark.h>

#include "changebind/init.hpp"
#include "changebind/layers.hpp"
#include "changebind/model.hpp"
#include "changebind/ops.hpp"

using namespace changebind;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
    }
    return Tensor::from_values(std::move(shape), v);
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto c = state.range(0);
    const auto s = state.range(1);
    Rng rng(1);
    Conv2d conv(c, c, 3, 1, 1, true, rng);
    const auto x = uniform({1, c, s, s}, 2);
    NoGradGuard no_grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv.forward(x));
    }
}
BENCHMARK(BM_Conv2dForward)->Args({16, 64})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
    Rng rng(1);
    Conv2d conv(32, 32, 3, 1, 1, true, rng);
    auto x = uniform({1, 32, 32, 32}, 2);
    x.requires_grad_();
    ParameterSet set;
    conv.register_parameters(set, "c.");
    for (auto _ : state) {
        auto loss = sum(conv.forward(x));
        loss.backward();
        reset_graph_grads(loss);
    }
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMillisecond);

void BM_Mhsa(benchmark::State& state) {
    const auto tokens = state.range(0);
    Rng rng(3);
    MultiHeadAttention attn(32, 4, rng);
    const auto x = uniform({1, tokens, 32}, 4);
    NoGradGuard no_grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(attn.forward(x));
    }
}
BENCHMARK(BM_Mhsa)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
    const auto s = state.range(0);
    ChangeBindModel model(ModelConfig::desk(), 5);
    const auto pre = uniform({1, 3, s, s}, 6);
    const auto post = uniform({1, 3, s, s}, 7);
    NoGradGuard no_grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(pre, post));
    }
}
BENCHMARK(BM_ModelForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ModelTrainStep(benchmark::State& state) {
    ChangeBindModel model(ModelConfig::desk(), 8);
    const auto pre = uniform({4, 3, 64, 64}, 9);
    const auto post = uniform({4, 3, 64, 64}, 10);
    BinaryMask mask({4, 64, 64});
    for (std::int64_t i = 0; i < mask.size(); i += 3) {
        mask.set(i, true);
    }
    const auto labels = mask.to_labels();
    for (auto _ : state) {
        auto loss = cross_entropy_loss(model.forward(pre, post), labels);
        loss.backward();
        reset_graph_grads(loss);
    }
}
BENCHMARK(BM_ModelTrainStep)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
