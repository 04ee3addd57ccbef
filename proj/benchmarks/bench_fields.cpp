#include <benchmark/benchmark.h>

#include "fieldloom/fields.hpp"
#include "fieldloom/metrics.hpp"
#include "fieldloom/recon.hpp"
#include "fieldloom/rng.hpp"

using namespace fieldloom;

namespace {

std::vector<double> points(std::size_t n, int d) {
    Rng rng(0, Stream::bench);
    std::vector<double> x(n * d);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

void BM_ForwardBatch(benchmark::State& state) {
    const auto kind = static_cast<ArchKind>(state.range(0));
    const auto model = init_params(ArchSpec::defaults(kind, 2), 0);
    const auto X = points(static_cast<std::size_t>(state.range(1)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward_batch(model, X));
    state.SetItemsProcessed(state.iterations() * state.range(1));
    state.SetLabel(to_string(kind));
}
BENCHMARK(BM_ForwardBatch)
    ->ArgsProduct({{static_cast<int>(ArchKind::sine), static_cast<int>(ArchKind::fourier),
                    static_cast<int>(ArchKind::relu), static_cast<int>(ArchKind::rbf)},
                   {4096}})
    ->Unit(benchmark::kMillisecond);

void BM_Backward(benchmark::State& state) {
    const auto kind = static_cast<ArchKind>(state.range(0));
    const auto model = init_params(ArchSpec::defaults(kind, 2), 0);
    const auto X = points(1024, 2);
    const std::vector<double> up(1024, 1.0 / 1024);
    ForwardTape tape;
    for (auto _ : state) {
        forward_batch(model, X, &tape);
        benchmark::DoNotOptimize(backward(model, tape, up));
    }
    state.SetItemsProcessed(state.iterations() * 1024);
    state.SetLabel(to_string(kind));
}
BENCHMARK(BM_Backward)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_EvaluateGrid(benchmark::State& state) {
    const auto model = init_params(ArchSpec::defaults(ArchKind::sine, 2), 0);
    NormSpec norm;
    norm.bounds.assign(2, Bounds{-180.0, 180.0});
    norm.degenerate.assign(2, 0);
    GridSpec grid;
    grid.axes = {GridAxis{-180, 180, static_cast<int>(state.range(0)), {}},
                 GridAxis{-90, 90, static_cast<int>(state.range(0)) / 2, {}}};
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_grid(model, norm, grid).values);
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.count()));
}
BENCHMARK(BM_EvaluateGrid)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RocAuc(benchmark::State& state) {
    Rng rng(1);
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = rng.uniform01();
        y[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    for (auto _ : state) benchmark::DoNotOptimize(roc_auc({s, y}));
}
BENCHMARK(BM_RocAuc)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
