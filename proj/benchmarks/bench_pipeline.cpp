// Microbenchmarks for the hot paths: exact nearest-neighbor scans over
// the reference index, convolutional forward passes, and tile
// rendering. Run with --benchmark_filter=... to select.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cvloc/geoindex.hpp"
#include "cvloc/models.hpp"
#include "cvloc/synthworld.hpp"

using namespace cvloc;

namespace {

ReferenceIndex make_index(uint32_t cols, uint32_t rows, int d, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> feats(static_cast<size_t>(cols) * rows * d);
    for (auto& v : feats) v = n(rng);
    return ReferenceIndex({0.0, 0.0, 100.0, cols, rows}, d, std::move(feats), {}, {});
}

void BM_IndexSearch(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    ReferenceIndex index = make_index(50, 50, d, 1);
    std::mt19937_64 rng(2);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> q(static_cast<size_t>(d));
    for (auto& v : q) v = n(rng);
    for (auto _ : state) {
        auto res = localize(index, q);
        benchmark::DoNotOptimize(res.candidates.front());
    }
    state.counters["cell_evals_per_s"] = benchmark::Counter(
        static_cast<double>(index.cell_count()), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_IndexSearch)->Arg(8)->Arg(32)->Arg(128);

void BM_ConvForward(benchmark::State& state) {
    ArchSpec arch;  // default 3-block backbone
    Network net(arch, 1);
    net.set_mode(Mode::eval);
    const int batch = static_cast<int>(state.range(0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor images({batch, 3, arch.input_side, arch.input_side});
    for (auto& v : images.data()) v = u(rng);
    for (auto _ : state) {
        Tensor f = extract_features(net, images);
        benchmark::DoNotOptimize(f.data()[0]);
    }
    state.counters["images_per_s"] =
        benchmark::Counter(static_cast<double>(batch), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ConvForward)->Arg(1)->Arg(8)->Arg(32);

void BM_RenderAerial(benchmark::State& state) {
    WorldSpec w;
    WorldField field(w);
    for (auto _ : state) {
        Tensor t = render_aerial(field, 20000.0, 20000.0, 200.0, 64);
        benchmark::DoNotOptimize(t.data()[0]);
    }
}
BENCHMARK(BM_RenderAerial);

}  // namespace

BENCHMARK_MAIN();
