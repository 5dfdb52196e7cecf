// Parallel kernels against their serial reference versions.
#include <benchmark/benchmark.h>

#include <random>

#include "s2rf/features.hpp"
#include "s2rf/loss.hpp"
#include "s2rf/nnfm.hpp"
#include "s2rf/parallel.hpp"
#include "s2rf/render.hpp"
#include "s2rf/synthetic.hpp"

using namespace s2rf;

namespace {

const VoxelGrid& sphere_grid() {
    static const VoxelGrid g = make_sphere_grid(SyntheticSpec{});
    return g;
}

const VoxelGrid& noisy_grid() {
    static const VoxelGrid g = [] {
        VoxelGrid v = VoxelGrid::dense({48, 48, 48}, BoundingBox{}, 2, 0.0f);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<float> u(-1, 1);
        for (float& x : v.density_data()) x = u(rng);
        for (float& x : v.sh_data()) x = u(rng);
        return v;
    }();
    return g;
}

FeatureMap random_map(int h, int w, int c, uint64_t seed) {
    FeatureMap f(h, w, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1, 1);
    for (float& v : f.data) v = u(rng);
    return f;
}

template <bool Serial>
void BM_Render(benchmark::State& state) {
    const Camera cam = look_at_camera({3.0, 1.0, 1.2}, {0, 0, 0}, int(state.range(0)), 45.0);
    RenderOptions o;
    o.march.step = default_step(sphere_grid());
    for (auto _ : state) {
        auto img = Serial ? reference::render_image(sphere_grid(), cam, o) : render_image(sphere_grid(), cam, o);
        benchmark::DoNotOptimize(img.rgb.rgb.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <bool Serial>
void BM_Tv(benchmark::State& state) {
    GridGradients g(noisy_grid());
    for (auto _ : state) {
        g.zero();
        benchmark::DoNotOptimize(Serial ? reference::tv_loss(noisy_grid(), &g) : tv_loss(noisy_grid(), &g));
    }
}

template <bool Serial>
void BM_Conv(benchmark::State& state) {
    const FeatureExtractor fx = make_seeded_extractor(1, 32, 32);
    const Layer& conv = fx.layers()[3];
    const FeatureMap in = random_map(int(state.range(0)), int(state.range(0)), 32, 2);
    for (auto _ : state) {
        auto out = Serial ? reference::conv_forward(conv, in) : conv_forward(conv, in);
        benchmark::DoNotOptimize(out.data.data());
    }
}

template <bool Serial>
void BM_NearestNeighbors(benchmark::State& state) {
    const FeatureMap q = random_map(int(state.range(0)), int(state.range(0)), 16, 3);
    const FeatureMap s = random_map(64, 64, 16, 4);
    for (auto _ : state) {
        auto m = Serial ? reference::nearest_neighbors(q, s) : nearest_neighbors(q, s);
        benchmark::DoNotOptimize(m.index.data());
    }
}

}  // namespace

BENCHMARK(BM_Render<false>)->Name("Render/parallel")->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Render<true>)->Name("Render/serial")->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tv<false>)->Name("Tv/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tv<true>)->Name("Tv/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv<false>)->Name("Conv/parallel")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv<true>)->Name("Conv/serial")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NearestNeighbors<false>)->Name("NearestNeighbors/parallel")->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NearestNeighbors<true>)->Name("NearestNeighbors/serial")->Arg(32)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
    configure_threads();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::AddCustomContext("threads", std::to_string(thread_count()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
