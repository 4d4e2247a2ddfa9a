#include <benchmark/benchmark.h>

#include <random>

#include "organseg/aggregation.hpp"
#include "organseg/heatmap.hpp"
#include "organseg/phantom.hpp"
#include "organseg/tiny_model.hpp"
#include "organseg/volume.hpp"

using namespace organseg;

namespace {

Volume3D noise_volume(std::int64_t n, double spacing, std::uint64_t seed) {
    GridSpec g{{n, n, n}, {spacing, spacing, spacing}, {0.0, 0.0, 0.0}};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(static_cast<std::size_t>(g.voxel_count()));
    for (auto& x : v) x = dist(rng);
    return Volume3D(g, VolumeKind::intensity, std::move(v));
}

void BM_ConvForward(benchmark::State& state) {
    const auto n = state.range(0);
    const auto params = make_conv_net({2, 8, 1}, 1);
    const auto in = noise_volume(n, 1.0, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward(params, in));
    state.SetItemsProcessed(state.iterations() * in.size());
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
    const auto n = state.range(0);
    const auto params = make_conv_net({2, 8, 1}, 1);
    const auto in = noise_volume(n, 1.0, 3);
    const std::vector<Volume3D> up{noise_volume(n, 1.0, 4)};
    for (auto _ : state) benchmark::DoNotOptimize(backward(params, in, up));
    state.SetItemsProcessed(state.iterations() * in.size());
}
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ResampleTrilinear(benchmark::State& state) {
    const auto in = noise_volume(64, 1.0, 5);
    for (auto _ : state) benchmark::DoNotOptimize(resample(in, {3.0, 3.0, 3.0}, Interpolation::trilinear));
}
BENCHMARK(BM_ResampleTrilinear)->Unit(benchmark::kMillisecond);

void BM_SynthesizeHeatmaps(benchmark::State& state) {
    const GridSpec g{{22, 22, 22}, {3.0, 3.0, 3.0}, {0.0, 0.0, 0.0}};
    const auto spec = default_phantom_template();
    CentroidSet centroids;
    for (const auto& o : spec.organs) centroids.push_back({o.id, o.center_mm});
    for (auto _ : state) benchmark::DoNotOptimize(synthesize_heatmaps(centroids, g, 150.0));
}
BENCHMARK(BM_SynthesizeHeatmaps);

void BM_Aggregate(benchmark::State& state) {
    const GridSpec g{{64, 64, 64}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
    CropSet set{{}, g};
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    for (int id = 1; id <= 3; ++id) {
        const BoundingBox box{{8 * id, 8, 8}, {8 * id + 32, 40, 40}, g.spacing};
        Volume3D p({box.size(), g.spacing, {0.0, 0.0, 0.0}}, VolumeKind::probability, 0.0);
        for (auto& x : p.data()) x = u(rng);
        set.crops.push_back({id, std::move(p), box});
    }
    for (auto _ : state) benchmark::DoNotOptimize(aggregate(set));
}
BENCHMARK(BM_Aggregate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
