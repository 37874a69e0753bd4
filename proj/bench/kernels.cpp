#include "catcorr/bench.hpp"
#include "catcorr/geometry.hpp"
#include "catcorr/render.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace catcorr;

namespace {

Mesh posed_mug()
{
    const GeneratedInstance inst = generate_instance(CategorySpec::mug(), 7, "bench");
    Pose pose;
    pose.rotation = Eigen::AngleAxisd(0.6, Vec3(0.3, 1.0, 0.2).normalized()).toRotationMatrix();
    pose.translation = Vec3(0.0, 0.0, 3.0);
    return apply_pose(inst.mesh, pose);
}

MaskImage random_mask(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution on(0.3);
    MaskImage m(64, 64);
    for (double& v : m.values) {
        v = on(rng) ? 1.0 : 0.0;
    }
    return m;
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<Vec3> out(n);
    for (Vec3& p : out) {
        p = Vec3(u(rng), u(rng), u(rng));
    }
    return out;
}

void BM_SoftRaster(benchmark::State& state)
{
    const Mesh mesh = posed_mug();
    const Camera cam = default_camera();
    const double tau = state.range(0) / 100.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(rasterize_soft(mesh, cam, tau));
    }
}

void BM_SoftRasterReference(benchmark::State& state)
{
    const Mesh mesh = posed_mug();
    const Camera cam = default_camera();
    const double tau = state.range(0) / 100.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::rasterize_soft(mesh, cam, tau));
    }
}

void BM_SoftRasterBackward(benchmark::State& state)
{
    const Mesh mesh = posed_mug();
    const Camera cam = default_camera();
    const double tau = state.range(0) / 100.0;
    const SoftRaster fwd = rasterize_soft_cached(mesh, cam, tau);
    const std::vector<double> g(static_cast<std::size_t>(cam.num_pixels()), 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rasterize_soft_backward(mesh, cam, tau, fwd, g));
    }
}

void BM_DistanceTransform(benchmark::State& state)
{
    const MaskImage m = random_mask(3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(distance_transform(m));
    }
}

void BM_DistanceTransformReference(benchmark::State& state)
{
    const MaskImage m = random_mask(3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::distance_transform(m));
    }
}

void BM_Chamfer(benchmark::State& state)
{
    const auto a = random_points(static_cast<std::size_t>(state.range(0)), 1);
    const auto b = random_points(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(chamfer_distance(a, b));
    }
}

void BM_ChamferReference(benchmark::State& state)
{
    const auto a = random_points(static_cast<std::size_t>(state.range(0)), 1);
    const auto b = random_points(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::chamfer_distance(a, b));
    }
}

} // namespace

BENCHMARK(BM_SoftRaster)->Arg(25)->Arg(100);
BENCHMARK(BM_SoftRasterReference)->Arg(25)->Arg(100);
BENCHMARK(BM_SoftRasterBackward)->Arg(25)->Arg(100);
BENCHMARK(BM_DistanceTransform);
BENCHMARK(BM_DistanceTransformReference);
BENCHMARK(BM_Chamfer)->Arg(500)->Arg(2000);
BENCHMARK(BM_ChamferReference)->Arg(500)->Arg(2000);

BENCHMARK_MAIN();
