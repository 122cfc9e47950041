// SPDX-License-Identifier: Apache-2.0
// Serial reference against the OpenMP coverage kernels.
#include <leo/coverage.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace leo::sim;

namespace
{

CoverageGrid grid_of(double side, double cell)
{
    return CoverageGrid::for_bounds({{0, 0, 0}, {side, side, 10}}, cell);
}

std::vector<Pose> poses(std::size_t n, double side)
{
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> coord(0, side), yaw(0, 360);
    std::vector<Pose> out(n);
    for (auto& p: out)
        p = {coord(rng), coord(rng), 2.0, yaw(rng)};
    return out;
}

const FovParams kFov{60.0, 40.0};

// Arg: grid side in cells (cell size 0.25 m).
template<std::size_t (*Kernel)(CoverageGrid&, const Pose&, const FovParams&)>
void single_pose(benchmark::State& state)
{
    const double side = static_cast<double>(state.range(0)) * 0.25;
    auto grid = grid_of(side, 0.25);
    const Pose pose{side / 2, side / 2, 2.0, 30.0};
    for (auto _: state)
        benchmark::DoNotOptimize(Kernel(grid, pose, kFov));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.counts.size()));
}

template<void (*Kernel)(CoverageGrid&, std::span<const Pose>, const FovParams&)>
void trajectory(benchmark::State& state)
{
    const double side = 100.0;
    auto grid = grid_of(side, 0.25);
    const auto path = poses(static_cast<std::size_t>(state.range(0)), side);
    for (auto _: state)
    {
        Kernel(grid, path, kFov);
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(single_pose<update_coverage_serial>)->Name("update/serial")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(single_pose<update_coverage_omp>)->Name("update/omp")->RangeMultiplier(4)->Range(64, 4096)->UseRealTime();
BENCHMARK(trajectory<accumulate_coverage_serial>)->Name("trajectory/serial")->Arg(16)->Arg(256);
BENCHMARK(trajectory<accumulate_coverage_omp>)->Name("trajectory/omp")->Arg(16)->Arg(256)->UseRealTime();
