// SPDX-License-Identifier: Apache-2.0
#include <leo/coverage.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace leo::sim
{

namespace
{

struct CellWindow
{
    std::size_t col_lo = 0, col_hi = 0; // inclusive
    std::size_t row_lo = 0, row_hi = 0;
    bool empty = true;
};

// Conservative window of cells whose centres may lie within the sensor range.
CellWindow range_window(const CoverageGrid& grid, const Pose& pose, const FovParams& fov)
{
    CellWindow w;
    if (grid.cols == 0 || grid.rows == 0)
        return w;
    const double reach = fov.range + kBoundaryEpsilon;
    auto lo = [&](double p, double min) { return std::floor((p - reach - min) / grid.cell_size - 0.5); };
    auto hi = [&](double p, double min) { return std::ceil((p + reach - min) / grid.cell_size - 0.5); };

    const double c0 = std::max(0.0, lo(pose.x, grid.bounds.min.x));
    const double c1 = std::min(static_cast<double>(grid.cols) - 1.0, hi(pose.x, grid.bounds.min.x));
    const double r0 = std::max(0.0, lo(pose.y, grid.bounds.min.y));
    const double r1 = std::min(static_cast<double>(grid.rows) - 1.0, hi(pose.y, grid.bounds.min.y));
    if (c0 > c1 || r0 > r1)
        return w;
    w = {static_cast<std::size_t>(c0), static_cast<std::size_t>(c1), static_cast<std::size_t>(r0),
         static_cast<std::size_t>(r1), false};
    return w;
}

} // namespace

CoverageGrid CoverageGrid::for_bounds(const Bounds& bounds, double cell_size)
{
    if (!(cell_size > 0.0))
        throw std::invalid_argument("coverage cell size must be positive");
    CoverageGrid grid;
    grid.bounds = bounds;
    grid.cell_size = cell_size;
    grid.cols = static_cast<std::size_t>(std::ceil((bounds.max.x - bounds.min.x) / cell_size - 1e-9));
    grid.rows = static_cast<std::size_t>(std::ceil((bounds.max.y - bounds.min.y) / cell_size - 1e-9));
    grid.counts.assign(grid.cols * grid.rows, 0);
    return grid;
}

double CoverageGrid::center_x(std::size_t col) const noexcept
{
    return bounds.min.x + (static_cast<double>(col) + 0.5) * cell_size;
}

double CoverageGrid::center_y(std::size_t row) const noexcept
{
    return bounds.min.y + (static_cast<double>(row) + 0.5) * cell_size;
}

std::uint32_t CoverageGrid::at(std::size_t col, std::size_t row) const noexcept
{
    return counts[row * cols + col];
}

std::uint64_t CoverageGrid::total() const noexcept
{
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::size_t update_coverage_serial(CoverageGrid& grid, const Pose& pose, const FovParams& fov)
{
    std::size_t touched = 0;
    for (std::size_t row = 0; row < grid.rows; ++row)
    {
        for (std::size_t col = 0; col < grid.cols; ++col)
        {
            if (visible_from(pose, fov, grid.center_x(col), grid.center_y(row)))
            {
                ++grid.counts[row * grid.cols + col];
                ++touched;
            }
        }
    }
    return touched;
}

std::size_t update_coverage_omp(CoverageGrid& grid, const Pose& pose, const FovParams& fov)
{
    const auto window = range_window(grid, pose, fov);
    if (window.empty)
        return 0;

    const auto row_lo = static_cast<std::ptrdiff_t>(window.row_lo);
    const auto row_hi = static_cast<std::ptrdiff_t>(window.row_hi);
    std::size_t touched = 0;
#pragma omp parallel for reduction(+ : touched) schedule(static)
    for (std::ptrdiff_t row = row_lo; row <= row_hi; ++row)
    {
        const auto r = static_cast<std::size_t>(row);
        const double cy = grid.center_y(r);
        for (std::size_t col = window.col_lo; col <= window.col_hi; ++col)
        {
            if (visible_from(pose, fov, grid.center_x(col), cy))
            {
                ++grid.counts[r * grid.cols + col];
                ++touched;
            }
        }
    }
    return touched;
}

std::size_t update_coverage(CoverageGrid& grid, const Pose& pose, const FovParams& fov)
{
    return update_coverage_omp(grid, pose, fov);
}

void accumulate_coverage_serial(CoverageGrid& grid, std::span<const Pose> poses, const FovParams& fov)
{
    for (const auto& pose: poses)
        update_coverage_serial(grid, pose, fov);
}

void accumulate_coverage_omp(CoverageGrid& grid, std::span<const Pose> poses, const FovParams& fov)
{
    // Cells are independent, so each thread owns a band of rows and sweeps every pose over it.
    const auto rows = static_cast<std::ptrdiff_t>(grid.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t row = 0; row < rows; ++row)
    {
        const auto r = static_cast<std::size_t>(row);
        const double cy = grid.center_y(r);
        for (std::size_t col = 0; col < grid.cols; ++col)
        {
            const double cx = grid.center_x(col);
            std::uint32_t hits = 0;
            for (const auto& pose: poses)
                hits += visible_from(pose, fov, cx, cy) ? 1U : 0U;
            grid.counts[r * grid.cols + col] += hits;
        }
    }
}

} // namespace leo::sim
