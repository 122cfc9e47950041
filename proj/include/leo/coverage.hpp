// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/simworld.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace leo::sim
{

/// Per-cell count of how many perception poses had the cell centre in view.
/// Cells are stored row-major: index = row * cols + col, row along y, col along x.
struct CoverageGrid
{
    Bounds bounds;
    double cell_size = 1.0;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::vector<std::uint32_t> counts;

    /// cols = ceil(extent_x / cell), rows = ceil(extent_y / cell).
    static CoverageGrid for_bounds(const Bounds& bounds, double cell_size);

    [[nodiscard]] double center_x(std::size_t col) const noexcept;
    [[nodiscard]] double center_y(std::size_t row) const noexcept;
    [[nodiscard]] std::uint32_t at(std::size_t col, std::size_t row) const noexcept;
    [[nodiscard]] std::uint64_t total() const noexcept;

    bool operator==(const CoverageGrid&) const = default;
};

// Kernels. The serial versions are the reference the OpenMP versions are tested against.

/// Increments every cell whose centre passes `visible_from(pose, fov, ...)`. Returns the number of cells touched.
std::size_t update_coverage_serial(CoverageGrid& grid, const Pose& pose, const FovParams& fov);
std::size_t update_coverage_omp(CoverageGrid& grid, const Pose& pose, const FovParams& fov);

/// Default entry point (OpenMP kernel).
std::size_t update_coverage(CoverageGrid& grid, const Pose& pose, const FovParams& fov);

/// Applies a sequence of perception poses.
void accumulate_coverage_serial(CoverageGrid& grid, std::span<const Pose> poses, const FovParams& fov);
void accumulate_coverage_omp(CoverageGrid& grid, std::span<const Pose> poses, const FovParams& fov);

} // namespace leo::sim
