// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mlpcm/error.hpp"

namespace mlpcm {

enum class NormalizationMode { None, Global, PerShape };

// Dataset-level statistics for Global normalization: per-axis mean, one
// shared standard deviation across all axes.
struct GlobalStats {
    std::array<float, 3> mean{0.f, 0.f, 0.f};
    float std = 1.f;
};

struct PointCloud {
    std::vector<float> points;  // N x 3, row-major
    NormalizationMode normalization = NormalizationMode::None;

    std::int64_t size() const { return static_cast<std::int64_t>(points.size() / 3); }
    const float* point(std::int64_t i) const { return points.data() + 3 * i; }
    float* point(std::int64_t i) { return points.data() + 3 * i; }
};

struct BBox {
    std::array<float, 3> lo{0.f, 0.f, 0.f};
    std::array<float, 3> hi{0.f, 0.f, 0.f};
};

struct VoxelGrid {
    int resolution = 0;
    int channels = 0;
    std::vector<float> features;     // r*r*r x C, zero where unoccupied
    std::vector<std::int32_t> occupancy;  // r*r*r point counts
    BBox bbox;

    std::int64_t cells() const {
        return static_cast<std::int64_t>(resolution) * resolution * resolution;
    }
};

PointCloud normalize(const PointCloud& cloud, NormalizationMode mode,
                     const std::optional<GlobalStats>& stats = std::nullopt);

// M x N Euclidean distances.
std::vector<float> pairwise_distances(std::span<const float> a, std::int64_t m,
                                      std::span<const float> b, std::int64_t n);

// Greedy max-min selection; ties broken by lowest index.
std::vector<std::int64_t> farthest_point_sampling(std::span<const float> points, std::int64_t n,
                                                  std::int64_t m, std::int64_t start = 0);

// Per center, indices of the K nearest points sorted by ascending distance,
// ties by lowest index. Row-major M x K.
std::vector<std::int64_t> knn_group(std::span<const float> centers, std::int64_t m,
                                    std::span<const float> points, std::int64_t n, std::int64_t k);

// Tight per-cloud box, max corner nudged outward so boundary points bin inside.
BBox bounding_box(std::span<const float> points, std::int64_t n);

// Flat cell id per point for an r^3 grid over the box.
std::vector<std::int64_t> voxel_cell_indices(std::span<const float> points, std::int64_t n, int r,
                                             const BBox& box);

VoxelGrid voxelize(std::span<const float> points, std::int64_t n, std::span<const float> features,
                   int channels, int r);

// Trilinear interpolation of cell-center features at the query points.
std::vector<float> devoxelize(const VoxelGrid& grid, std::span<const float> points, std::int64_t n);

// 8 corner cells + weights per query point, for differentiable devoxelization.
struct TrilinearCoeffs {
    std::vector<std::int64_t> cell;  // n x 8
    std::vector<float> weight;       // n x 8
};
TrilinearCoeffs trilinear_coeffs(std::span<const float> points, std::int64_t n, int r, const BBox& box);

// Per destination, the k nearest sources, weighted 1/(d^2 + 1e-8), normalized.
std::vector<float> inverse_distance_interpolate(std::span<const float> src_pos, std::int64_t m,
                                                std::span<const float> src_feat, int channels,
                                                std::span<const float> dst_pos, std::int64_t n,
                                                std::int64_t k);

// Neighbor indices + normalized weights, for the differentiable FP path.
struct InterpCoeffs {
    std::vector<std::int64_t> index;  // n x k
    std::vector<float> weight;        // n x k
};
InterpCoeffs interpolation_coeffs(std::span<const float> src_pos, std::int64_t m,
                                  std::span<const float> dst_pos, std::int64_t n, std::int64_t k);

}  // namespace mlpcm
