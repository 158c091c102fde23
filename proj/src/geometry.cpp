// SPDX-License-Identifier: Apache-2.0
#include "mlpcm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mlpcm {

namespace {

inline float sq_dist3(const float* a, const float* b) {
    float dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

void check_finite(std::span<const float> pts, const char* what) {
    for (float v : pts)
        if (!std::isfinite(v)) throw ContractError(std::string(what) + ": non-finite coordinate");
}

}  // namespace

PointCloud normalize(const PointCloud& cloud, NormalizationMode mode,
                     const std::optional<GlobalStats>& stats) {
    const std::int64_t n = cloud.size();
    if (n < 1) throw ContractError("normalize: empty cloud");
    check_finite(cloud.points, "normalize");

    PointCloud out;
    out.points = cloud.points;
    out.normalization = mode;

    if (mode == NormalizationMode::None) return out;

    if (mode == NormalizationMode::Global) {
        if (!stats) throw ContractError("normalize: Global mode requires dataset statistics");
        if (stats->std == 0.f) throw DegenerateInputError("normalize: zero dataset std");
        for (std::int64_t i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a)
                out.point(i)[a] = (cloud.point(i)[a] - stats->mean[a]) / stats->std;
        return out;
    }

    // PerShape: subtract the per-axis centroid, divide by the largest
    // absolute deviation over all axes so every coordinate lands in [-1, 1].
    double mean[3] = {0, 0, 0};
    for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) mean[a] += cloud.point(i)[a];
    for (int a = 0; a < 3; ++a) mean[a] /= static_cast<double>(n);
    double scale = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a)
            scale = std::max(scale, std::abs(cloud.point(i)[a] - mean[a]));
    if (scale == 0.0) throw DegenerateInputError("normalize: zero extent (all points coincide)");
    for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a)
            out.point(i)[a] = static_cast<float>((cloud.point(i)[a] - mean[a]) / scale);
    return out;
}

std::vector<float> pairwise_distances(std::span<const float> a, std::int64_t m,
                                      std::span<const float> b, std::int64_t n) {
    std::vector<float> d(static_cast<size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i) {
        const float* pa = a.data() + 3 * i;
        for (std::int64_t j = 0; j < n; ++j)
            d[static_cast<size_t>(i * n + j)] = std::sqrt(sq_dist3(pa, b.data() + 3 * j));
    }
    return d;
}

std::vector<std::int64_t> farthest_point_sampling(std::span<const float> points, std::int64_t n,
                                                  std::int64_t m, std::int64_t start) {
    if (m < 1 || m > n) throw ContractError("farthest_point_sampling: need 1 <= M <= N, got M=" +
                                            std::to_string(m) + ", N=" + std::to_string(n));
    if (start < 0 || start >= n) throw ContractError("farthest_point_sampling: start out of range");
    std::vector<std::int64_t> selected;
    selected.reserve(static_cast<size_t>(m));
    selected.push_back(start);
    std::vector<char> taken(static_cast<size_t>(n), 0);
    taken[static_cast<size_t>(start)] = 1;
    std::vector<float> min_d(static_cast<size_t>(n), std::numeric_limits<float>::max());
    while (static_cast<std::int64_t>(selected.size()) < m) {
        const float* last = points.data() + 3 * selected.back();
        std::int64_t best = -1;
        float best_d = -1.f;
        for (std::int64_t i = 0; i < n; ++i) {
            float d = sq_dist3(points.data() + 3 * i, last);
            if (d < min_d[static_cast<size_t>(i)]) min_d[static_cast<size_t>(i)] = d;
            if (!taken[static_cast<size_t>(i)] && min_d[static_cast<size_t>(i)] > best_d) {
                // strict comparison keeps the lowest index on ties
                best_d = min_d[static_cast<size_t>(i)];
                best = i;
            }
        }
        taken[static_cast<size_t>(best)] = 1;
        selected.push_back(best);
    }
    return selected;
}

std::vector<std::int64_t> knn_group(std::span<const float> centers, std::int64_t m,
                                    std::span<const float> points, std::int64_t n, std::int64_t k) {
    if (k < 1 || k > n)
        throw ContractError("knn_group: need 1 <= K <= N, got K=" + std::to_string(k) +
                            ", N=" + std::to_string(n));
    std::vector<std::int64_t> out(static_cast<size_t>(m * k));
    std::vector<std::pair<float, std::int64_t>> cand(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < m; ++i) {
        const float* c = centers.data() + 3 * i;
        for (std::int64_t j = 0; j < n; ++j)
            cand[static_cast<size_t>(j)] = {sq_dist3(c, points.data() + 3 * j), j};
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (std::int64_t j = 0; j < k; ++j) out[static_cast<size_t>(i * k + j)] = cand[static_cast<size_t>(j)].second;
    }
    return out;
}

BBox bounding_box(std::span<const float> points, std::int64_t n) {
    BBox box;
    for (int a = 0; a < 3; ++a) {
        box.lo[a] = std::numeric_limits<float>::max();
        box.hi[a] = std::numeric_limits<float>::lowest();
    }
    for (std::int64_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
            box.lo[a] = std::min(box.lo[a], points[static_cast<size_t>(3 * i + a)]);
            box.hi[a] = std::max(box.hi[a], points[static_cast<size_t>(3 * i + a)]);
        }
    for (int a = 0; a < 3; ++a) box.hi[a] += 1e-6f;  // boundary points bin inside
    return box;
}

std::vector<std::int64_t> voxel_cell_indices(std::span<const float> points, std::int64_t n, int r,
                                             const BBox& box) {
    std::vector<std::int64_t> cell(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t id = 0;
        for (int a = 0; a < 3; ++a) {
            float w = box.hi[a] - box.lo[a];
            float u = (points[static_cast<size_t>(3 * i + a)] - box.lo[a]) / w;
            auto bin = static_cast<std::int64_t>(u * static_cast<float>(r));
            bin = std::clamp<std::int64_t>(bin, 0, r - 1);
            id = id * r + bin;
        }
        cell[static_cast<size_t>(i)] = id;
    }
    return cell;
}

VoxelGrid voxelize(std::span<const float> points, std::int64_t n, std::span<const float> features,
                   int channels, int r) {
    if (r < 1) throw ContractError("voxelize: resolution must be >= 1");
    if (static_cast<std::int64_t>(features.size()) != n * channels)
        throw ShapeError("voxelize: features size does not match N x C");
    VoxelGrid grid;
    grid.resolution = r;
    grid.channels = channels;
    grid.bbox = bounding_box(points, n);
    grid.features.assign(static_cast<size_t>(grid.cells() * channels), 0.f);
    grid.occupancy.assign(static_cast<size_t>(grid.cells()), 0);

    auto cell = voxel_cell_indices(points, n, r, grid.bbox);
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t id = cell[static_cast<size_t>(i)];
        grid.occupancy[static_cast<size_t>(id)] += 1;
        for (int c = 0; c < channels; ++c)
            grid.features[static_cast<size_t>(id * channels + c)] += features[static_cast<size_t>(i * channels + c)];
    }
    for (std::int64_t id = 0; id < grid.cells(); ++id) {
        std::int32_t cnt = grid.occupancy[static_cast<size_t>(id)];
        if (cnt > 1) {
            float inv = 1.f / static_cast<float>(cnt);
            for (int c = 0; c < channels; ++c) grid.features[static_cast<size_t>(id * channels + c)] *= inv;
        }
    }
    return grid;
}

TrilinearCoeffs trilinear_coeffs(std::span<const float> points, std::int64_t n, int r, const BBox& box) {
    TrilinearCoeffs tc;
    tc.cell.resize(static_cast<size_t>(n * 8));
    tc.weight.resize(static_cast<size_t>(n * 8));
    for (std::int64_t i = 0; i < n; ++i) {
        int lo_bin[3];
        float frac[3];
        for (int a = 0; a < 3; ++a) {
            float w = box.hi[a] - box.lo[a];
            float cellw = w / static_cast<float>(r);
            // continuous coordinate in units of cells, relative to cell centers
            float u = (points[static_cast<size_t>(3 * i + a)] - box.lo[a]) / cellw - 0.5f;
            u = std::clamp(u, 0.f, static_cast<float>(r - 1));
            auto b = static_cast<int>(std::floor(u));
            b = std::clamp(b, 0, r - 1);
            lo_bin[a] = b;
            frac[a] = u - static_cast<float>(b);
        }
        for (int corner = 0; corner < 8; ++corner) {
            float wgt = 1.f;
            std::int64_t id = 0;
            for (int a = 0; a < 3; ++a) {
                int hi = (corner >> (2 - a)) & 1;
                int b = std::min(lo_bin[a] + hi, r - 1);
                wgt *= hi ? frac[a] : (1.f - frac[a]);
                id = id * r + b;
            }
            tc.cell[static_cast<size_t>(i * 8 + corner)] = id;
            tc.weight[static_cast<size_t>(i * 8 + corner)] = wgt;
        }
    }
    return tc;
}

std::vector<float> devoxelize(const VoxelGrid& grid, std::span<const float> points, std::int64_t n) {
    auto tc = trilinear_coeffs(points, n, grid.resolution, grid.bbox);
    const int c = grid.channels;
    std::vector<float> out(static_cast<size_t>(n * c), 0.f);
    for (std::int64_t i = 0; i < n; ++i)
        for (int corner = 0; corner < 8; ++corner) {
            std::int64_t id = tc.cell[static_cast<size_t>(i * 8 + corner)];
            float w = tc.weight[static_cast<size_t>(i * 8 + corner)];
            if (w == 0.f) continue;
            for (int ch = 0; ch < c; ++ch)
                out[static_cast<size_t>(i * c + ch)] += w * grid.features[static_cast<size_t>(id * c + ch)];
        }
    return out;
}

InterpCoeffs interpolation_coeffs(std::span<const float> src_pos, std::int64_t m,
                                  std::span<const float> dst_pos, std::int64_t n, std::int64_t k) {
    if (k < 1 || k > m)
        throw ContractError("interpolation_coeffs: need 1 <= k <= M, got k=" + std::to_string(k) +
                            ", M=" + std::to_string(m));
    InterpCoeffs ic;
    ic.index = knn_group(dst_pos, n, src_pos, m, k);
    ic.weight.resize(static_cast<size_t>(n * k));
    for (std::int64_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            std::int64_t s = ic.index[static_cast<size_t>(i * k + j)];
            float d2 = sq_dist3(dst_pos.data() + 3 * i, src_pos.data() + 3 * s);
            float w = 1.f / (d2 + 1e-8f);
            ic.weight[static_cast<size_t>(i * k + j)] = w;
            total += w;
        }
        float inv = static_cast<float>(1.0 / total);
        for (std::int64_t j = 0; j < k; ++j) ic.weight[static_cast<size_t>(i * k + j)] *= inv;
    }
    return ic;
}

std::vector<float> inverse_distance_interpolate(std::span<const float> src_pos, std::int64_t m,
                                                std::span<const float> src_feat, int channels,
                                                std::span<const float> dst_pos, std::int64_t n,
                                                std::int64_t k) {
    auto ic = interpolation_coeffs(src_pos, m, dst_pos, n, k);
    std::vector<float> out(static_cast<size_t>(n * channels), 0.f);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < k; ++j) {
            std::int64_t s = ic.index[static_cast<size_t>(i * k + j)];
            float w = ic.weight[static_cast<size_t>(i * k + j)];
            for (int c = 0; c < channels; ++c)
                out[static_cast<size_t>(i * channels + c)] += w * src_feat[static_cast<size_t>(s * channels + c)];
        }
    return out;
}

}  // namespace mlpcm
