// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlpcm/geometry.hpp"
#include "mlpcm/rng.hpp"

namespace mlpcm {

enum class ShapeKind { Sphere, Torus, Box, TwoSpheres };

ShapeKind shape_kind_from_string(const std::string& s);
std::string to_string(ShapeKind k);

struct ShapeSpec {
    ShapeKind kind = ShapeKind::Sphere;
    std::int64_t n_points = 256;
    float jitter = 0.f;
    std::uint64_t seed = 0;
    // torus radii; ignored for other kinds
    float torus_major = 0.7f;
    float torus_minor = 0.25f;
};

// Uniform surface sampling of the parametric shape plus isotropic Gaussian
// jitter. Deterministic per seed.
PointCloud synth_shape(const ShapeSpec& spec);

struct Dataset {
    std::vector<PointCloud> train;
    std::vector<PointCloud> val;
    GlobalStats stats;  // computed on train only
};

// Deterministic generation + split. `counts` are {train, val}; shapes cycle
// through `kinds` round-robin. Clouds are returned un-normalized; `stats`
// holds the Global parameters of the training half.
Dataset dataset_split(const std::vector<ShapeKind>& kinds, std::int64_t train_count,
                      std::int64_t val_count, std::int64_t n_points, float jitter,
                      std::uint64_t seed);

GlobalStats compute_global_stats(const std::vector<PointCloud>& clouds);

}  // namespace mlpcm
