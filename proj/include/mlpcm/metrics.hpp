// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlpcm/geometry.hpp"

namespace mlpcm {

enum class CloudMetric { CD, EMD };

// (1/N) sum_x min_y ||x-y||^2 + (1/M) sum_y min_x ||x-y||^2
// (squared-distance convention).
double chamfer_distance(const PointCloud& x, const PointCloud& y);

// (1/N) min over bijections of sum ||x - pi(x)|| (unsquared), solved exactly
// with the Hungarian algorithm. Clouds of unequal size are resampled to the
// smaller count by deterministic prefix truncation.
double earth_mover_distance(const PointCloud& x, const PointCloud& y, std::int64_t max_points = 512);

// Exact solver for a square assignment problem; returns the column assigned
// to each row.
std::vector<std::int64_t> hungarian_assignment(const std::vector<double>& cost, std::int64_t n);

// Leave-one-out 1-nearest-neighbor two-sample accuracy (percent); 50 is
// ideal. Distance ties prefer the other set.
double one_nna(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
               CloudMetric metric, int threads = 1);

struct EvalReport {
    double one_nna_cd = 0.0;
    double one_nna_emd = 0.0;
    double mean_cd = 0.0;   // mean over generated clouds of min CD to the reference set
    double mean_emd = 0.0;  // same with EMD
    std::int64_t n_gen = 0;
    std::int64_t n_ref = 0;
    std::int64_t nfe = 0;
    double wall_ms_per_sample = 0.0;
};

EvalReport evaluate_sets(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref,
                         std::int64_t emd_max_points = 512, int threads = 1);

// "metric,value" rows
std::string report_to_csv(const EvalReport& r);
// flat "key = value" lines
std::string report_to_kv(const EvalReport& r);
void write_report(const std::string& path_base, const EvalReport& r);

}  // namespace mlpcm
