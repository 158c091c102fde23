// SPDX-License-Identifier: Apache-2.0
#include "mlpcm/datasets.hpp"

#include <cmath>

namespace mlpcm {

ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "sphere") return ShapeKind::Sphere;
    if (s == "torus") return ShapeKind::Torus;
    if (s == "box") return ShapeKind::Box;
    if (s == "two_spheres") return ShapeKind::TwoSpheres;
    throw ContractError("unknown shape kind: " + s);
}

std::string to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Torus: return "torus";
        case ShapeKind::Box: return "box";
        case ShapeKind::TwoSpheres: return "two_spheres";
    }
    return "?";
}

namespace {

void sample_sphere(Rng& rng, float radius, const float* center, float* out) {
    // normalized Gaussian triple is uniform on the sphere
    float x, y, z, n2;
    do {
        x = rng.normal();
        y = rng.normal();
        z = rng.normal();
        n2 = x * x + y * y + z * z;
    } while (n2 < 1e-12f);
    float inv = radius / std::sqrt(n2);
    out[0] = center[0] + x * inv;
    out[1] = center[1] + y * inv;
    out[2] = center[2] + z * inv;
}

void sample_torus(Rng& rng, float R, float r, float* out) {
    // area-weighted: accept v with probability prop. to R + r cos v
    for (;;) {
        float u = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
        float v = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
        float w = static_cast<float>(rng.uniform());
        if (w * (R + r) <= R + r * std::cos(v)) {
            out[0] = (R + r * std::cos(v)) * std::cos(u);
            out[1] = (R + r * std::cos(v)) * std::sin(u);
            out[2] = r * std::sin(v);
            return;
        }
    }
}

void sample_box(Rng& rng, float* out) {
    // faces of [-1,1]^3 have equal area; pick one of 6 uniformly
    auto face = static_cast<int>(rng.uniform_int(6));
    int axis = face / 2;
    float sign = (face % 2 == 0) ? -1.f : 1.f;
    float a = static_cast<float>(rng.uniform(-1.0, 1.0));
    float b = static_cast<float>(rng.uniform(-1.0, 1.0));
    out[axis] = sign;
    out[(axis + 1) % 3] = a;
    out[(axis + 2) % 3] = b;
}

}  // namespace

PointCloud synth_shape(const ShapeSpec& spec) {
    if (spec.n_points < 8) throw ContractError("synth_shape: n_points must be >= 8");
    if (spec.jitter < 0.f) throw ContractError("synth_shape: jitter must be >= 0");
    Rng rng(spec.seed);
    PointCloud cloud;
    cloud.points.resize(static_cast<size_t>(spec.n_points) * 3);
    const float neg_c[3] = {-0.75f, 0.f, 0.f};
    const float pos_c[3] = {0.75f, 0.f, 0.f};
    const float origin[3] = {0.f, 0.f, 0.f};
    for (std::int64_t i = 0; i < spec.n_points; ++i) {
        float* p = cloud.point(i);
        switch (spec.kind) {
            case ShapeKind::Sphere:
                sample_sphere(rng, 1.f, origin, p);
                break;
            case ShapeKind::Torus:
                sample_torus(rng, spec.torus_major, spec.torus_minor, p);
                break;
            case ShapeKind::Box:
                sample_box(rng, p);
                break;
            case ShapeKind::TwoSpheres:
                sample_sphere(rng, 0.5f, (i % 2 == 0) ? neg_c : pos_c, p);
                break;
        }
    }
    if (spec.jitter > 0.f)
        for (auto& v : cloud.points) v += spec.jitter * rng.normal();
    return cloud;
}

GlobalStats compute_global_stats(const std::vector<PointCloud>& clouds) {
    GlobalStats st;
    double mean[3] = {0, 0, 0};
    std::int64_t total = 0;
    for (const auto& c : clouds) {
        for (std::int64_t i = 0; i < c.size(); ++i)
            for (int a = 0; a < 3; ++a) mean[a] += c.point(i)[a];
        total += c.size();
    }
    if (total == 0) throw ContractError("compute_global_stats: empty dataset");
    for (int a = 0; a < 3; ++a) {
        mean[a] /= static_cast<double>(total);
        st.mean[a] = static_cast<float>(mean[a]);
    }
    // single std pooled over all axes
    double var = 0;
    for (const auto& c : clouds)
        for (std::int64_t i = 0; i < c.size(); ++i)
            for (int a = 0; a < 3; ++a) {
                double d = c.point(i)[a] - mean[a];
                var += d * d;
            }
    var /= static_cast<double>(total * 3);
    st.std = static_cast<float>(std::sqrt(var));
    if (st.std == 0.f) throw DegenerateInputError("compute_global_stats: zero variance dataset");
    return st;
}

Dataset dataset_split(const std::vector<ShapeKind>& kinds, std::int64_t train_count,
                      std::int64_t val_count, std::int64_t n_points, float jitter,
                      std::uint64_t seed) {
    if (kinds.empty()) throw ContractError("dataset_split: need at least one shape kind");
    if (train_count < 1 || val_count < 1) throw ContractError("dataset_split: counts must be >= 1");
    Dataset ds;
    auto make = [&](std::int64_t index) {
        ShapeSpec spec;
        spec.kind = kinds[static_cast<size_t>(index % static_cast<std::int64_t>(kinds.size()))];
        spec.n_points = n_points;
        spec.jitter = jitter;
        spec.seed = Rng(seed).stream(static_cast<std::uint64_t>(index)).next_u64();
        return synth_shape(spec);
    };
    for (std::int64_t i = 0; i < train_count; ++i) ds.train.push_back(make(i));
    for (std::int64_t i = 0; i < val_count; ++i) ds.val.push_back(make(train_count + i));
    ds.stats = compute_global_stats(ds.train);
    return ds;
}

}  // namespace mlpcm
