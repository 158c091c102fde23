// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlpcm/geometry.hpp"
#include "mlpcm/params.hpp"
#include "mlpcm/rng.hpp"
#include "mlpcm/tensor.hpp"

namespace mlpcm {

// Interleaved sin/cos at geometrically spaced frequencies.
std::vector<float> sinusoidal_embedding(double value, int dim, double max_period = 10000.0);
// The embedding broadcast to `rows` identical rows, as a constant tensor.
Tensor sinusoidal_rows(double value, int dim, std::int64_t rows, double max_period = 10000.0);

enum class InitMode { Xavier, Zero };

struct LinearLayer {
    Tensor w, b;  // w is [in x out]
    LinearLayer() = default;
    LinearLayer(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                InitMode mode = InitMode::Xavier, float bias_init = 0.f);
    Tensor forward(const Tensor& x) const;
};

// Two-layer perceptron with ReLU, hidden width = output width.
struct Mlp2 {
    LinearLayer l1, l2;
    Mlp2() = default;
    Mlp2(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
         InitMode last = InitMode::Xavier);
    Tensor forward(const Tensor& x) const;
};

// Single-head attention with a learnable distance-decay bias
// B_ij = -lambda * d_ij (lambda = raw^2, so it stays nonnegative).
struct SpatialAttention {
    LinearLayer q, k, v, o;
    Tensor lambda_raw;
    int channels = 0;
    SpatialAttention() = default;
    SpatialAttention(ParamStore& store, const std::string& prefix, int channels, Rng& rng);
    // positions: n x 3 raw coordinates (constants)
    Tensor forward(const Tensor& features, std::span<const float> positions) const;
};

// Dense 3x3x3 convolution over an r^3 grid stored as [cells x C].
struct Conv3dLayer {
    Tensor w;  // [27*in x out]
    Tensor b;
    int in_ch = 0, out_ch = 0;
    Conv3dLayer() = default;
    Conv3dLayer(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                InitMode mode = InitMode::Xavier);
    Tensor forward(const Tensor& grid, int r) const;
};

// Point-voxel convolution: per-point MLP branch + voxel 3D-conv branch fused
// by addition, then spatial attention on the fused feature.
struct PvcBlock {
    Mlp2 point_mlp;
    Conv3dLayer conv1, conv2;
    Mlp2 voxel_mlp;
    SpatialAttention attn;
    int resolution = 0;
    bool use_attention = true;

    PvcBlock() = default;
    PvcBlock(ParamStore& store, const std::string& prefix, int in, int out, int r, Rng& rng,
             bool with_attention = true);
    Tensor forward(std::span<const float> positions, const Tensor& features) const;
};

struct SaOutput {
    std::vector<float> positions;        // m x 3 centers
    Tensor features;                     // m x out
    std::vector<std::int64_t> indices;   // FPS selection
};

// Set Abstraction: PVC, then FPS centers, KNN groups, shared MLP over
// (relative position || neighbor feature), max-pooled per group.
struct SetAbstraction {
    PvcBlock pvc;
    Mlp2 group_mlp;
    std::int64_t m = 0, k = 0;

    SetAbstraction() = default;
    SetAbstraction(ParamStore& store, const std::string& prefix, int in, int out, std::int64_t m,
                   std::int64_t k, int r, Rng& rng, bool with_attention = true);
    SaOutput forward(std::span<const float> positions, const Tensor& features,
                     std::int64_t fps_start = 0) const;
};

// Feature Propagation: inverse-distance interpolation (k=3) to the fine
// resolution, concat with the skip features, shared MLP.
struct FeaturePropagation {
    Mlp2 mlp;
    std::int64_t k = 3;

    FeaturePropagation() = default;
    FeaturePropagation(ParamStore& store, const std::string& prefix, int coarse_ch, int skip_ch,
                       int out, Rng& rng);
    Tensor forward(std::span<const float> coarse_pos, const Tensor& coarse_feat,
                   std::span<const float> fine_pos, const Tensor& skip_feat) const;
};

// A super-point latent level: anchor positions plus the latent tensor.
struct SuperLatent {
    std::vector<float> positions;  // n_l x 3
    Tensor z;                      // n_l x C_l
};

// Multi-scale latent integration: scale/shift modulation of the normalized
// feature from pooled super latents, then MLP, then concatenation of the
// diffusion-step and stage positional embeddings.
struct MliModule {
    std::vector<LinearLayer> level_proj;  // one per super level
    LinearLayer scale_proj, shift_proj;   // used when conditioning is present
    Tensor scale_bias, shift_bias;        // used when there are no super levels
    Mlp2 mlp;
    int feat_ch = 0, out_ch = 0, time_dim = 0;
    bool conditioned = false;

    MliModule() = default;
    MliModule(ParamStore& store, const std::string& prefix, int feat_ch,
              const std::vector<int>& super_chs, int cond_width, int out_ch, int time_dim, Rng& rng);
    // output width = out_ch + 2*time_dim
    Tensor forward(const Tensor& features, const std::vector<SuperLatent>& supers, double t,
                   double stage) const;
    int output_width() const { return out_ch + 2 * time_dim; }
};

}  // namespace mlpcm
