// SPDX-License-Identifier: Apache-2.0
#include "mlpcm/backbone.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace mlpcm {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::vector<float> xavier(std::int64_t in, std::int64_t out, Rng& rng) {
    float a = std::sqrt(6.f / static_cast<float>(in + out));
    std::vector<float> w(static_cast<size_t>(in * out));
    for (auto& v : w) v = static_cast<float>(rng.uniform(-a, a));
    return w;
}

}  // namespace

std::vector<float> sinusoidal_embedding(double value, int dim, double max_period) {
    if (dim <= 0 || dim % 2 != 0)
        throw ContractError("sinusoidal_embedding: dim must be positive and even, got " +
                            std::to_string(dim));
    const int half = dim / 2;
    std::vector<float> e(static_cast<size_t>(dim));
    for (int i = 0; i < half; ++i) {
        double freq = std::pow(max_period, -static_cast<double>(i) / static_cast<double>(half));
        e[static_cast<size_t>(2 * i)] = static_cast<float>(std::sin(value * freq));
        e[static_cast<size_t>(2 * i + 1)] = static_cast<float>(std::cos(value * freq));
    }
    return e;
}

Tensor sinusoidal_rows(double value, int dim, std::int64_t rows, double max_period) {
    auto e = sinusoidal_embedding(value, dim, max_period);
    std::vector<float> data(static_cast<size_t>(rows * dim));
    for (std::int64_t r = 0; r < rows; ++r)
        std::copy(e.begin(), e.end(), data.begin() + r * dim);
    return Tensor::from({static_cast<int>(rows), dim}, std::move(data));
}

// ---- LinearLayer ---------------------------------------------------------

LinearLayer::LinearLayer(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                         InitMode mode, float bias_init) {
    std::vector<float> wdata = mode == InitMode::Xavier
                                   ? xavier(in, out, rng)
                                   : std::vector<float>(static_cast<size_t>(in) * out, 0.f);
    w = store.add(prefix + ".w", Tensor::from({in, out}, std::move(wdata)));
    b = store.add(prefix + ".b", Tensor::full({out}, bias_init));
}

Tensor LinearLayer::forward(const Tensor& x) const { return add_bcast_row(matmul(x, w), b); }

// ---- Mlp2 -----------------------------------------------------------------

Mlp2::Mlp2(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng, InitMode last)
    : l1(store, prefix + ".0", in, out, rng, InitMode::Xavier),
      l2(store, prefix + ".1", out, out, rng, last) {}

Tensor Mlp2::forward(const Tensor& x) const { return l2.forward(relu(l1.forward(x))); }

// ---- SpatialAttention ------------------------------------------------------

SpatialAttention::SpatialAttention(ParamStore& store, const std::string& prefix, int ch, Rng& rng)
    : q(store, prefix + ".q", ch, ch, rng),
      k(store, prefix + ".k", ch, ch, rng),
      v(store, prefix + ".v", ch, ch, rng),
      o(store, prefix + ".o", ch, ch, rng, InitMode::Zero),
      channels(ch) {
    lambda_raw = store.add(prefix + ".lambda", Tensor::scalar(1.f));
}

Tensor SpatialAttention::forward(const Tensor& features, std::span<const float> positions) const {
    const std::int64_t n = features.dim(0);
    Tensor Q = q.forward(features);
    Tensor K = k.forward(features);
    Tensor V = v.forward(features);

    auto dist = pairwise_distances(positions, n, positions, n);
    for (auto& d : dist) d = -d;
    Tensor neg_dist = Tensor::from({static_cast<int>(n), static_cast<int>(n)}, std::move(dist));
    Tensor bias = scale_by_scalar(neg_dist, mul(lambda_raw, lambda_raw));

    float inv_sqrt_d = 1.f / std::sqrt(static_cast<float>(channels));
    Tensor logits = add(scale(matmul(Q, transpose(K)), inv_sqrt_d), bias);
    Tensor attn = softmax_lastdim(logits);
    Tensor mixed = matmul(attn, V);
    return add(features, o.forward(mixed));
}

// ---- Conv3dLayer -----------------------------------------------------------

Conv3dLayer::Conv3dLayer(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                         InitMode mode)
    : in_ch(in), out_ch(out) {
    std::vector<float> wdata = mode == InitMode::Xavier
                                   ? xavier(27 * in, out, rng)
                                   : std::vector<float>(static_cast<size_t>(27 * in) * out, 0.f);
    w = store.add(prefix + ".w", Tensor::from({27 * in, out}, std::move(wdata)));
    b = store.add(prefix + ".b", Tensor::zeros({out}));
}

Tensor Conv3dLayer::forward(const Tensor& grid, int r) const {
    const std::int64_t cells = static_cast<std::int64_t>(r) * r * r;
    if (grid.dim(0) != cells || grid.dim(1) != in_ch)
        throw ShapeError("conv3d: grid " + shape_str(grid.shape()) + " does not match r=" +
                         std::to_string(r) + ", in=" + std::to_string(in_ch));
    const int ci = in_ch;
    // im2col: [cells x 27*ci], taps ordered (dx, dy, dz) row-major
    auto col = std::make_shared<std::vector<float>>(static_cast<size_t>(cells * 27 * ci), 0.f);
    const float* gdata = grid.data().data();
    for (int x = 0; x < r; ++x)
        for (int y = 0; y < r; ++y)
            for (int z = 0; z < r; ++z) {
                std::int64_t cell = (static_cast<std::int64_t>(x) * r + y) * r + z;
                float* row = col->data() + cell * 27 * ci;
                int tap = 0;
                for (int dx = -1; dx <= 1; ++dx)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dz = -1; dz <= 1; ++dz, ++tap) {
                            int nx = x + dx, ny = y + dy, nz = z + dz;
                            if (nx < 0 || nx >= r || ny < 0 || ny >= r || nz < 0 || nz >= r)
                                continue;  // zero padding
                            std::int64_t nb = (static_cast<std::int64_t>(nx) * r + ny) * r + nz;
                            std::copy_n(gdata + nb * ci, ci, row + tap * ci);
                        }
            }

    std::vector<float> out(static_cast<size_t>(cells * out_ch));
    {
        CMapMat C(col->data(), cells, 27 * ci), W(w.data().data(), 27 * ci, out_ch);
        MapMat O(out.data(), cells, out_ch);
        O.noalias() = C * W;
        for (std::int64_t cell = 0; cell < cells; ++cell)
            for (int c = 0; c < out_ch; ++c) out[static_cast<size_t>(cell * out_ch + c)] += b.value(c);
    }

    auto gi = grid.impl();
    auto wi = w.impl();
    auto bi = b.impl();
    const int co = out_ch;
    return custom_op({static_cast<int>(cells), co}, std::move(out), {gi, wi, bi},
                     [gi, wi, bi, col, cells, ci, co, r](const TensorImpl& o) {
        const float* g = detail::sweep_grad_of(o);
        if (float* dw = detail::sweep_grad_buf(wi)) {
            CMapMat C(col->data(), cells, 27 * ci), G(g, cells, co);
            MapMat dW(dw, 27 * ci, co);
            dW.noalias() += C.transpose() * G;
        }
        if (float* db = detail::sweep_grad_buf(bi)) {
            for (std::int64_t cell = 0; cell < cells; ++cell)
                for (int c = 0; c < co; ++c) db[c] += g[cell * co + c];
        }
        if (float* dg = detail::sweep_grad_buf(gi)) {
            // dcol = G * W^T, then col2im scatter
            std::vector<float> dcol(static_cast<size_t>(cells * 27 * ci));
            CMapMat G(g, cells, co), W(wi->data.data(), 27 * ci, co);
            MapMat D(dcol.data(), cells, 27 * ci);
            D.noalias() = G * W.transpose();
            for (int x = 0; x < r; ++x)
                for (int y = 0; y < r; ++y)
                    for (int z = 0; z < r; ++z) {
                        std::int64_t cell = (static_cast<std::int64_t>(x) * r + y) * r + z;
                        const float* row = dcol.data() + cell * 27 * ci;
                        int tap = 0;
                        for (int dx = -1; dx <= 1; ++dx)
                            for (int dy = -1; dy <= 1; ++dy)
                                for (int dz = -1; dz <= 1; ++dz, ++tap) {
                                    int nx = x + dx, ny = y + dy, nz = z + dz;
                                    if (nx < 0 || nx >= r || ny < 0 || ny >= r || nz < 0 || nz >= r) continue;
                                    std::int64_t nb = (static_cast<std::int64_t>(nx) * r + ny) * r + nz;
                                    for (int c = 0; c < ci; ++c) dg[nb * ci + c] += row[tap * ci + c];
                                }
                    }
        }
    });
}

// ---- PvcBlock ---------------------------------------------------------------

PvcBlock::PvcBlock(ParamStore& store, const std::string& prefix, int in, int out, int r, Rng& rng,
                   bool with_attention)
    : point_mlp(store, prefix + ".point", in, out, rng),
      conv1(store, prefix + ".conv1", in, out, rng),
      conv2(store, prefix + ".conv2", out, out, rng),
      voxel_mlp(store, prefix + ".voxel", out, out, rng),
      resolution(r),
      use_attention(with_attention) {
    if (with_attention) attn = SpatialAttention(store, prefix + ".attn", out, rng);
}

Tensor PvcBlock::forward(std::span<const float> positions, const Tensor& features) const {
    const std::int64_t n = features.dim(0);
    Tensor f_point = point_mlp.forward(features);

    // voxel branch: mean-scatter into the grid, two convs with ReLU,
    // trilinear gather back to the points, then MLP
    const int r = resolution;
    const std::int64_t cells = static_cast<std::int64_t>(r) * r * r;
    BBox box = bounding_box(positions, n);
    auto cell_of = voxel_cell_indices(positions, n, r, box);
    std::vector<float> inv_count(static_cast<size_t>(cells), 0.f);
    for (std::int64_t i = 0; i < n; ++i) inv_count[static_cast<size_t>(cell_of[static_cast<size_t>(i)])] += 1.f;
    for (auto& c : inv_count) c = c > 0.f ? 1.f / c : 0.f;

    Tensor grid0 = Tensor::zeros({static_cast<int>(cells), features.dim(1)});
    Tensor grid_sum = scatter_add_rows(grid0, cell_of, features);
    Tensor grid_mean = scale_rows_const(grid_sum, inv_count);

    Tensor g1 = relu(conv1.forward(grid_mean, r));
    Tensor g2 = relu(conv2.forward(g1, r));

    auto tc = trilinear_coeffs(positions, n, r, box);
    Tensor devox;
    for (int corner = 0; corner < 8; ++corner) {
        std::vector<std::int64_t> ids(static_cast<size_t>(n));
        std::vector<float> ws(static_cast<size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            ids[static_cast<size_t>(i)] = tc.cell[static_cast<size_t>(i * 8 + corner)];
            ws[static_cast<size_t>(i)] = tc.weight[static_cast<size_t>(i * 8 + corner)];
        }
        Tensor term = scale_rows_const(gather_rows(g2, ids), ws);
        devox = corner == 0 ? term : add(devox, term);
    }
    Tensor f_voxel = voxel_mlp.forward(devox);

    Tensor fused = add(f_point, f_voxel);
    if (!use_attention) return fused;
    return attn.forward(fused, positions);
}

// ---- SetAbstraction ----------------------------------------------------------

SetAbstraction::SetAbstraction(ParamStore& store, const std::string& prefix, int in, int out,
                               std::int64_t m_, std::int64_t k_, int r, Rng& rng, bool with_attention)
    : pvc(store, prefix + ".pvc", in, out, r, rng, with_attention),
      group_mlp(store, prefix + ".group", 3 + out, out, rng),
      m(m_),
      k(k_) {}

SaOutput SetAbstraction::forward(std::span<const float> positions, const Tensor& features,
                                 std::int64_t fps_start) const {
    const std::int64_t n = features.dim(0);
    if (m > n)
        throw ContractError("set_abstraction: m=" + std::to_string(m) + " exceeds input points " +
                            std::to_string(n));
    Tensor f1 = pvc.forward(positions, features);

    SaOutput out;
    out.indices = farthest_point_sampling(positions, n, m, fps_start);
    out.positions.resize(static_cast<size_t>(m) * 3);
    for (std::int64_t i = 0; i < m; ++i)
        std::copy_n(positions.data() + 3 * out.indices[static_cast<size_t>(i)], 3,
                    out.positions.data() + 3 * i);

    auto nbr = knn_group(out.positions, m, positions, n, k);

    // grouped rows: (relative position || neighbor feature)
    std::vector<float> rel(static_cast<size_t>(m * k) * 3);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < k; ++j) {
            const float* c = out.positions.data() + 3 * i;
            const float* p = positions.data() + 3 * nbr[static_cast<size_t>(i * k + j)];
            float* dst = rel.data() + (i * k + j) * 3;
            dst[0] = p[0] - c[0];
            dst[1] = p[1] - c[1];
            dst[2] = p[2] - c[2];
        }
    Tensor rel_t = Tensor::from({static_cast<int>(m * k), 3}, std::move(rel));
    Tensor grouped_feat = gather_rows(f1, nbr);
    Tensor grouped = concat_lastdim({rel_t, grouped_feat});
    Tensor encoded = group_mlp.forward(grouped);
    out.features = group_max_rows(encoded, static_cast<int>(k));
    return out;
}

// ---- FeaturePropagation --------------------------------------------------------

FeaturePropagation::FeaturePropagation(ParamStore& store, const std::string& prefix, int coarse_ch,
                                       int skip_ch, int out, Rng& rng)
    : mlp(store, prefix + ".mlp", coarse_ch + skip_ch, out, rng) {}

Tensor FeaturePropagation::forward(std::span<const float> coarse_pos, const Tensor& coarse_feat,
                                   std::span<const float> fine_pos, const Tensor& skip_feat) const {
    const std::int64_t m = coarse_feat.dim(0);
    const std::int64_t n = skip_feat.dim(0);
    const std::int64_t kk = std::min<std::int64_t>(k, m);
    auto ic = interpolation_coeffs(coarse_pos, m, fine_pos, n, kk);

    Tensor interp;
    for (std::int64_t j = 0; j < kk; ++j) {
        std::vector<std::int64_t> ids(static_cast<size_t>(n));
        std::vector<float> ws(static_cast<size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            ids[static_cast<size_t>(i)] = ic.index[static_cast<size_t>(i * kk + j)];
            ws[static_cast<size_t>(i)] = ic.weight[static_cast<size_t>(i * kk + j)];
        }
        Tensor term = scale_rows_const(gather_rows(coarse_feat, ids), ws);
        interp = j == 0 ? term : add(interp, term);
    }
    return mlp.forward(concat_lastdim({interp, skip_feat}));
}

// ---- MliModule ------------------------------------------------------------------

MliModule::MliModule(ParamStore& store, const std::string& prefix, int feat_ch_,
                     const std::vector<int>& super_chs, int cond_width, int out_ch_, int time_dim_,
                     Rng& rng)
    : feat_ch(feat_ch_), out_ch(out_ch_), time_dim(time_dim_), conditioned(!super_chs.empty()) {
    if (conditioned) {
        for (size_t l = 0; l < super_chs.size(); ++l)
            level_proj.emplace_back(store, prefix + ".level" + std::to_string(l + 1), super_chs[l],
                                    cond_width, rng);
        int c_width = cond_width * static_cast<int>(super_chs.size());
        // identity modulation at init: scale == 1, shift == 0
        scale_proj = LinearLayer(store, prefix + ".scale", c_width, feat_ch, rng, InitMode::Zero, 1.f);
        shift_proj = LinearLayer(store, prefix + ".shift", c_width, feat_ch, rng, InitMode::Zero, 0.f);
    } else {
        scale_bias = store.add(prefix + ".scale_bias", Tensor::full({feat_ch}, 1.f));
        shift_bias = store.add(prefix + ".shift_bias", Tensor::zeros({feat_ch}));
    }
    mlp = Mlp2(store, prefix + ".mlp", feat_ch, out_ch, rng);
}

Tensor MliModule::forward(const Tensor& features, const std::vector<SuperLatent>& supers, double t,
                          double stage) const {
    const std::int64_t n = features.dim(0);
    Tensor gain = Tensor::full({feat_ch}, 1.f);
    Tensor bias = Tensor::zeros({feat_ch});
    Tensor normed = layer_norm(features, gain, bias);

    Tensor modulated;
    if (conditioned) {
        if (supers.size() != level_proj.size())
            throw ShapeError("mli: got " + std::to_string(supers.size()) + " super levels, expected " +
                             std::to_string(level_proj.size()));
        std::vector<Tensor> parts;
        for (size_t l = 0; l < supers.size(); ++l)
            parts.push_back(level_proj[l].forward(mean_over_axis(supers[l].z, 0)));
        Tensor c = parts.size() == 1 ? parts[0] : concat_lastdim(parts);
        Tensor scale_row = scale_proj.forward(c);  // 1 x feat_ch
        Tensor shift_row = shift_proj.forward(c);
        modulated = add_bcast_row(mul_bcast_row(normed, scale_row), shift_row);
    } else {
        modulated = add_bcast_row(mul_bcast_row(normed, scale_bias), shift_bias);
    }
    Tensor core = mlp.forward(relu(modulated));
    Tensor pe_t = sinusoidal_rows(t, time_dim, n);
    Tensor pe_s = sinusoidal_rows(stage, time_dim, n);
    return concat_lastdim({core, pe_t, pe_s});
}

}  // namespace mlpcm
