// SPDX-License-Identifier: Apache-2.0
#include "mlpcm/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace mlpcm {

namespace {

thread_local bool g_autograd_enabled = true;

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Per-sweep gradient buffers. Each backward() computes into fresh buffers,
// then adds them onto the persistent .grad, so repeated sweeps accumulate
// exactly one dL/dt each.
struct SweepCtx {
    std::unordered_map<const TensorImpl*, std::vector<float>> bufs;
    float* get(const TensorImpl* t) {
        auto& v = bufs[t];
        if (v.empty()) v.assign(t->data.size(), 0.f);
        return v.data();
    }
};
thread_local SweepCtx* g_sweep = nullptr;

const float* sweep_read(const TensorImpl& out) { return g_sweep->get(&out); }

// nullptr when the input does not participate in differentiation
float* sweep_buf(const TensorImplPtr& t) {
    return t->requires_grad ? g_sweep->get(t.get()) : nullptr;
}

TensorImplPtr make_impl(std::vector<int> shape, std::vector<float> data, bool rg) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = rg;
    return impl;
}

void check_positive_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (int d : shape)
        if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}

// rows x cols view of an arbitrary-rank tensor collapsed on the last axis
std::pair<std::int64_t, std::int64_t> rows_cols(const TensorImpl& t) {
    std::int64_t cols = t.shape.back();
    return {t.numel() / cols, cols};
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    if (!g_autograd_enabled) return false;
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

Tensor make_out(std::vector<int> shape, std::vector<float> data, bool rg,
                std::vector<TensorImplPtr> inputs,
                std::function<void(const TensorImpl&)> bw) {
    auto impl = make_impl(std::move(shape), std::move(data), rg);
    if (rg) {
        impl->node = std::make_shared<GraphNode>();
        impl->node->inputs = std::move(inputs);
        impl->node->backward = std::move(bw);
    }
    return Tensor(impl);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

NoGradGuard::NoGradGuard() : prev_(g_autograd_enabled) { g_autograd_enabled = false; }
NoGradGuard::~NoGradGuard() { g_autograd_enabled = prev_; }
bool autograd_enabled() { return g_autograd_enabled; }

Tensor Tensor::zeros(std::vector<int> shape, bool rg) {
    check_positive_shape(shape);
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return Tensor(make_impl(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.f), rg));
}

Tensor Tensor::full(std::vector<int> shape, float value, bool rg) {
    Tensor t = zeros(std::move(shape), rg);
    std::fill(t.impl()->data.begin(), t.impl()->data.end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> data, bool rg) {
    check_positive_shape(shape);
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    if (n != static_cast<std::int64_t>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    return Tensor(make_impl(std::move(shape), std::move(data), rg));
}

Tensor Tensor::scalar(float value, bool rg) { return from({1}, {value}, rg); }

float Tensor::at(int r, int c) const {
    std::int64_t cols = impl_->shape.back();
    return impl_->data[static_cast<size_t>(r * cols + c)];
}

Tensor Tensor::detach() const {
    return Tensor(make_impl(impl_->shape, impl_->data, false));
}

// ---- matmul ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<float> out(static_cast<size_t>(m) * n);
    {
        CMapMat A(a.data().data(), m, k), B(b.data().data(), k, n);
        MapMat C(out.data(), m, n);
        C.noalias() = A * B;
    }
    bool rg = any_requires_grad({&a, &b});
    auto ai = a.impl(), bi = b.impl();
    return make_out({m, n}, std::move(out), rg, {ai, bi}, [ai, bi, m, k, n](const TensorImpl& o) {
        CMapMat G(sweep_read(o), m, n);
        if (float* da = sweep_buf(ai)) {
            MapMat dA(da, m, k);
            CMapMat B(bi->data.data(), k, n);
            dA.noalias() += G * B.transpose();
        }
        if (float* db = sweep_buf(bi)) {
            MapMat dB(db, k, n);
            CMapMat A(ai->data.data(), m, k);
            dB.noalias() += A.transpose() * G;
        }
    });
}

Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("transpose expects rank-2, got " + shape_str(x.shape()));
    const int m = x.dim(0), n = x.dim(1);
    std::vector<float> out(static_cast<size_t>(m) * n);
    {
        CMapMat X(x.data().data(), m, n);
        MapMat O(out.data(), n, m);
        O = X.transpose();
    }
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out({n, m}, std::move(out), rg, {xi}, [xi, m, n](const TensorImpl& o) {
        if (float* dx = sweep_buf(xi)) {
            CMapMat G(sweep_read(o), n, m);
            MapMat dX(dx, m, n);
            dX += G.transpose();
        }
    });
}

// ---- elementwise -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const size_t n = static_cast<size_t>(a.numel());
    std::vector<float> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < n; ++i) out[i] += b.data()[i];
    bool rg = any_requires_grad({&a, &b});
    auto ai = a.impl(), bi = b.impl();
    return make_out(a.shape(), std::move(out), rg, {ai, bi}, [ai, bi, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* da = sweep_buf(ai))
            for (size_t i = 0; i < n; ++i) da[i] += g[i];
        if (float* db = sweep_buf(bi))
            for (size_t i = 0; i < n; ++i) db[i] += g[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const size_t n = static_cast<size_t>(a.numel());
    std::vector<float> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < n; ++i) out[i] -= b.data()[i];
    bool rg = any_requires_grad({&a, &b});
    auto ai = a.impl(), bi = b.impl();
    return make_out(a.shape(), std::move(out), rg, {ai, bi}, [ai, bi, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* da = sweep_buf(ai))
            for (size_t i = 0; i < n; ++i) da[i] += g[i];
        if (float* db = sweep_buf(bi))
            for (size_t i = 0; i < n; ++i) db[i] -= g[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const size_t n = static_cast<size_t>(a.numel());
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.data()[i] * b.data()[i];
    bool rg = any_requires_grad({&a, &b});
    auto ai = a.impl(), bi = b.impl();
    return make_out(a.shape(), std::move(out), rg, {ai, bi}, [ai, bi, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* da = sweep_buf(ai))
            for (size_t i = 0; i < n; ++i) da[i] += g[i] * bi->data[i];
        if (float* db = sweep_buf(bi))
            for (size_t i = 0; i < n; ++i) db[i] += g[i] * ai->data[i];
    });
}

Tensor scale(const Tensor& x, float c) {
    const size_t n = static_cast<size_t>(x.numel());
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = c * x.data()[i];
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out(x.shape(), std::move(out), rg, {xi}, [xi, c, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (size_t i = 0; i < n; ++i) dx[i] += c * g[i];
    });
}

Tensor add_scalar(const Tensor& x, float c) {
    const size_t n = static_cast<size_t>(x.numel());
    std::vector<float> out(x.data().begin(), x.data().end());
    for (auto& v : out) v += c;
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out(x.shape(), std::move(out), rg, {xi}, [xi, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (size_t i = 0; i < n; ++i) dx[i] += g[i];
    });
}

Tensor add_bcast_row(const Tensor& x, const Tensor& v) {
    auto [rows, cols] = rows_cols(*x.impl());
    if (v.numel() != cols)
        throw ShapeError("add_bcast_row: vector " + shape_str(v.shape()) +
                         " does not match row width of " + shape_str(x.shape()));
    std::vector<float> out(x.data().begin(), x.data().end());
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c)
            out[static_cast<size_t>(r * cols + c)] += v.data()[static_cast<size_t>(c)];
    bool rg = any_requires_grad({&x, &v});
    auto xi = x.impl(), vi = v.impl();
    return make_out(x.shape(), std::move(out), rg, {xi, vi}, [xi, vi, rows, cols](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t i = 0; i < rows * cols; ++i) dx[i] += g[i];
        if (float* dv = sweep_buf(vi))
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c) dv[c] += g[r * cols + c];
    });
}

Tensor mul_bcast_row(const Tensor& x, const Tensor& v) {
    auto [rows, cols] = rows_cols(*x.impl());
    if (v.numel() != cols)
        throw ShapeError("mul_bcast_row: vector " + shape_str(v.shape()) +
                         " does not match row width of " + shape_str(x.shape()));
    std::vector<float> out(static_cast<size_t>(rows * cols));
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c)
            out[static_cast<size_t>(r * cols + c)] =
                x.data()[static_cast<size_t>(r * cols + c)] * v.data()[static_cast<size_t>(c)];
    bool rg = any_requires_grad({&x, &v});
    auto xi = x.impl(), vi = v.impl();
    return make_out(x.shape(), std::move(out), rg, {xi, vi}, [xi, vi, rows, cols](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c)
                    dx[r * cols + c] += g[r * cols + c] * vi->data[static_cast<size_t>(c)];
        if (float* dv = sweep_buf(vi))
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c)
                    dv[c] += g[r * cols + c] * xi->data[static_cast<size_t>(r * cols + c)];
    });
}

Tensor scale_by_scalar(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw ShapeError("scale_by_scalar: scale must be a 1-element tensor");
    const float c = s.value();
    const size_t n = static_cast<size_t>(x.numel());
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = c * x.data()[i];
    bool rg = any_requires_grad({&x, &s});
    auto xi = x.impl(), si = s.impl();
    return make_out(x.shape(), std::move(out), rg, {xi, si}, [xi, si, c, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (size_t i = 0; i < n; ++i) dx[i] += c * g[i];
        if (float* ds = sweep_buf(si)) {
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) acc += static_cast<double>(g[i]) * xi->data[i];
            ds[0] += static_cast<float>(acc);
        }
    });
}

Tensor scale_rows_const(const Tensor& x, const std::vector<float>& w) {
    auto [rows, cols] = rows_cols(*x.impl());
    if (static_cast<std::int64_t>(w.size()) != rows)
        throw ShapeError("scale_rows_const: weight count " + std::to_string(w.size()) +
                         " does not match rows of " + shape_str(x.shape()));
    std::vector<float> out(static_cast<size_t>(rows * cols));
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c)
            out[static_cast<size_t>(r * cols + c)] =
                w[static_cast<size_t>(r)] * x.data()[static_cast<size_t>(r * cols + c)];
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out(x.shape(), std::move(out), rg, {xi}, [xi, w, rows, cols](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c)
                    dx[r * cols + c] += w[static_cast<size_t>(r)] * g[r * cols + c];
    });
}

Tensor relu(const Tensor& x) {
    const size_t n = static_cast<size_t>(x.numel());
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = std::max(0.f, x.data()[i]);
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out(x.shape(), std::move(out), rg, {xi}, [xi, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (size_t i = 0; i < n; ++i) dx[i] += xi->data[i] > 0.f ? g[i] : 0.f;
    });
}

Tensor sigmoid(const Tensor& x) {
    const size_t n = static_cast<size_t>(x.numel());
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        float v = x.data()[i];
        out[i] = v >= 0.f ? 1.f / (1.f + std::exp(-v)) : std::exp(v) / (1.f + std::exp(v));
    }
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    auto yi = std::make_shared<std::vector<float>>(out);
    return make_out(x.shape(), std::move(out), rg, {xi}, [xi, yi, n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (size_t i = 0; i < n; ++i) {
                float y = (*yi)[i];
                dx[i] += g[i] * y * (1.f - y);
            }
    });
}

Tensor softmax_lastdim(const Tensor& x) {
    auto [rows, cols] = rows_cols(*x.impl());
    std::vector<float> out(static_cast<size_t>(rows * cols));
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* xr = x.data().data() + r * cols;
        float* yr = out.data() + r * cols;
        float mx = xr[0];
        for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        double denom = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            denom += yr[c];
        }
        float inv = static_cast<float>(1.0 / denom);
        for (std::int64_t c = 0; c < cols; ++c) yr[c] *= inv;
    }
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    auto yi = std::make_shared<std::vector<float>>(out);
    return make_out(x.shape(), std::move(out), rg, {xi}, [xi, yi, rows, cols](const TensorImpl& o) {
        float* dx = sweep_buf(xi);
        if (!dx) return;
        const float* g = sweep_read(o);
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* y = yi->data() + r * cols;
            const float* gr = g + r * cols;
            double dot = 0.0;
            for (std::int64_t c = 0; c < cols; ++c) dot += static_cast<double>(gr[c]) * y[c];
            for (std::int64_t c = 0; c < cols; ++c)
                dx[r * cols + c] += (gr[c] - static_cast<float>(dot)) * y[c];
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    auto [rows, cols] = rows_cols(*x.impl());
    if (gain.numel() != cols || bias.numel() != cols)
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match row width of " + shape_str(x.shape()));
    if (eps <= 0.f) throw ContractError("layer_norm: eps must be positive");
    std::vector<float> out(static_cast<size_t>(rows * cols));
    std::vector<float> xhat(static_cast<size_t>(rows * cols));
    std::vector<float> inv_std(static_cast<size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* xr = x.data().data() + r * cols;
        double mean = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) mean += xr[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            double d = xr[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_std[static_cast<size_t>(r)] = inv;
        for (std::int64_t c = 0; c < cols; ++c) {
            float h = (xr[c] - static_cast<float>(mean)) * inv;
            xhat[static_cast<size_t>(r * cols + c)] = h;
            out[static_cast<size_t>(r * cols + c)] =
                h * gain.data()[static_cast<size_t>(c)] + bias.data()[static_cast<size_t>(c)];
        }
    }
    bool rg = any_requires_grad({&x, &gain, &bias});
    auto xi = x.impl(), gi = gain.impl(), bi = bias.impl();
    auto hs = std::make_shared<std::vector<float>>(std::move(xhat));
    auto is = std::make_shared<std::vector<float>>(std::move(inv_std));
    return make_out(x.shape(), std::move(out), rg, {xi, gi, bi},
                    [xi, gi, bi, hs, is, rows, cols](const TensorImpl& o) {
        const float* g = sweep_read(o);
        float* dx = sweep_buf(xi);
        float* dg = sweep_buf(gi);
        float* db = sweep_buf(bi);
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* gr = g + r * cols;
            const float* h = hs->data() + r * cols;
            double sum_q = 0.0, sum_qh = 0.0;
            for (std::int64_t c = 0; c < cols; ++c) {
                float q = gr[c] * gi->data[static_cast<size_t>(c)];
                sum_q += q;
                sum_qh += static_cast<double>(q) * h[c];
                if (dg) dg[c] += gr[c] * h[c];
                if (db) db[c] += gr[c];
            }
            if (dx) {
                float inv = (*is)[static_cast<size_t>(r)];
                float mq = static_cast<float>(sum_q / static_cast<double>(cols));
                float mqh = static_cast<float>(sum_qh / static_cast<double>(cols));
                for (std::int64_t c = 0; c < cols; ++c) {
                    float q = gr[c] * gi->data[static_cast<size_t>(c)];
                    dx[r * cols + c] += inv * (q - mq - h[c] * mqh);
                }
            }
        }
    });
}

// ---- concat / slice / gather -------------------------------------------

Tensor concat_lastdim(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ContractError("concat_lastdim: need at least one input");
    auto [rows0, cols0] = rows_cols(*xs[0].impl());
    (void)cols0;
    std::int64_t total_cols = 0;
    for (const Tensor& t : xs) {
        auto [r, c] = rows_cols(*t.impl());
        (void)c;
        if (r != rows0)
            throw ShapeError("concat_lastdim: row count mismatch " + shape_str(xs[0].shape()) + " vs " +
                             shape_str(t.shape()));
        total_cols += t.shape().back();
    }
    std::vector<int> out_shape = xs[0].shape();
    out_shape.back() = static_cast<int>(total_cols);
    std::vector<float> out(static_cast<size_t>(rows0 * total_cols));
    std::int64_t off = 0;
    for (const Tensor& t : xs) {
        std::int64_t c = t.shape().back();
        for (std::int64_t r = 0; r < rows0; ++r)
            std::copy_n(t.data().data() + r * c, c, out.data() + r * total_cols + off);
        off += c;
    }
    bool rg = false;
    std::vector<TensorImplPtr> inputs;
    inputs.reserve(xs.size());
    std::vector<std::int64_t> widths;
    for (const Tensor& t : xs) {
        inputs.push_back(t.impl());
        widths.push_back(t.shape().back());
        rg = rg || (g_autograd_enabled && t.requires_grad());
    }
    return make_out(out_shape, std::move(out), rg, inputs,
                    [inputs, widths, rows0, total_cols](const TensorImpl& o) {
        const float* g = sweep_read(o);
        std::int64_t off2 = 0;
        for (size_t i = 0; i < inputs.size(); ++i) {
            std::int64_t c = widths[i];
            if (float* din = sweep_buf(inputs[i])) {
                for (std::int64_t r = 0; r < rows0; ++r)
                    for (std::int64_t j = 0; j < c; ++j)
                        din[r * c + j] += g[r * total_cols + off2 + j];
            }
            off2 += c;
        }
    });
}

Tensor slice_lastdim(const Tensor& x, int start, int len) {
    auto [rows, cols] = rows_cols(*x.impl());
    if (start < 0 || len <= 0 || start + len > cols)
        throw ContractError("slice_lastdim: range [" + std::to_string(start) + ", " +
                            std::to_string(start + len) + ") outside width " + std::to_string(cols));
    std::vector<int> out_shape = x.shape();
    out_shape.back() = len;
    std::vector<float> out(static_cast<size_t>(rows * len));
    for (std::int64_t r = 0; r < rows; ++r)
        std::copy_n(x.data().data() + r * cols + start, len, out.data() + r * len);
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out(out_shape, std::move(out), rg, {xi}, [xi, rows, cols, start, len](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < len; ++j)
                    dx[r * cols + start + j] += g[r * len + j];
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& indices) {
    if (x.ndim() != 2) throw ShapeError("gather_rows expects rank-2, got " + shape_str(x.shape()));
    const std::int64_t n = x.dim(0), c = x.dim(1);
    for (std::int64_t idx : indices)
        if (idx < 0 || idx >= n)
            throw IndexError("gather_rows: row index " + std::to_string(idx) + " out of range [0, " +
                             std::to_string(n) + ")");
    const std::int64_t m = static_cast<std::int64_t>(indices.size());
    if (m == 0) throw ContractError("gather_rows: empty index list");
    std::vector<float> out(static_cast<size_t>(m * c));
    for (std::int64_t r = 0; r < m; ++r)
        std::copy_n(x.data().data() + indices[static_cast<size_t>(r)] * c, c, out.data() + r * c);
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out({static_cast<int>(m), static_cast<int>(c)}, std::move(out), rg, {xi},
                    [xi, indices, c](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (size_t r = 0; r < indices.size(); ++r)
                for (std::int64_t j = 0; j < c; ++j)
                    dx[indices[r] * c + j] += g[static_cast<std::int64_t>(r) * c + j];
    });
}

Tensor scatter_add_rows(const Tensor& x, const std::vector<std::int64_t>& indices, const Tensor& src) {
    if (x.ndim() != 2 || src.ndim() != 2)
        throw ShapeError("scatter_add_rows expects rank-2 operands");
    const std::int64_t n = x.dim(0), c = x.dim(1);
    if (src.dim(1) != c)
        throw ShapeError("scatter_add_rows: column mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(src.shape()));
    if (static_cast<std::int64_t>(indices.size()) != src.dim(0))
        throw ShapeError("scatter_add_rows: index count " + std::to_string(indices.size()) +
                         " does not match src rows " + std::to_string(src.dim(0)));
    for (std::int64_t idx : indices)
        if (idx < 0 || idx >= n)
            throw IndexError("scatter_add_rows: row index " + std::to_string(idx) + " out of range [0, " +
                             std::to_string(n) + ")");
    std::vector<float> out(x.data().begin(), x.data().end());
    for (size_t r = 0; r < indices.size(); ++r)
        for (std::int64_t j = 0; j < c; ++j)
            out[static_cast<size_t>(indices[r] * c + j)] +=
                src.data()[r * static_cast<size_t>(c) + static_cast<size_t>(j)];
    bool rg = any_requires_grad({&x, &src});
    auto xi = x.impl(), si = src.impl();
    return make_out(x.shape(), std::move(out), rg, {xi, si}, [xi, si, indices, c](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t i = 0; i < xi->numel(); ++i) dx[i] += g[i];
        if (float* ds = sweep_buf(si))
            for (size_t r = 0; r < indices.size(); ++r)
                for (std::int64_t j = 0; j < c; ++j)
                    ds[static_cast<std::int64_t>(r) * c + j] += g[indices[r] * c + j];
    });
}

Tensor group_max_rows(const Tensor& x, int k) {
    if (x.ndim() != 2) throw ShapeError("group_max_rows expects rank-2, got " + shape_str(x.shape()));
    const std::int64_t rows = x.dim(0), c = x.dim(1);
    if (k <= 0 || rows % k != 0)
        throw ContractError("group_max_rows: row count " + std::to_string(rows) +
                            " not divisible by group size " + std::to_string(k));
    const std::int64_t m = rows / k;
    std::vector<float> out(static_cast<size_t>(m * c));
    std::vector<std::int32_t> argmax(static_cast<size_t>(m * c));
    for (std::int64_t g = 0; g < m; ++g)
        for (std::int64_t j = 0; j < c; ++j) {
            float best = x.data()[static_cast<size_t>(g * k * c + j)];
            std::int32_t bi = 0;
            for (std::int64_t r = 1; r < k; ++r) {
                float v = x.data()[static_cast<size_t>((g * k + r) * c + j)];
                if (v > best) {
                    best = v;
                    bi = static_cast<std::int32_t>(r);
                }
            }
            out[static_cast<size_t>(g * c + j)] = best;
            argmax[static_cast<size_t>(g * c + j)] = bi;
        }
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    auto am = std::make_shared<std::vector<std::int32_t>>(std::move(argmax));
    return make_out({static_cast<int>(m), static_cast<int>(c)}, std::move(out), rg, {xi},
                    [xi, am, m, k, c](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t gi = 0; gi < m; ++gi)
                for (std::int64_t j = 0; j < c; ++j) {
                    std::int64_t r = (*am)[static_cast<size_t>(gi * c + j)];
                    dx[(gi * k + r) * c + j] += g[gi * c + j];
                }
    });
}

// ---- reductions (64-bit accumulation) -----------------------------------

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (float v : x.data()) s += v;
    bool rg = any_requires_grad({&x});
    auto xi = x.impl();
    return make_out({1}, {static_cast<float>(s)}, rg, {xi}, [xi](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t i = 0; i < xi->numel(); ++i) dx[i] += g[0];
    });
}

Tensor sum_over_axis(const Tensor& x, int axis) {
    if (x.ndim() != 2) throw ShapeError("sum_over_axis expects rank-2, got " + shape_str(x.shape()));
    if (axis != 0 && axis != 1) throw ContractError("sum_over_axis: axis must be 0 or 1");
    const std::int64_t rows = x.dim(0), cols = x.dim(1);
    auto xi = x.impl();
    bool rg = any_requires_grad({&x});
    if (axis == 0) {
        std::vector<float> out(static_cast<size_t>(cols));
        for (std::int64_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::int64_t r = 0; r < rows; ++r) s += x.data()[static_cast<size_t>(r * cols + c)];
            out[static_cast<size_t>(c)] = static_cast<float>(s);
        }
        return make_out({1, static_cast<int>(cols)}, std::move(out), rg, {xi},
                        [xi, rows, cols](const TensorImpl& o) {
            const float* g = sweep_read(o);
            if (float* dx = sweep_buf(xi))
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < cols; ++c) dx[r * cols + c] += g[c];
        });
    }
    std::vector<float> out(static_cast<size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) s += x.data()[static_cast<size_t>(r * cols + c)];
        out[static_cast<size_t>(r)] = static_cast<float>(s);
    }
    return make_out({static_cast<int>(rows), 1}, std::move(out), rg, {xi},
                    [xi, rows, cols](const TensorImpl& o) {
        const float* g = sweep_read(o);
        if (float* dx = sweep_buf(xi))
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c) dx[r * cols + c] += g[r];
    });
}

Tensor mean_over_axis(const Tensor& x, int axis) {
    const float inv = 1.f / static_cast<float>(axis == 0 ? x.dim(0) : x.dim(1));
    return scale(sum_over_axis(x, axis), inv);
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l1_loss");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        s += std::abs(static_cast<double>(a.data()[static_cast<size_t>(i)]) - b.data()[static_cast<size_t>(i)]);
    const float inv_n = 1.f / static_cast<float>(a.numel());
    bool rg = any_requires_grad({&a, &b});
    auto ai = a.impl(), bi = b.impl();
    return make_out({1}, {static_cast<float>(s) * inv_n}, rg, {ai, bi},
                    [ai, bi, inv_n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        float* da = sweep_buf(ai);
        float* db = sweep_buf(bi);
        for (std::int64_t i = 0; i < ai->numel(); ++i) {
            float d = ai->data[static_cast<size_t>(i)] - bi->data[static_cast<size_t>(i)];
            float sgn = d > 0.f ? 1.f : (d < 0.f ? -1.f : 0.f);
            if (da) da[i] += g[0] * inv_n * sgn;
            if (db) db[i] -= g[0] * inv_n * sgn;
        }
    });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse_loss");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a.data()[static_cast<size_t>(i)]) - b.data()[static_cast<size_t>(i)];
        s += d * d;
    }
    const float inv_n = 1.f / static_cast<float>(a.numel());
    bool rg = any_requires_grad({&a, &b});
    auto ai = a.impl(), bi = b.impl();
    return make_out({1}, {static_cast<float>(s) * inv_n}, rg, {ai, bi},
                    [ai, bi, inv_n](const TensorImpl& o) {
        const float* g = sweep_read(o);
        float* da = sweep_buf(ai);
        float* db = sweep_buf(bi);
        for (std::int64_t i = 0; i < ai->numel(); ++i) {
            float d = ai->data[static_cast<size_t>(i)] - bi->data[static_cast<size_t>(i)];
            if (da) da[i] += g[0] * inv_n * 2.f * d;
            if (db) db[i] -= g[0] * inv_n * 2.f * d;
        }
    });
}

// ---- custom ops and the reverse sweep -------------------------------------

namespace detail {
const float* sweep_grad_of(const TensorImpl& out) { return sweep_read(out); }
float* sweep_grad_buf(const TensorImplPtr& t) { return sweep_buf(t); }
}  // namespace detail

Tensor custom_op(std::vector<int> shape, std::vector<float> data,
                 std::vector<TensorImplPtr> inputs,
                 std::function<void(const TensorImpl&)> backward_fn) {
    bool rg = false;
    if (g_autograd_enabled)
        for (const auto& in : inputs)
            if (in->requires_grad) rg = true;
    return make_out(std::move(shape), std::move(data), rg, std::move(inputs), std::move(backward_fn));
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    TensorImplPtr root = loss.impl();
    if (!root->requires_grad) return;  // no parameters reachable

    // iterative post-order DFS; children visited in input order
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (node->node && child < node->node->inputs.size()) {
            TensorImpl* next = node->node->inputs[child].get();
            ++child;
            if (next->requires_grad && !visited.count(next)) {
                visited.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    SweepCtx ctx;
    g_sweep = &ctx;
    ctx.get(root.get())[0] = 1.f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (t->node && t->node->backward) t->node->backward(*t);
    }
    g_sweep = nullptr;

    // fold sweep results into persistent accumulators
    for (TensorImpl* t : order) {
        t->ensure_grad();
        auto it = ctx.bufs.find(t);
        if (it == ctx.bufs.end() || it->second.empty()) continue;
        const auto& buf = it->second;
        for (size_t i = 0; i < buf.size(); ++i) t->grad[i] += buf[i];
    }
}

}  // namespace mlpcm
