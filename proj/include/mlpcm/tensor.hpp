// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mlpcm/error.hpp"

namespace mlpcm {

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// Provenance record for reverse-mode differentiation. Owned by the output
// tensor; the backward closure reads the output's grad and accumulates into
// the inputs' grads.
struct GraphNode {
    std::vector<TensorImplPtr> inputs;
    std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<GraphNode> node;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.f);
    }
};

// Value-semantic handle over a shared tensor buffer. The tape is rebuilt on
// every forward pass; tensors that feed a graph must not be mutated in place.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t numel() const { return impl_->numel(); }

    std::span<const float> data() const { return impl_->data; }
    std::span<float> mutable_data() { return impl_->data; }
    float value(std::int64_t i = 0) const { return impl_->data[static_cast<size_t>(i)]; }
    float at(int r, int c) const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const float> grad() const { return impl_->grad; }
    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.f);
    }

    // Same data, no graph linkage, no gradient.
    Tensor detach() const;

    TensorImplPtr impl() const { return impl_; }

private:
    TensorImplPtr impl_;
};

std::string shape_str(const std::vector<int>& s);

// Scoped switch that stops new ops from recording the tape (pure inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;

private:
    bool prev_;
};
bool autograd_enabled();

// ---- operator set -----------------------------------------------------
// All operations allocate a fresh output and, when any input requires grad
// (and autograd is enabled), record a backward closure.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float c);
Tensor add_scalar(const Tensor& x, float c);
// broadcast a length-C vector across the rows of an n x C tensor
Tensor add_bcast_row(const Tensor& x, const Tensor& v);
Tensor mul_bcast_row(const Tensor& x, const Tensor& v);
// multiply by a 1-element learnable tensor
Tensor scale_by_scalar(const Tensor& x, const Tensor& s);
// per-row constant weights (non-learnable), e.g. interpolation coefficients
Tensor scale_rows_const(const Tensor& x, const std::vector<float>& w);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

Tensor concat_lastdim(const std::vector<Tensor>& xs);
Tensor slice_lastdim(const Tensor& x, int start, int len);

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& indices);
Tensor scatter_add_rows(const Tensor& x, const std::vector<std::int64_t>& indices, const Tensor& src);
// max over K consecutive rows; x is (m*K) x C, result m x C
Tensor group_max_rows(const Tensor& x, int k);

Tensor sum_all(const Tensor& x);
Tensor sum_over_axis(const Tensor& x, int axis);
Tensor mean_over_axis(const Tensor& x, int axis);
Tensor l1_loss(const Tensor& a, const Tensor& b);
Tensor mse_loss(const Tensor& a, const Tensor& b);

// Reverse-mode sweep from a scalar loss. Grads accumulate; zero between
// steps. Repeated sweeps over one graph are deterministic.
void backward(const Tensor& loss);

// Extension point for compound ops implemented outside this module. The
// backward closure reads the output's sweep gradient via sweep_grad_of and
// accumulates into inputs via sweep_grad_buf (nullptr when an input does not
// participate in differentiation).
Tensor custom_op(std::vector<int> shape, std::vector<float> data,
                 std::vector<TensorImplPtr> inputs,
                 std::function<void(const TensorImpl&)> backward_fn);

namespace detail {
const float* sweep_grad_of(const TensorImpl& out);
float* sweep_grad_buf(const TensorImplPtr& t);
}  // namespace detail

}  // namespace mlpcm
