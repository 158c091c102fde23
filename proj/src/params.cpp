// SPDX-License-Identifier: Apache-2.0
#include "mlpcm/params.hpp"

#include <cmath>

namespace mlpcm {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (find(name)) throw ContractError("duplicate parameter name: " + name);
    params_.push_back({name, std::move(t)});
    params_.back().tensor.set_requires_grad(true);
    return params_.back().tensor;
}

Tensor* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p.tensor;
    return nullptr;
}

const Tensor* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p.tensor;
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void ParamStore::set_requires_grad(bool rg) {
    for (auto& p : params_) p.tensor.set_requires_grad(rg);
}

std::int64_t ParamStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (other.params_.size() != params_.size())
        throw ShapeError("copy_values_from: store sizes differ (" + std::to_string(params_.size()) +
                         " vs " + std::to_string(other.params_.size()) + ")");
    for (size_t i = 0; i < params_.size(); ++i) {
        const Tensor& src = other.params_[i].tensor;
        Tensor& dst = params_[i].tensor;
        if (src.shape() != dst.shape())
            throw ShapeError("copy_values_from: shape mismatch at " + params_[i].name);
        std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
    }
}

void adam_update(std::span<float> param, std::span<const float> grad, AdamSlot& slot,
                 std::int64_t t, const AdamConfig& cfg) {
    if (param.size() != grad.size())
        throw ShapeError("adam_update: param/grad sizes differ");
    if (slot.m.size() != param.size()) {
        slot.m.assign(param.size(), 0.f);
        slot.v.assign(param.size(), 0.f);
    }
    const float bc1 = 1.f - static_cast<float>(std::pow(cfg.beta1, static_cast<double>(t)));
    const float bc2 = 1.f - static_cast<float>(std::pow(cfg.beta2, static_cast<double>(t)));
    for (size_t i = 0; i < param.size(); ++i) {
        float g = grad[i];
        slot.m[i] = cfg.beta1 * slot.m[i] + (1.f - cfg.beta1) * g;
        slot.v[i] = cfg.beta2 * slot.v[i] + (1.f - cfg.beta2) * g * g;
        float mhat = slot.m[i] / bc1;
        float vhat = slot.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg) {
    if (state.slots.size() != params.size()) state.slots.resize(params.size());
    ++state.t;
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params.items()[i].tensor;
        if (!t.has_grad()) continue;
        adam_update(t.mutable_data(), t.grad(), state.slots[i], state.t, cfg);
    }
}

}  // namespace mlpcm
