// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlpcm/tensor.hpp"

namespace mlpcm {

// A named trainable tensor. Names encode the module path and are unique
// within one store.
struct Parameter {
    std::string name;
    Tensor tensor;
};

// Insertion-ordered parameter registry: the unit of checkpointing and
// optimization. Ordering is deterministic, so training is reproducible.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;

    std::vector<Parameter>& items() { return params_; }
    const std::vector<Parameter>& items() const { return params_; }
    size_t size() const { return params_.size(); }

    void zero_grad();
    void set_requires_grad(bool rg);
    std::int64_t total_elements() const;

    // copy values elementwise from another store (shapes must agree 1:1)
    void copy_values_from(const ParamStore& other);

private:
    std::vector<Parameter> params_;
};

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// First/second-moment buffers for one parameter tensor.
struct AdamSlot {
    std::vector<float> m, v;
};

struct AdamState {
    std::int64_t t = 0;
    std::vector<AdamSlot> slots;
};

// Standard Adam with bias correction on a single buffer.
void adam_update(std::span<float> param, std::span<const float> grad, AdamSlot& slot,
                 std::int64_t t, const AdamConfig& cfg);

// One optimizer step over every parameter of the store, in registry order.
// Parameters without an accumulated gradient are left untouched.
void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg);

}  // namespace mlpcm
