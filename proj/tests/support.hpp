// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "mlpcm/rng.hpp"
#include "mlpcm/tensor.hpp"

namespace mlpcm::testing {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.f, float hi = 1.f,
                            bool requires_grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.mutable_data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

struct FdReport {
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
};

// Central finite differences against the analytic gradient. loss_fn must
// rebuild the forward graph from the current parameter values on every call.
// Relative error uses a unit floor: |a - f| / max(1, |a|, |f|).
inline FdReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  const std::vector<Tensor>& params, float h = 1e-3f,
                                  std::int64_t max_entries_per_tensor = -1) {
    for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
    Tensor loss = loss_fn();
    backward(loss);

    FdReport report;
    for (const Tensor& p : params) {
        auto data = const_cast<Tensor&>(p).mutable_data();
        auto grad = p.grad();
        std::int64_t n = p.numel();
        std::int64_t step = 1;
        if (max_entries_per_tensor > 0 && n > max_entries_per_tensor)
            step = n / max_entries_per_tensor;
        for (std::int64_t i = 0; i < n; i += step) {
            float saved = data[static_cast<size_t>(i)];
            data[static_cast<size_t>(i)] = saved + h;
            double lp = loss_fn().value();
            data[static_cast<size_t>(i)] = saved - h;
            double lm = loss_fn().value();
            data[static_cast<size_t>(i)] = saved;
            double fd = (lp - lm) / (2.0 * static_cast<double>(h));
            double an = grad.empty() ? 0.0 : grad[static_cast<size_t>(i)];
            double denom = std::max({1.0, std::abs(an), std::abs(fd)});
            report.max_rel_err = std::max(report.max_rel_err, std::abs(an - fd) / denom);
            ++report.checked;
        }
    }
    return report;
}

}  // namespace mlpcm::testing
