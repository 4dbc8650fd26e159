// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "flexsel/errors.hpp"

namespace flexsel {

void adamw_step(NamedTensors& params, const NamedTensors& grads, AdamWMoments& moments, double lr,
                const AdamWOptions& options) {
    moments.steps += 1;
    const double t = static_cast<double>(moments.steps);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    for (auto& [name, value] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) {
            continue;
        }
        if (g->second.size() != value.size()) {
            throw DimensionError("gradient for " + name + " has shape " + shape_to_string(g->second.shape()));
        }
        Tensor& m = moments.first.try_emplace(name, value.shape()).first->second;
        Tensor& v = moments.second.try_emplace(name, value.shape()).first->second;
        const bool decay = value.rank() > 1;
        for (size_t i = 0; i < value.size(); ++i) {
            const double gi = g->second[i];
            m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * gi;
            v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * gi * gi;
            const double update = (m[i] / correction1) / (std::sqrt(v[i] / correction2) + options.eps);
            if (decay) {
                value[i] -= lr * options.weight_decay * value[i];
            }
            value[i] -= lr * update;
        }
    }
}

double scheduled_lr(double peak, uint64_t step, uint64_t total_steps, uint64_t warmup_steps) {
    if (warmup_steps > 0 && step < warmup_steps) {
        return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    if (total_steps <= warmup_steps) {
        return peak;
    }
    const double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
    return peak * (0.1 + 0.9 * cosine);
}

}  // namespace flexsel
