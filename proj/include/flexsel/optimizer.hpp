// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "flexsel/decoder.hpp"

namespace flexsel {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// First and second moment estimates, keyed like the parameters they track.
struct AdamWMoments {
    NamedTensors first;
    NamedTensors second;
    uint64_t steps = 0;
};

/// One AdamW update with decoupled weight decay. Rank-1 parameters (norm
/// gains and biases) are not decayed.
void adamw_step(NamedTensors& params, const NamedTensors& grads, AdamWMoments& moments, double lr,
                const AdamWOptions& options);

/// Linear warmup over `warmup_steps`, then cosine decay to 10% of the peak rate.
double scheduled_lr(double peak, uint64_t step, uint64_t total_steps, uint64_t warmup_steps);

}  // namespace flexsel
