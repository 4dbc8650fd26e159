// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "flexsel/attention.hpp"
#include "flexsel/sequence.hpp"

namespace flexsel {

/// Deterministic attention oracle whose query-to-relevant concentration peaks
/// at one layer. Layers are 0-based.
struct PlantedSpec {
    size_t layers = 8;
    size_t heads = 4;
    std::vector<size_t> relevant;        // global indices of the relevant tokens
    size_t peak_layer = 4;
    std::vector<double> concentration;   // mass placed on the relevant set, per layer
    double noise = 0.05;                 // std of the Gaussian logit perturbation
    uint64_t seed = 0;

    /// Checks the profile (unique maximum at the peak, values in [0, 1]) and
    /// that the relevant set is nonempty.
    void validate() const;

    /// Peak mass `peak` at `peak_layer`; every other layer sits below the
    /// uniform share |R| / total_visual, rising linearly toward the peak.
    static PlantedSpec tent(size_t layers, size_t heads, std::vector<size_t> relevant, size_t total_visual,
                            size_t peak_layer, double peak = 0.9, double noise = 0.05, uint64_t seed = 0);
};

/// Per query row at layer l: mass c(l) spread evenly over the relevant tokens,
/// 1 - c(l) over the other visual tokens, each weight scaled by exp(noise * z)
/// and the row renormalized. z is a unit-variance projection of the token's
/// features on a direction drawn from (seed, layer, head), so identical
/// tokens receive identical perturbations. Query positions receive zero mass.
/// Every relevant index must be a global index present in `seq` (IndexError
/// otherwise). An empty relevant set puts all mass on the other tokens.
AttentionRecord planted_forward(const PlantedSpec& spec, const TokenSequence& seq);

/// Copy of `spec` whose relevant set keeps only indices present in `seq`.
PlantedSpec restrict_to(const PlantedSpec& spec, const TokenSequence& seq);

}  // namespace flexsel
