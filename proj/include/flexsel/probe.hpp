// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "flexsel/attention.hpp"
#include "flexsel/sequence.hpp"

namespace flexsel {

/// Needle-in-haystack video: background frames of Gaussian tokens with
/// `needle_frames` frames whose tokens carry the payload pattern (an offset
/// along the payload's own basis direction).
struct HaystackSpec {
    size_t frames = 32;
    size_t tokens_per_frame = 4;
    size_t needle_frames = 1;
    std::vector<size_t> needle_positions;  // frame indices; drawn from the seed when empty
    size_t payload = 0;
    size_t payload_count = 5;
    double payload_offset = 3.0;
    size_t visual_dim = 64;
    bool generic_query = false;  // ask "which payload?" instead of naming it
    uint64_t seed = 0;

    void validate() const;
    size_t vocab() const noexcept { return payload_count + 2; }
    size_t total_tokens() const noexcept { return frames * tokens_per_frame; }
};

struct Haystack {
    TokenSequence sequence;
    std::vector<size_t> relevant;  // global indices of needle-frame tokens, ascending
    std::vector<size_t> needle_frames;
    size_t payload = 0;
};

/// Query tokens are {0, 1 + payload}; with a generic query {0, payload_count + 1}.
Haystack build_haystack(const HaystackSpec& spec);

/// Positions of the k highest scores, ties to the lower position, in
/// descending score order.
std::vector<size_t> top_k_ranked(std::span<const double> scores, size_t k);

/// |TopK(scores) ∩ R| / |R| with R given as positions into `scores`.
double recall_at_k(std::span<const double> scores, const std::vector<size_t>& relevant, size_t k);

struct ProbeResult {
    std::vector<double> recall;  // one value per layer
    size_t k = 0;
    std::vector<size_t> relevant;
    size_t reference_layer = 0;  // argmax recall, ties to the lowest layer
};

ProbeResult profile_layers(const AttentionRecord& record, const std::vector<size_t>& relevant, size_t k);

/// CSV with header `layer,recall,K,is_reference`, one row per layer.
std::string probe_csv(const ProbeResult& result);

/// Projection of mean-centered rows onto the top principal components.
/// Component signs are fixed so the largest-magnitude loading is positive.
struct PcaResult {
    Tensor projection;                      // n x components
    std::vector<double> explained_variance;  // per component
    std::vector<double> explained_ratio;     // fraction of total variance
};

PcaResult pca_project(const Tensor& tokens, size_t components = 2);

}  // namespace flexsel
