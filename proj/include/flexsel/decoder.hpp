// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "flexsel/autodiff.hpp"
#include "flexsel/rng.hpp"
#include "flexsel/sequence.hpp"

namespace flexsel {

using NamedTensors = std::map<std::string, Tensor>;
using NamedVars = std::map<std::string, ad::Var>;

/// Shape of a pre-norm transformer decoder stack shared by the reference
/// model and the lightweight selector.
struct DecoderShape {
    size_t layers = 0;
    size_t heads = 1;
    size_t hidden = 1;
    size_t ffn = 1;
    size_t visual_dim = 1;
    size_t vocab = 1;
    size_t max_positions = 0;  // learned positions over the whole sequence; 0 disables
    size_t max_query = 0;      // learned positions over query tokens only; 0 disables
    kernels::AttentionMask::Kind mask = kernels::AttentionMask::Kind::causal;
};

/// Fresh parameters: projections scaled by 1/sqrt(fan_in), norms at identity.
NamedTensors init_decoder(const DecoderShape& shape, Rng& rng);

/// Throws ConfigError when a parameter is missing or has the wrong shape.
void check_decoder_weights(const DecoderShape& shape, const NamedTensors& weights);

NamedVars bind_leaves(ad::Tape& tape, const NamedTensors& weights);
NamedVars bind_constants(ad::Tape& tape, const NamedTensors& weights);

struct DecoderPass {
    ad::Var hidden;                                // final normalized hidden states, n x d
    std::vector<std::vector<ad::Var>> attention;   // [layer][head] full n x n probabilities
    uint64_t block_macs = 0;                       // multiply-accumulates inside the blocks
};

/// Runs the first `layers_to_run` blocks (all when 0) over `seq`.
DecoderPass decoder_forward(ad::Tape& tape, const DecoderShape& shape, const NamedVars& params,
                            const TokenSequence& seq, size_t layers_to_run = 0);

}  // namespace flexsel
