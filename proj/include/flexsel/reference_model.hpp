// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>

#include "flexsel/attention.hpp"
#include "flexsel/decoder.hpp"
#include "flexsel/optimizer.hpp"

namespace flexsel {

struct ModelConfig {
    size_t layers = 8;
    size_t heads = 4;
    size_t hidden = 64;
    size_t ffn = 256;
    size_t visual_dim = 64;
    size_t vocab = 7;
    size_t classes = 5;  // needle payload classes for the classification head
    size_t max_positions = 1024;
    uint64_t seed = 0;

    void validate() const;
    DecoderShape decoder_shape() const;
};

struct ForwardResult {
    AttentionRecord record;
    Tensor hidden;  // final hidden states, (M + Q) x d
    Tensor logits;  // classifier output at the last position, 1 x classes
    uint64_t block_macs = 0;
};

/// Tiny causal transformer decoder with learned positions and a needle-class head.
class ReferenceModel {
public:
    ReferenceModel(ModelConfig config, NamedTensors weights);
    static ReferenceModel init(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return m_config; }
    const NamedTensors& weights() const noexcept { return m_weights; }
    NamedTensors& weights() noexcept { return m_weights; }

    /// Runs `layers_to_run` blocks (all when 0) and captures post-softmax
    /// attention rows of the query positions at every executed layer.
    ForwardResult forward_with_attention(const TokenSequence& seq, size_t layers_to_run = 0) const;

    /// Cross-entropy of the classifier head for one labelled sequence, with
    /// gradients written into `grads` when non-null.
    double classification_loss(const TokenSequence& seq, size_t label, NamedTensors* grads) const;

private:
    ModelConfig m_config;
    NamedTensors m_weights;
};

struct LabelledSequence {
    TokenSequence sequence;
    size_t label = 0;
};

struct ClassifierTrainOptions {
    size_t steps = 600;
    size_t batch_size = 8;
    double lr = 1e-3;
    AdamWOptions adamw;
    uint64_t seed = 0;
};

void save_reference_model(const ReferenceModel& model, const std::filesystem::path& path);
ReferenceModel load_reference_model(const std::filesystem::path& path);

/// Trains the classifier head end to end on labelled haystacks; returns the
/// mean loss of each step.
std::vector<double> train_classifier(ReferenceModel& model, const std::vector<LabelledSequence>& data,
                                     const ClassifierTrainOptions& options);

}  // namespace flexsel
