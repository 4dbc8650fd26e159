// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "flexsel/flops.hpp"
#include "flexsel/pipeline.hpp"
#include "flexsel/reference_model.hpp"
#include "flexsel/selector.hpp"
#include "json.hpp"

// JSON mappings for the configuration types. Missing keys keep their defaults.
namespace flexsel {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, layers, heads, hidden, ffn, visual_dim, vocab, classes,
                                                max_positions, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SelectorConfig, layers, heads, hidden, ffn, visual_dim, vocab,
                                                max_query, context_limit, linear_head, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HaystackSpec, frames, tokens_per_frame, needle_frames,
                                                needle_positions, payload, payload_count, payload_offset, visual_dim,
                                                generic_query, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TeacherSpec, layers, heads, peak_layer, peak, noise, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PartitionSpec, frames, max_per_set)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamWOptions, beta1, beta2, eps, weight_decay)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SoftRankConfig, epsilon)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SelectorTrainOptions, epochs, batch_size, lr, warmup_fraction, adamw,
                                                rank, shuffle, eval_every, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ClassifierTrainOptions, steps, batch_size, lr, adamw, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FlopsQuery, layers, reference_layer, heads, hidden, ffn, tokens,
                                                selected, sets, selector_layers, selector_hidden, selector_ffn)

void to_json(nlohmann::json& j, const SelectionConfig& c);
void from_json(const nlohmann::json& j, SelectionConfig& c);

}  // namespace flexsel
