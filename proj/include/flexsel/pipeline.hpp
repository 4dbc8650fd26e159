// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flexsel/planted.hpp"
#include "flexsel/sequence.hpp"

namespace flexsel {

class ReferenceModel;
class Selector;

struct PartitionSpec {
    size_t frames = 1;         // N
    size_t max_per_set = 64;   // S

    size_t set_count() const;  // K = ceil(N / S)
};

/// Set j holds frames {i : i mod K == j}, ascending. Sets are disjoint and
/// cover [0, N).
std::vector<std::vector<size_t>> partition_frames(size_t frames, size_t max_per_set);

struct FrameSet {
    size_t index = 0;
    std::vector<size_t> frames;
    TokenSequence tokens;  // the set's visual tokens (original global indices) plus the query
};

/// Groups the visual tokens of `seq` by their frame set. Frame indices in
/// `seq` must lie in [0, spec.frames).
std::vector<FrameSet> build_frame_sets(const TokenSequence& seq, const PartitionSpec& spec);

/// Produces one relevance score per visual token of a frame-set sequence,
/// using only that sequence.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::vector<double> score(const TokenSequence& tokens) const = 0;
    virtual size_t context_limit() const = 0;  // max sequence length (visual + query)
    virtual std::string name() const = 0;
};

/// Planted oracle scored at one layer; the relevant set is restricted to the
/// tokens present in each frame set.
class PlantedScorer final : public Scorer {
public:
    PlantedScorer(PlantedSpec spec, size_t layer, size_t context_limit = 1u << 20);
    std::vector<double> score(const TokenSequence& tokens) const override;
    size_t context_limit() const override { return m_limit; }
    std::string name() const override { return "planted"; }

private:
    PlantedSpec m_spec;
    size_t m_layer;
    size_t m_limit;
};

/// Reference model run up to (and including) `layer`, scored from that layer.
class ReferenceScorer final : public Scorer {
public:
    ReferenceScorer(const ReferenceModel& model, size_t layer);
    std::vector<double> score(const TokenSequence& tokens) const override;
    size_t context_limit() const override;
    std::string name() const override { return "reference"; }

private:
    const ReferenceModel& m_model;
    size_t m_layer;
};

class SelectorScorer final : public Scorer {
public:
    explicit SelectorScorer(const Selector& selector) : m_selector(selector) {}
    std::vector<double> score(const TokenSequence& tokens) const override;
    size_t context_limit() const override;
    std::string name() const override { return "selector"; }

private:
    const Selector& m_selector;
};

/// Looks scores up by global token index.
class TableScorer final : public Scorer {
public:
    explicit TableScorer(std::map<size_t, double> scores) : m_scores(std::move(scores)) {}
    std::vector<double> score(const TokenSequence& tokens) const override;
    size_t context_limit() const override { return static_cast<size_t>(-1); }
    std::string name() const override { return "table"; }

private:
    std::map<size_t, double> m_scores;
};

/// Throws CapacityError naming the limit when the set does not fit the scorer.
std::vector<double> score_frame_set(const Scorer& scorer, const FrameSet& set);

/// k best positions (ties to the lower position), returned ascending.
std::vector<size_t> select_topk(std::span<const double> scores, size_t k);

struct SelectedToken {
    size_t global_index = 0;
    double score = 0.0;
    size_t set = 0;
};

struct SelectedTokens {
    std::vector<SelectedToken> tokens;  // ascending by global index
    size_t budget = 0;
    size_t set_count = 0;
    std::vector<size_t> per_set_k;
};

/// Merges per-set selections (already in global indices) into temporal order.
/// Throws InvalidArgument on an index selected by two sets.
SelectedTokens aggregate(const std::vector<std::vector<SelectedToken>>& per_set);

struct SelectionConfig {
    std::optional<size_t> budget;  // absolute token budget; overrides ratio
    double ratio = 0.0625;

    void validate() const;
    size_t resolve_budget(size_t total_tokens) const;
};

/// Per-set token quotas: floor(budget / K) each, remainder to the lowest
/// sets, then any quota beyond a set's size moved to the lowest sets that
/// still have room. Sums to min(budget, total).
std::vector<size_t> per_set_quota(size_t budget, const std::vector<size_t>& set_sizes);

/// Partition, score each set independently (OpenMP over sets), take the
/// per-set top-k, aggregate in temporal order.
SelectedTokens run_training_free(const TokenSequence& seq, const PartitionSpec& partition,
                                 const SelectionConfig& selection, const Scorer& scorer);

namespace serial {
SelectedTokens run_training_free(const TokenSequence& seq, const PartitionSpec& partition,
                                 const SelectionConfig& selection, const Scorer& scorer);
}  // namespace serial

/// Runs the pipeline with an arbitrary set visiting order; used to show the
/// result does not depend on it.
SelectedTokens run_training_free_in_order(const TokenSequence& seq, const PartitionSpec& partition,
                                          const SelectionConfig& selection, const Scorer& scorer,
                                          const std::vector<size_t>& set_order);

}  // namespace flexsel
