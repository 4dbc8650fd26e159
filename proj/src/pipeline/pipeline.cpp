// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flexsel/errors.hpp"
#include "flexsel/probe.hpp"
#include "flexsel/reference_model.hpp"

namespace flexsel {

size_t PartitionSpec::set_count() const {
    if (frames < 1 || max_per_set < 1) {
        throw InvalidArgument("partition needs N >= 1 and S >= 1");
    }
    return (frames + max_per_set - 1) / max_per_set;
}

std::vector<std::vector<size_t>> partition_frames(size_t frames, size_t max_per_set) {
    const size_t k = PartitionSpec{frames, max_per_set}.set_count();
    std::vector<std::vector<size_t>> sets(k);
    for (size_t i = 0; i < frames; ++i) {
        sets[i % k].push_back(i);
    }
    return sets;
}

std::vector<FrameSet> build_frame_sets(const TokenSequence& seq, const PartitionSpec& spec) {
    const size_t k = spec.set_count();
    std::vector<std::vector<size_t>> positions(k);
    for (size_t p = 0; p < seq.visual_count(); ++p) {
        const size_t f = seq.frame_index[p];
        if (f >= spec.frames) {
            throw IndexError("token frame " + std::to_string(f) + " outside " + std::to_string(spec.frames) +
                             " frames");
        }
        positions[f % k].push_back(p);
    }
    const auto frames = partition_frames(spec.frames, spec.max_per_set);
    std::vector<FrameSet> sets(k);
    for (size_t j = 0; j < k; ++j) {
        sets[j].index = j;
        sets[j].frames = frames[j];
        sets[j].tokens = seq.subset(positions[j]);
    }
    return sets;
}

PlantedScorer::PlantedScorer(PlantedSpec spec, size_t layer, size_t context_limit)
    : m_spec(std::move(spec)), m_layer(layer), m_limit(context_limit) {
    if (layer >= m_spec.layers) {
        throw IndexError("scoring layer " + std::to_string(layer) + " outside " + std::to_string(m_spec.layers) +
                         " planted layers");
    }
}

std::vector<double> PlantedScorer::score(const TokenSequence& tokens) const {
    return relevance_scores(planted_forward(restrict_to(m_spec, tokens), tokens), m_layer);
}

ReferenceScorer::ReferenceScorer(const ReferenceModel& model, size_t layer) : m_model(model), m_layer(layer) {
    if (layer >= model.config().layers) {
        throw IndexError("scoring layer " + std::to_string(layer) + " outside " +
                         std::to_string(model.config().layers) + " model layers");
    }
}

std::vector<double> ReferenceScorer::score(const TokenSequence& tokens) const {
    return relevance_scores(m_model.forward_with_attention(tokens, m_layer + 1).record, m_layer);
}

size_t ReferenceScorer::context_limit() const {
    return m_model.config().max_positions;
}

std::vector<double> TableScorer::score(const TokenSequence& tokens) const {
    std::vector<double> out;
    out.reserve(tokens.visual_count());
    for (size_t g : tokens.global_index) {
        auto it = m_scores.find(g);
        if (it == m_scores.end()) {
            throw IndexError("no table score for token " + std::to_string(g));
        }
        out.push_back(it->second);
    }
    return out;
}

std::vector<double> score_frame_set(const Scorer& scorer, const FrameSet& set) {
    const size_t length = set.tokens.length();
    if (length > scorer.context_limit()) {
        throw CapacityError("frame set " + std::to_string(set.index) + " has " + std::to_string(length) +
                            " tokens, over the " + scorer.name() + " scorer's context limit of " +
                            std::to_string(scorer.context_limit()));
    }
    std::vector<double> scores = scorer.score(set.tokens);
    if (scores.size() != set.tokens.visual_count()) {
        throw DimensionError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(set.tokens.visual_count()) + " tokens");
    }
    return scores;
}

std::vector<size_t> select_topk(std::span<const double> scores, size_t k) {
    if (k < 1 || k > scores.size()) {
        throw InvalidArgument("select_topk: k = " + std::to_string(k) + " outside [1, " +
                              std::to_string(scores.size()) + "]");
    }
    std::vector<size_t> picked = top_k_ranked(scores, k);
    std::sort(picked.begin(), picked.end());
    return picked;
}

SelectedTokens aggregate(const std::vector<std::vector<SelectedToken>>& per_set) {
    SelectedTokens out;
    out.set_count = per_set.size();
    for (const auto& set : per_set) {
        out.per_set_k.push_back(set.size());
        out.tokens.insert(out.tokens.end(), set.begin(), set.end());
    }
    std::sort(out.tokens.begin(), out.tokens.end(),
              [](const SelectedToken& a, const SelectedToken& b) { return a.global_index < b.global_index; });
    for (size_t i = 1; i < out.tokens.size(); ++i) {
        if (out.tokens[i].global_index == out.tokens[i - 1].global_index) {
            throw InvalidArgument("token " + std::to_string(out.tokens[i].global_index) +
                                  " selected by more than one frame set");
        }
    }
    out.budget = out.tokens.size();
    return out;
}

void SelectionConfig::validate() const {
    if (budget && *budget < 1) {
        throw ConfigError("token budget must be at least 1");
    }
    if (!budget && !(ratio > 0.0 && ratio <= 1.0)) {
        throw ConfigError("selection ratio must lie in (0, 1]");
    }
}

size_t SelectionConfig::resolve_budget(size_t total_tokens) const {
    validate();
    if (budget) {
        return std::min(*budget, total_tokens);
    }
    const auto rounded = static_cast<size_t>(std::llround(ratio * static_cast<double>(total_tokens)));
    return std::clamp<size_t>(rounded, 1, total_tokens);
}

std::vector<size_t> per_set_quota(size_t budget, const std::vector<size_t>& set_sizes) {
    const size_t k = set_sizes.size();
    if (k == 0) {
        throw InvalidArgument("per_set_quota: no frame sets");
    }
    const size_t total = std::accumulate(set_sizes.begin(), set_sizes.end(), size_t{0});
    budget = std::min(budget, total);
    std::vector<size_t> quota(k, budget / k);
    for (size_t j = 0; j < budget % k; ++j) {
        quota[j] += 1;
    }
    size_t spill = 0;
    for (size_t j = 0; j < k; ++j) {
        if (quota[j] > set_sizes[j]) {
            spill += quota[j] - set_sizes[j];
            quota[j] = set_sizes[j];
        }
    }
    for (size_t j = 0; j < k && spill > 0; ++j) {
        const size_t room = set_sizes[j] - quota[j];
        const size_t moved = std::min(room, spill);
        quota[j] += moved;
        spill -= moved;
    }
    return quota;
}

namespace {

struct Prepared {
    std::vector<FrameSet> sets;
    std::vector<size_t> quota;
    size_t budget = 0;
};

Prepared prepare(const TokenSequence& seq, const PartitionSpec& partition, const SelectionConfig& selection) {
    seq.validate();
    Prepared p;
    p.sets = build_frame_sets(seq, partition);
    p.budget = selection.resolve_budget(seq.visual_count());
    if (p.budget < p.sets.size()) {
        throw ConfigError("token budget " + std::to_string(p.budget) + " is smaller than the " +
                          std::to_string(p.sets.size()) + " frame sets");
    }
    std::vector<size_t> sizes;
    for (const FrameSet& s : p.sets) {
        sizes.push_back(s.tokens.visual_count());
    }
    p.quota = per_set_quota(p.budget, sizes);
    return p;
}

std::vector<SelectedToken> select_in_set(const Scorer& scorer, const FrameSet& set, size_t quota) {
    std::vector<SelectedToken> picked;
    if (quota == 0) {
        return picked;
    }
    const std::vector<double> scores = score_frame_set(scorer, set);
    for (size_t pos : select_topk(scores, quota)) {
        picked.push_back({set.tokens.global_index[pos], scores[pos], set.index});
    }
    return picked;
}

SelectedTokens finish(const Prepared& p, const std::vector<std::vector<SelectedToken>>& per_set) {
    SelectedTokens out = aggregate(per_set);
    out.budget = p.budget;
    out.per_set_k = p.quota;
    return out;
}

}  // namespace

SelectedTokens run_training_free(const TokenSequence& seq, const PartitionSpec& partition,
                                 const SelectionConfig& selection, const Scorer& scorer) {
    const Prepared p = prepare(seq, partition, selection);
    const size_t k = p.sets.size();
    std::vector<std::vector<SelectedToken>> per_set(k);
    std::vector<std::exception_ptr> failures(k);
#pragma omp parallel for schedule(dynamic)
    for (size_t j = 0; j < k; ++j) {
        try {
            per_set[j] = select_in_set(scorer, p.sets[j], p.quota[j]);
        } catch (...) {
            failures[j] = std::current_exception();
        }
    }
    for (const auto& failure : failures) {
        if (failure) {
            std::rethrow_exception(failure);
        }
    }
    return finish(p, per_set);
}

SelectedTokens run_training_free_in_order(const TokenSequence& seq, const PartitionSpec& partition,
                                          const SelectionConfig& selection, const Scorer& scorer,
                                          const std::vector<size_t>& set_order) {
    const Prepared p = prepare(seq, partition, selection);
    std::vector<size_t> sorted = set_order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<size_t> expected(p.sets.size());
    std::iota(expected.begin(), expected.end(), size_t{0});
    if (sorted != expected) {
        throw InvalidArgument("set order must be a permutation of the frame sets");
    }
    std::vector<std::vector<SelectedToken>> per_set(p.sets.size());
    for (size_t j : set_order) {
        per_set[j] = select_in_set(scorer, p.sets[j], p.quota[j]);
    }
    return finish(p, per_set);
}

namespace serial {

SelectedTokens run_training_free(const TokenSequence& seq, const PartitionSpec& partition,
                                 const SelectionConfig& selection, const Scorer& scorer) {
    const Prepared p = prepare(seq, partition, selection);
    std::vector<std::vector<SelectedToken>> per_set(p.sets.size());
    for (size_t j = 0; j < p.sets.size(); ++j) {
        per_set[j] = select_in_set(scorer, p.sets[j], p.quota[j]);
    }
    return finish(p, per_set);
}

}  // namespace serial

}  // namespace flexsel
