// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "flexsel/tensor.hpp"

namespace flexsel {

/// Post-softmax attention rows of every query position, for every layer and
/// head. Each row spans all M + Q positions of the sequence (masked positions
/// hold zero); the first M columns are the visual slice.
class AttentionRecord {
public:
    AttentionRecord() = default;
    AttentionRecord(size_t layers, size_t heads, size_t visual_count, size_t query_count);

    size_t layers() const noexcept { return m_layers; }
    size_t heads() const noexcept { return m_heads; }
    size_t visual_count() const noexcept { return m_visual; }
    size_t query_count() const noexcept { return m_query; }

    Tensor& rows(size_t layer, size_t head) { return m_rows[layer * m_heads + head]; }
    const Tensor& rows(size_t layer, size_t head) const { return m_rows[layer * m_heads + head]; }

    /// Largest |row sum - 1| over every stored row.
    double max_row_sum_error() const;

    bool operator==(const AttentionRecord& other) const = default;

private:
    size_t m_layers = 0;
    size_t m_heads = 0;
    size_t m_visual = 0;
    size_t m_query = 0;
    std::vector<Tensor> m_rows;
};

using RelevanceScores = std::vector<double>;

/// Head- and query-row-averaged attention to each visual token at `layer`
/// (0-based). Length equals the record's visual count.
RelevanceScores relevance_scores(const AttentionRecord& record, size_t layer);

}  // namespace flexsel
