// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/attention.hpp"

#include <algorithm>
#include <cmath>

#include "flexsel/errors.hpp"

namespace flexsel {

AttentionRecord::AttentionRecord(size_t layers, size_t heads, size_t visual_count, size_t query_count)
    : m_layers(layers), m_heads(heads), m_visual(visual_count), m_query(query_count) {
    m_rows.assign(layers * heads, Tensor::matrix(query_count, visual_count + query_count));
}

double AttentionRecord::max_row_sum_error() const {
    double worst = 0.0;
    for (const Tensor& t : m_rows) {
        for (size_t i = 0; i < t.rows(); ++i) {
            double total = 0.0;
            for (double v : t.row(i)) {
                total += v;
            }
            worst = std::max(worst, std::abs(total - 1.0));
        }
    }
    return worst;
}

RelevanceScores relevance_scores(const AttentionRecord& record, size_t layer) {
    if (layer >= record.layers()) {
        throw IndexError("layer " + std::to_string(layer) + " outside record of " + std::to_string(record.layers()) +
                         " layers");
    }
    const size_t m = record.visual_count();
    RelevanceScores scores(m, 0.0);
    for (size_t h = 0; h < record.heads(); ++h) {
        const Tensor& rows = record.rows(layer, h);
        for (size_t q = 0; q < rows.rows(); ++q) {
            for (size_t i = 0; i < m; ++i) {
                scores[i] += rows(q, i);
            }
        }
    }
    const double norm = static_cast<double>(record.heads() * record.query_count());
    for (double& s : scores) {
        s /= norm;
    }
    return scores;
}

}  // namespace flexsel
